import builtins
import json
import threading

import pytest
from unittest import mock

from kgtrade import cli, config, file_archive, net, protocol
from kgtrade.protocol import SessionConfig
from kgtrade.test_blindsig import small_keys
from kgtrade.test_graph import EX, load_sample, sample_path
from kgtrade.test_protocol import patched_disclosure


class SellerThread(threading.Thread):
    """Serve one session from the sample Seller graph"""
    def __init__(self, channel):
        super().__init__(daemon=True)
        self.channel = channel
        self.result = None

    def run(self):
        offer = SessionConfig.from_file(sample_path('session.cfg'), workers=1)
        self.result = protocol.run_seller(offer, load_sample('seller.nt'),
                                          self.channel, small_keys(),
                                          small_keys(1))
        self.channel.close()


def run_buyer_cli(*extra, inputs=None):
    """Run `buyer` against a local Seller; returns (exit code, Seller)"""
    seller_end, buyer_end = net.loopback_pair(timeout=30)
    seller = SellerThread(seller_end)
    seller.start()
    argv = ['buyer', '--graph', sample_path('buyer.nt'), '--connect',
            'seller.example.org:7300', '--config',
            sample_path('session.cfg'), '--workers', '1'] + list(extra)
    with mock.patch.object(net, 'connect', return_value=buyer_end):
        if inputs is None:
            status = cli.main(argv)
        else:
            with mock.patch.object(builtins, 'input', side_effect=inputs):
                status = cli.main(argv)
    seller.join(30)
    return status, seller.result


def test_missing_graph_is_usage_error(tmp_path, capsys):
    status = cli.main(['stats', '--graph', str(tmp_path / 'absent.nt')])
    assert status == cli.EXIT_USAGE
    assert 'Cannot read graph' in capsys.readouterr().err


def test_malformed_graph_is_usage_error():
    assert cli.main(['stats', '--graph',
                     sample_path('malformed.nt')]) == cli.EXIT_USAGE


def test_undecodable_graph_is_usage_error(tmp_path):
    path = tmp_path / 'latin1.nt'
    path.write_bytes(b'<http://ex/a> <http://ex/p> "caf\xe9" .\n')
    assert cli.main(['stats', '--graph', str(path)]) == cli.EXIT_USAGE


def test_bad_override_is_usage_error():
    assert cli.main(['stats', '--graph', sample_path('two.nt'),
                     '--set', 'parts']) == cli.EXIT_USAGE
    assert cli.main(['stats', '--graph', sample_path('two.nt'),
                     '--set', 'no_such_key=1']) == cli.EXIT_USAGE


def test_stats(capsys):
    assert cli.main(['stats', '--graph', sample_path('two.nt'),
                     '--vocabulary']) == cli.EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc['statements'] == 2
    assert doc['distinct_languages'] == 1
    assert doc['vocabulary'] == [EX, EX + 'condition/', EX + 'drug/']


def test_stats_with_exclusions(capsys):
    cli.main(['stats', '--graph', sample_path('two.nt'), '--set',
              'exclude_predicates=http://example.org/med/label'])
    assert json.loads(capsys.readouterr().out)['statements'] == 1


def test_session_config_from_file_and_flags():
    args = cli.build_parser().parse_args(
        ['buyer', '--graph', 'g.nt', '--connect', 'h:1', '--config',
         sample_path('session.cfg'), '--buy', '3', '--set',
         'stats_after_signing=yes'])
    cfg = cli.session_config(args)
    assert (cfg.parts, cfg.buy, cfg.rsa_bits) == (4, 3, 1024)
    assert cfg.stats_after_signing
    assert cfg.metrics == ('PRED_OBJ_DESC', 'PREDICATES')


def test_buyer_session(tmp_path):
    out = tmp_path / 'report.json'
    status, seller = run_buyer_cli('--report', str(out))
    assert status == cli.EXIT_OK
    assert seller.outcome.state is protocol.SessionState.CLOSED
    rep = json.loads(out.read_text())
    assert rep['role'] == 'buyer'
    assert rep['outcome'] == str(seller.outcome)
    assert rep['intersection_size'] == 6
    assert rep['verification']['passed']
    assert [e['metric'] for e in rep['entropy']] == ['PRED_OBJ_DESC',
                                                     'PREDICATES']
    assert len(rep['parts_received']) == 2
    assert rep['traffic']['totals']['S->B'] > 0
    assert set(rep['leaks']['totals']) == {'S->B', 'B->S'}


def test_buyer_plain_baseline(capsys):
    status, _ = run_buyer_cli('--plain-baseline', '--verify', 'none')
    assert status == cli.EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep['plain_baseline']['overhead_ratio'] > 1
    assert 'verification' not in rep


def test_buyer_declines(capsys):
    status, seller = run_buyer_cli('--set', 'continue_after_step2=false')
    assert status == cli.EXIT_ABORTED
    assert seller.outcome.aborted
    rep = json.loads(capsys.readouterr().out)
    assert rep['aborted'] == {'step': 'step2',
                              'reason': protocol.USER_DECLINE}


def test_interactive_buyer(capsys):
    def _answer(prompt):
        return '' if prompt.startswith('Metrics') else 'y'
    status, _ = run_buyer_cli('--interactive', '--verify', 'fast',
                              inputs=_answer)
    assert status == cli.EXIT_OK
    out = capsys.readouterr().out
    assert 'Statements in common: 6' in out
    assert 'Available metrics: PRED_OBJ_DESC, PREDICATES' in out


def test_interactive_reprompts_then_declines(capsys):
    answers = iter(['y', 'BOGUS', 'predicates', 'maybe', 'n'])
    status, seller = run_buyer_cli(
        '--interactive', inputs=lambda prompt: next(answers))
    assert status == cli.EXIT_ABORTED
    assert seller.outcome.reason == protocol.USER_DECLINE
    out = capsys.readouterr().out
    assert 'Unknown metrics: BOGUS' in out
    rep = json.loads(out[out.index('{'):])
    assert rep['aborted']['step'] == 'step2'
    assert rep['config']['metrics'] == ['PRED_OBJ_DESC', 'PREDICATES']


def test_connect_failure():
    with mock.patch.object(net, 'connect',
                           side_effect=net.TransportError('refused')):
        status = cli.main(['buyer', '--graph', sample_path('buyer.nt'),
                           '--connect', 'h:1'])
    assert status == cli.EXIT_ABORTED


@pytest.fixture
def file_archive_dir(tmp_path):
    with mock.patch.object(config, 'archive_type', 'file'), \
            mock.patch.object(config, 'archive_dir', str(tmp_path)):
        yield tmp_path


def test_archive_and_verify(file_archive_dir, capsys):
    status, _ = run_buyer_cli('--archive', '--session-id', 's1',
                              '--verify', 'none')
    assert status == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)['session_id'] == 's1'

    for mode in ('exact', 'fast'):
        status = cli.main(['verify', '--session', 's1', '--graph',
                           sample_path('buyer.nt'), '--mode', mode,
                           '--workers', '1'])
        assert status == cli.EXIT_OK
        assert json.loads(capsys.readouterr().out)['passed']

    assert cli.main(['verify', '--session', 'nope', '--graph',
                     sample_path('buyer.nt')]) == cli.EXIT_USAGE


def test_verify_detects_tampered_archive(file_archive_dir, capsys):
    run_buyer_cli('--archive', '--session-id', 's2', '--verify', 'none')
    stored = file_archive.get_session('s2')
    lines = stored['disclosure']['graph'].split('\n')
    stored['disclosure']['graph'] = '\n'.join(lines[1:])
    file_archive.put_session('s2', **stored)
    capsys.readouterr()
    status = cli.main(['verify', '--session', 's2', '--graph',
                       sample_path('buyer.nt'), '--workers', '1'])
    assert status == cli.EXIT_VERIFICATION
    assert not json.loads(capsys.readouterr().out)['passed']


def test_verify_reports_unusable_archived_disclosure(file_archive_dir,
                                                     capsys):
    run_buyer_cli('--archive', '--session-id', 's3', '--verify', 'none')
    stored = file_archive.get_session('s3')
    stored['disclosure']['ot_seed'] = 'not hex'
    file_archive.put_session('s3', **stored)
    capsys.readouterr()
    status = cli.main(['verify', '--session', 's3', '--graph',
                       sample_path('buyer.nt'), '--workers', '1'])
    assert status == cli.EXIT_VERIFICATION
    doc = json.loads(capsys.readouterr().out)
    assert doc['checks'][0]['name'] == 'disclosure_complete'


def test_archive_command(file_archive_dir, capsys):
    file_archive.put_session('s4', role='buyer', report={'outcome': 'Closed'})
    file_archive.put_session('s5', role='buyer')
    assert cli.main(['archive', 'list']) == cli.EXIT_OK
    assert capsys.readouterr().out.split() == ['s4', 's5']
    assert cli.main(['archive', 'show', 's4']) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out) == {'outcome': 'Closed'}
    assert cli.main(['archive', 'delete', 's4']) == cli.EXIT_OK
    assert file_archive.list_sessions() == ['s5']
    assert cli.main(['archive', 'delete', 's4']) == cli.EXIT_USAGE
    assert cli.main(['archive', 'show']) == cli.EXIT_USAGE


def test_bad_session_id_is_usage_error(file_archive_dir):
    assert cli.main(['buyer', '--graph', sample_path('buyer.nt'),
                     '--connect', 'h:1', '--archive', '--session-id',
                     '../x']) == cli.EXIT_USAGE


def test_unknown_archive_type():
    with mock.patch.object(config, 'archive_type', 'tape'):
        assert cli.main(['verify', '--session', 's', '--graph',
                         sample_path('buyer.nt')]) == cli.EXIT_USAGE
        assert cli.main(['archive', 'list']) == cli.EXIT_USAGE


def test_exit_status():
    result = mock.Mock(verification=None)
    result.outcome.aborted = False
    assert cli.exit_status(result) == cli.EXIT_OK
    result.verification = mock.Mock(passed=False)
    assert cli.exit_status(result) == cli.EXIT_VERIFICATION
    result.outcome.aborted = True
    assert cli.exit_status(result) == cli.EXIT_ABORTED


def test_seller_session(tmp_path):
    seller_end, buyer_end = net.loopback_pair(timeout=30)
    results = {}

    def _buyer():
        cfg = SessionConfig.from_file(sample_path('session.cfg'), workers=1)
        results['buyer'] = protocol.run_buyer(cfg, load_sample('buyer.nt'),
                                              buyer_end)
        buyer_end.close()

    thread = threading.Thread(target=_buyer, daemon=True)
    out = tmp_path / 'seller.json'
    with mock.patch.object(config, 'min_rsa_bits', 1024), \
            mock.patch.object(net, 'listen', return_value=seller_end):
        thread.start()
        status = cli.main(['seller', '--graph', sample_path('seller.nt'),
                           '--listen', '127.0.0.1:0', '--config',
                           sample_path('session.cfg'), '--workers', '1',
                           '--report', str(out)])
    thread.join(30)
    assert status == cli.EXIT_OK
    assert results['buyer'].verification.passed
    rep = json.loads(out.read_text())
    assert rep['role'] == 'seller'
    assert rep['outcome'] == 'Closed'


def test_listen_failure():
    with mock.patch.object(net, 'listen',
                           side_effect=net.TransportError('in use')):
        status = cli.main(['seller', '--graph', sample_path('seller.nt')])
    assert status == cli.EXIT_ABORTED


def test_bench(tmp_path, capsys):
    out = tmp_path / 'bench.json'
    with mock.patch.object(config, 'min_rsa_bits', 1024):
        status = cli.main(['bench', '--sizes', '40,80', '--rsa-bits', '1024',
                           '--workers', '1', '--report', str(out)])
    assert status == cli.EXIT_OK
    assert 'statements' in capsys.readouterr().out
    doc = json.loads(out.read_text())
    assert [r['statements'] for r in doc['rows']] == [40, 80]
    assert all(r['outcome'] == 'Closed' for r in doc['rows'])


def test_bench_bad_sizes():
    assert cli.main(['bench', '--sizes', '40,many']) == cli.EXIT_USAGE


def test_incomplete_disclosure_exits_with_verification_failure(capsys):
    with patched_disclosure(key=None):
        status, seller = run_buyer_cli()
    assert status == cli.EXIT_VERIFICATION
    assert seller.outcome.state is protocol.SessionState.CLOSED
    rep = json.loads(capsys.readouterr().out)
    assert rep['outcome'] == 'Closed'
    assert rep['verification']['checks'][0]['name'] == 'disclosure_complete'
