"""Command line entry points

    trade.py seller --graph seller.nt --listen 0.0.0.0:7300
    trade.py buyer --graph buyer.nt --connect seller.example.org:7300
    trade.py bench --sizes 1000,2000,4000
    trade.py stats --graph seller.nt
    trade.py verify --session 3f2a... --graph buyer.nt
    trade.py archive list

Exit codes: 0 success, 2 usage error or unreadable graph, 3 the session
was aborted, 4 verification failed.
"""
import argparse
import json
import logging
import sys
import uuid

from kgtrade import (archive, bench, config, graphstats, net, protocol,
                     report, verify)
from kgtrade.graph import NTriplesError, load_graph, parse_ntriples

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ABORTED = 3
EXIT_VERIFICATION = 4


class UsageError(Exception):
    pass


def exit_status(result):
    """Map a finished session to the process exit code"""
    if result.outcome.aborted:
        return EXIT_ABORTED
    if result.verification is not None and not result.verification.passed:
        return EXIT_VERIFICATION
    return EXIT_OK


def _read_graph(source):
    warnings = {}
    try:
        g = load_graph(source, warnings=warnings)
    except (OSError, RuntimeError, NTriplesError) as err:
        raise UsageError('Cannot read graph %s: %s' % (source, err)) from err
    if warnings.get('blank_node_lines'):
        log.warning('Dropped %d lines with blank nodes from %s',
                    warnings['blank_node_lines'], source)
    return g


def session_config(args):
    overrides = {
        'metrics': args.metrics,
        'parts': args.parts,
        'buy': args.buy,
        'psi_fpr': args.fpr,
        'counting_fpr': args.counting_fpr,
        'signature_budget': args.budget,
        'workers': args.workers,
        'rsa_bits': args.rsa_bits,
        'partition_strategy': args.partition_strategy,
        'verify': args.verify,
    }
    try:
        for item in args.set or ():
            key, sep, value = item.partition('=')
            if not sep:
                raise protocol.ConfigError('--set expects KEY=VALUE, got %r'
                                           % item)
            overrides[key.strip()] = protocol.SessionConfig.coerce(
                key.strip(), value)
        if args.config:
            return protocol.SessionConfig.from_file(args.config, **overrides)
        return protocol.SessionConfig().with_overrides(**overrides).validate()
    except (OSError, protocol.ConfigError) as err:
        raise UsageError(str(err)) from err


def _ask_yes_no(question):
    while True:
        answer = input('%s [y/n] ' % question).strip().lower()
        if answer in ('y', 'yes'):
            return True
        if answer in ('n', 'no'):
            return False


def _describe(step, info):
    if step == 'step1':
        stats = info['statistics']
        lines = ['%s: %s' % (name, stats[name]) for name in graphstats.CATALOG]
        if info.get('vocabulary'):
            lines.append('vocabulary: %s' % ', '.join(info['vocabulary']))
        return '\n'.join(lines)
    if step == 'step2':
        if info['intersection'] is None:
            return 'The Seller skipped the intersection.'
        return 'Statements in common: %d' % len(info['intersection'])
    if step == 'step3':
        return '\n'.join('%s: buyer %.4f bits, merged %.4f bits, gain %+.4f'
                         % (r.metric.name, r.h_buyer, r.h_merged_estimate,
                            r.gain) for r in info['entropy'])
    if step == 'step4':
        return 'Received parts %s' % ', '.join(
            '%d (%d statements)' % (p.index, len(p.statements))
            for p in info['parts'])
    return ''


def interactive_decide(step, info):
    print(_describe(step, info))
    return _ask_yes_no('Continue after %s?' % step)


def interactive_metrics(metrics, statistics):
    print('Available metrics: %s' % ', '.join(metrics))
    while True:
        answer = input('Metrics to compute (comma separated, '
                       'empty for all): ').strip()
        if not answer:
            return list(metrics)
        chosen = [m.strip().upper() for m in answer.split(',') if m.strip()]
        if set(chosen) <= set(metrics):
            return chosen
        print('Unknown metrics: %s' % ', '.join(set(chosen) - set(metrics)))


def _tls(args, server_side):
    if server_side and not args.certfile:
        return None
    if not server_side and not (args.tls or args.cafile or args.certfile):
        return None
    return net.tls_context(server_side, args.certfile, args.keyfile,
                           args.cafile)


def _finish(args, result, plain_baseline=None):
    rep = report.build(result, plain_baseline)
    if args.archive:
        session_id = args.session_id or uuid.uuid4().hex
        _archive().put_session(
            session_id, role=result.role, report=rep,
            transcript=result.transcript.to_document(),
            disclosure=(result.disclosure.to_document()
                        if result.disclosure else None),
            findings=(result.findings.to_document()
                      if result.findings else None))
        rep['session_id'] = session_id
    if args.report:
        report.write(rep, args.report)
    else:
        print(report.dumps(rep))
    status = exit_status(result)
    log.info('%s finished with %s (exit %d)', result.role, result.outcome,
             status)
    return status


def _check_archive_args(args):
    if not args.archive:
        return
    _archive()
    if args.session_id:
        try:
            archive.check_session_id(args.session_id)
        except ValueError as err:
            raise UsageError(str(err)) from err


def cmd_seller(args):
    _check_archive_args(args)
    g = _read_graph(args.graph)
    cfg = session_config(args)
    try:
        channel = net.listen(args.listen, 'seller', _tls(args, True))
    except net.TransportError as err:
        log.error('%s', err)
        return EXIT_ABORTED
    with channel:
        result = protocol.run_seller(cfg, g, channel)
    if args.plain_baseline:
        log.warning('The plain baseline needs both graphs; '
                    'run it on the Buyer side')
    return _finish(args, result)


def cmd_buyer(args):
    _check_archive_args(args)
    g = _read_graph(args.graph)
    cfg = session_config(args)
    try:
        channel = net.connect(args.connect, 'buyer', _tls(args, False),
                              args.server_hostname)
    except net.TransportError as err:
        log.error('%s', err)
        return EXIT_ABORTED
    kwargs = {}
    if args.interactive:
        kwargs = {'decide': interactive_decide,
                  'choose_metrics': interactive_metrics}
    with channel:
        result = protocol.run_buyer(cfg, g, channel, **kwargs)
    plain = None
    if args.plain_baseline:
        if result.disclosure is None:
            log.warning('No disclosure received; skipping the plain baseline')
        else:
            plain = protocol.run_plain_baseline(
                result.config, parse_ntriples(result.disclosure.graph_text),
                g)
    return _finish(args, result, plain)


def cmd_bench(args):
    cfg = session_config(args)
    try:
        sizes = [int(s) for s in args.sizes.split(',') if s.strip()]
    except ValueError:
        raise UsageError('--sizes expects integers, got %r'
                         % args.sizes) from None
    result = bench.run_bench(cfg, sizes, args.trials, args.overlap,
                             args.plain_baseline)
    print(result.table())
    if args.report:
        report.write(result.as_dict(), args.report)
    return EXIT_OK


def cmd_stats(args):
    g = protocol.prepared_graph(_read_graph(args.graph), session_config(args))
    doc = graphstats.compute_statistics(g).as_dict()
    if args.vocabulary:
        doc['vocabulary'] = graphstats.vocabulary(g)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _archive():
    try:
        return archive.backend()
    except ImportError as err:
        raise UsageError(str(err)) from err


def _stored_session(backend, session_id):
    try:
        return backend.get_session(session_id)
    except (ValueError, archive.ArchiveError) as err:
        raise UsageError(str(err)) from err


def cmd_verify(args):
    stored = _stored_session(_archive(), args.session)
    if stored.get('role') != 'buyer' or not stored.get('disclosure'):
        raise UsageError('Session %r holds no disclosure to verify'
                         % args.session)
    g = _read_graph(args.graph)
    transcript = protocol.Transcript.from_document(stored['transcript'])
    findings = None
    if stored.get('findings'):
        findings = protocol.Findings.from_document(stored['findings'])
    try:
        disclosure = verify.load_disclosure(stored['disclosure'],
                                            require_keys=args.mode == 'exact')
        result = verify.verify_disclosure(disclosure, transcript, g,
                                          args.mode, findings, args.workers)
    except verify.DisclosureError as err:
        result = verify.rejected(args.mode, err)
    print(json.dumps(result.as_dict(), indent=2))
    return EXIT_OK if result.passed else EXIT_VERIFICATION


def cmd_archive(args):
    backend = _archive()
    if args.action == 'list':
        for session_id in backend.list_sessions():
            print(session_id)
        return EXIT_OK
    if not args.session:
        raise UsageError('archive %s needs a session ID' % args.action)
    if args.action == 'show':
        stored = _stored_session(backend, args.session)
        print(json.dumps(stored.get('report', {}), indent=2))
    else:
        try:
            backend.delete_session(args.session)
        except (ValueError, archive.ArchiveError) as err:
            raise UsageError(str(err)) from err
    return EXIT_OK


def _add_session_args(parser):
    parser.add_argument('--config', help='Session config file (key = value)')
    parser.add_argument('--metrics',
                        help='Comma separated entropy metrics')
    parser.add_argument('--parts', type=int, help='Number of parts (n)')
    parser.add_argument('--buy', type=int, help='Parts to buy (k)')
    parser.add_argument('--fpr', type=float,
                        help='False positive rate of the PSI filter')
    parser.add_argument('--counting-fpr', type=float,
                        help='False positive rate of the counting filters')
    parser.add_argument('--budget', type=int,
                        help='Most blind signatures the Seller will serve')
    parser.add_argument('--workers', type=int,
                        default=getattr(config, 'workers', None),
                        help='Worker processes for signing')
    parser.add_argument('--rsa-bits', type=int, help='RSA modulus size')
    parser.add_argument('--partition-strategy',
                        choices=['clustered', 'random'])
    parser.add_argument('--verify', choices=['exact', 'fast', 'none'],
                        help='How the Buyer checks the disclosure')
    parser.add_argument('--set', action='append', metavar='KEY=VALUE',
                        help='Override any session config field')


def _add_party_args(parser):
    parser.add_argument('--graph', required=True,
                        help='N-Triples file or http(s) URL')
    parser.add_argument('--report', help='Write the JSON report here')
    parser.add_argument('--plain-baseline', action='store_true',
                        help='Also measure the exchange without cryptography')
    parser.add_argument('--archive', action='store_true',
                        help='Archive the session for later verification')
    parser.add_argument('--session-id', help='ID under which to archive')
    parser.add_argument('--certfile', help='TLS certificate chain')
    parser.add_argument('--keyfile', help='TLS private key')
    parser.add_argument('--cafile', help='CA bundle for the peer certificate')
    _add_session_args(parser)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='trade.py',
        description='Estimate the value of merging knowledge graphs '
                    'without revealing them.',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    subparsers = parser.add_subparsers(dest='command', required=True)

    p = subparsers.add_parser('seller', help='Offer a graph for sale',
                              formatter_class=argparse.
                              ArgumentDefaultsHelpFormatter)
    p.add_argument('--listen', default='0.0.0.0:7300', help='host:port')
    _add_party_args(p)
    p.set_defaults(func=cmd_seller)

    p = subparsers.add_parser('buyer', help='Evaluate a Seller\'s graph',
                              formatter_class=argparse.
                              ArgumentDefaultsHelpFormatter)
    p.add_argument('--connect', required=True, help='host:port')
    p.add_argument('--interactive', action='store_true',
                   help='Ask before continuing after each step')
    p.add_argument('--tls', action='store_true',
                   help='Use TLS with the system CA bundle')
    p.add_argument('--server-hostname',
                   help='Name expected in the Seller certificate')
    _add_party_args(p)
    p.set_defaults(func=cmd_buyer)

    p = subparsers.add_parser('bench', help='Scaling benchmark on loopback',
                              formatter_class=argparse.
                              ArgumentDefaultsHelpFormatter)
    p.add_argument('--sizes', default=','.join(map(str, bench.DEFAULT_SIZES)),
                   help='Comma separated graph sizes in statements')
    p.add_argument('--trials', type=int, default=1)
    p.add_argument('--overlap', type=float, default=0.25,
                   help='Fraction of Buyer statements the Seller also has')
    p.add_argument('--plain-baseline', action='store_true')
    p.add_argument('--report', help='Write the JSON results here')
    _add_session_args(p)
    p.set_defaults(func=cmd_bench)

    p = subparsers.add_parser('stats', help='Print the statistics catalog')
    p.add_argument('--graph', required=True)
    p.add_argument('--vocabulary', action='store_true')
    _add_session_args(p)
    p.set_defaults(func=cmd_stats)

    p = subparsers.add_parser('verify', help='Verify an archived session')
    p.add_argument('--session', required=True, help='Archived session ID')
    p.add_argument('--graph', required=True, help='Your own graph')
    p.add_argument('--mode', choices=['exact', 'fast'], default='exact')
    p.add_argument('--workers', type=int,
                   default=getattr(config, 'workers', None))
    p.set_defaults(func=cmd_verify)

    p = subparsers.add_parser('archive', help='Manage archived sessions')
    p.add_argument('action', choices=['list', 'show', 'delete'])
    p.add_argument('session', nargs='?', help='Archived session ID')
    p.set_defaults(func=cmd_archive)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        log.error('%s', err)
        print('error: %s' % err, file=sys.stderr)
        return EXIT_USAGE
