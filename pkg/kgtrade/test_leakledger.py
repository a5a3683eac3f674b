import random

import pytest

from kgtrade import bench, entropy, leakledger
from kgtrade.entropy import EntropyMetric
from kgtrade.leakledger import AdversaryModel, Direction, LeakLedger
from kgtrade.test_blindsig import small_keys
from kgtrade.test_entropy import run_metric
from kgtrade.test_graph import load_sample


def test_fair_desc_row():
    ledger = leakledger.record_entropy_metric(
        LeakLedger(), EntropyMetric.PRED_OBJ_DESC, AdversaryModel.FAIR,
        i_s=100, e_s=80, e_b=50)
    assert ledger.total(Direction.S_TO_B, 'ILAmount') == 2
    assert ledger.total(Direction.S_TO_B, 'ILStructural') == 2
    assert ledger.total(Direction.S_TO_B, 'ILStatements') == 0
    assert ledger.total(Direction.B_TO_S, 'ILAmount') == 0


def test_intersection_fair():
    ledger = leakledger.record_intersection(LeakLedger(), 5, 3, 2, 4, 8)
    assert ledger.total(Direction.S_TO_B, 'ILStatements') == 15
    assert ledger.total(Direction.S_TO_B, 'ILStructural') == 0
    assert ledger.total(Direction.S_TO_B, 'ILSubjects') == 3
    assert ledger.total(Direction.B_TO_S, 'ILStructural') == 1
    assert not ledger.violations()


def test_intersection_curious_adds_size_estimate():
    ledger = leakledger.record_intersection(
        LeakLedger(AdversaryModel.CURIOUS), 5)
    assert ledger.total(Direction.S_TO_B, 'ILStructural') == 1
    assert ledger.total(Direction.S_TO_B, 'ILAmount') == 16


def test_curious_ceilings_generalize_by_arity():
    ledger = leakledger.record_entropy_metric(
        LeakLedger(AdversaryModel.CURIOUS), 'STATEMENTS', i_s=10, e_s=8,
        e_b=5)
    ceilings = {e.metric: e.ceiling for e in ledger.entries
                if e.direction is Direction.S_TO_B}
    assert ceilings['ILStatements'] == 30
    assert ceilings['ILResources'] == 15
    assert ceilings['ILStructural'] == 3
    assert ceilings['ILAmount'] == 30 + 3 + 5
    assert ledger.total(Direction.B_TO_S, 'ILStructural') == 1


def test_position_metrics_outside_projection_are_zero():
    ledger = leakledger.record_entropy_metric(
        LeakLedger(AdversaryModel.CURIOUS), EntropyMetric.PREDICATES,
        i_s=10, e_s=4, e_b=3)
    ceilings = {e.metric: e.ceiling for e in ledger.entries}
    assert ceilings['ILPredicates'] == 3
    assert 'ILSubjects' not in ceilings


def test_unknown_metric():
    with pytest.raises(leakledger.UnknownMetricError):
        leakledger.record_entropy_metric(LeakLedger(), 'NOPE')


def test_adversary_model_parse():
    assert AdversaryModel.parse('Curious ') is AdversaryModel.CURIOUS
    with pytest.raises(ValueError):
        AdversaryModel.parse('evil')


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(50))
def test_curious_desc_never_exceeds_ceilings(seed):
    rng = random.Random(seed)
    seller, buyer = bench.generate_pair(rng.randint(40, 150),
                                        rng.random(), seed=seed)
    metric = EntropyMetric.PRED_OBJ_DESC
    res = run_metric(seller, buyer, metric, small_keys())
    ledger = LeakLedger(AdversaryModel.CURIOUS)
    leakledger.record_entropy_metric(
        ledger, metric, i_s=res.seller_total, e_s=res.seller_cells,
        e_b=entropy.derive_multiset(buyer, metric).distinct,
        matched=res.matched, matched_seller_count=res.matched_seller_count)
    assert not ledger.violations()


def test_ot_and_statistics():
    ledger = LeakLedger()
    leakledger.record_statistics_shared(ledger, 33)
    leakledger.record_vocabulary_shared(ledger)
    leakledger.record_ot(ledger, [load_sample('two.nt')])
    assert ledger.total(Direction.S_TO_B, 'ILStructural') == 34
    assert ledger.total(Direction.S_TO_B, 'ILStatements') == 6
    assert ledger.step_entries('step4')


def test_requests_served():
    fair = LeakLedger()
    leakledger.record_requests_served(fair, 'step2')
    leakledger.record_requests_served(fair, 'step3')
    assert fair.total(Direction.B_TO_S, 'ILStructural') == 1
    curious = LeakLedger(AdversaryModel.CURIOUS)
    leakledger.record_requests_served(curious, 'step3')
    assert curious.total(Direction.B_TO_S, 'ILStructural') == 1


def test_report_is_ordered():
    ledger = leakledger.record_intersection(LeakLedger(), 2)
    doc = leakledger.report(ledger)
    assert list(doc) == ['model', 'totals', 'ceilings', 'entries']
    assert list(doc['totals']) == ['S->B', 'B->S']
    assert list(doc['totals']['S->B']) == list(leakledger.METRICS)
