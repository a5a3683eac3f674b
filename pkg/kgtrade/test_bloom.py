import numpy as np
import pytest

from kgtrade import bloom, wire


def _items(prefix, n):
    return [('%s-%d' % (prefix, i)).encode('ascii') for i in range(n)]


def test_optimal_params_formulas():
    params = bloom.optimal_params(1, 0.5)
    assert (params.m, params.k) == (2, 1)
    params = bloom.optimal_params(1000, 0.01)
    assert params.m == 9586
    assert params.k == 7


def test_params_validation():
    with pytest.raises(bloom.FilterParamsError):
        bloom.optimal_params(10, 0)
    with pytest.raises(bloom.FilterParamsError):
        bloom.optimal_params(10, 1)
    with pytest.raises(bloom.FilterParamsError):
        bloom.FilterParams(0, 1)
    with pytest.raises(bloom.FilterParamsError):
        bloom.FilterParams(8, 1, b'short')


def test_counting_params():
    opt = bloom.optimal_params(500, 1e-3)
    params = bloom.counting_params(500, 1e-3)
    assert params.k == 1
    assert params.m == opt.m * opt.k


def test_positions_depend_on_seed():
    a = bloom.FilterParams(1 << 20, 4, bytes(16))
    b = bloom.FilterParams(a.m, a.k, b'\x01' * 16)
    assert bloom.positions(a, b'item') == bloom.positions(a, b'item')
    assert bloom.positions(a, b'item') != bloom.positions(b, b'item')
    assert all(0 <= p < a.m for p in bloom.positions(a, b'item'))


def test_no_false_negatives():
    f = bloom.BloomFilter(bloom.optimal_params(1000, 1e-3))
    for item in _items('in', 1000):
        bloom.insert(f, item)
    assert all(item in f for item in _items('in', 1000))


@pytest.mark.parametrize('p', [1e-2, 1e-3, 1e-4])
def test_false_positive_rate(p):
    n = 2000
    f = bloom.BloomFilter(bloom.optimal_params(n, p))
    for item in _items('in', n):
        bloom.insert(f, item)
    outsiders = _items('out', 100000)
    hits = sum(bloom.contains(f, item) for item in outsiders)
    assert hits / len(outsiders) <= 2 * p


def test_estimate_cardinality_at_design_load():
    n = 5000
    f = bloom.BloomFilter(bloom.optimal_params(n, 1e-3))
    for item in _items('in', n):
        bloom.insert(f, item)
    assert abs(bloom.estimate_cardinality(f) - n) <= 0.05 * n


def test_estimate_cardinality_saturated():
    f = bloom.BloomFilter(bloom.FilterParams(4, 1))
    f.bits[:] = True
    with pytest.raises(bloom.SaturatedFilterError):
        bloom.estimate_cardinality(f)


def test_add_noise_is_reproducible():
    a = bloom.BloomFilter(bloom.optimal_params(100, 1e-3))
    b = bloom.BloomFilter(bloom.optimal_params(100, 1e-3))
    bloom.add_noise(a, 0.1, b'\x07' * 16)
    bloom.add_noise(b, 0.1, b'\x07' * 16)
    assert a == b
    assert 0 < a.popcount <= int(np.ceil(0.1 * a.params.m))


def test_filter_wire_form():
    f = bloom.BloomFilter(bloom.optimal_params(50, 1e-2, b'\x02' * 16))
    for item in _items('x', 50):
        bloom.insert(f, item)
    data = bloom.encode_filter(f)
    g = bloom.decode_filter(data)
    assert g == f
    assert g.inserted == 50
    assert bloom.encode_filter(g) == data
    with pytest.raises(wire.WireError):
        bloom.decode_filter(data[:-1])
    with pytest.raises(wire.WireError):
        bloom.decode_filter(data + b'\x00')


def test_counting_insert_and_query():
    f = bloom.CountingBloomFilter(bloom.counting_params(10, 1e-6))
    bloom.counting_insert(f, b'a', 3)
    bloom.counting_insert(f, b'b')
    assert bloom.count_query(f, b'a') == 3
    assert bloom.count_query(f, b'b') == 1
    assert bloom.count_query(f, b'zzz') == 0
    assert f.total == 4
    with pytest.raises(ValueError):
        bloom.counting_insert(f, b'c', 0)


def test_counting_overflow():
    f = bloom.CountingBloomFilter(bloom.FilterParams(8, 1))
    bloom.counting_insert(f, b'a', int(bloom.COUNTER_MAX))
    with pytest.raises(bloom.CounterOverflowError):
        bloom.counting_insert(f, b'a')
    assert bloom.count_query(f, b'a') == bloom.COUNTER_MAX


def test_counting_merge():
    params = bloom.counting_params(20, 1e-4)
    a = bloom.CountingBloomFilter(params)
    b = bloom.CountingBloomFilter(params)
    bloom.counting_insert(a, b'x', 2)
    bloom.counting_insert(b, b'x', 5)
    merged = a + b
    assert bloom.count_query(merged, b'x') == 7
    assert merged.total == 7
    with pytest.raises(bloom.FilterParamsError):
        a + bloom.CountingBloomFilter(bloom.counting_params(21, 1e-4))


def test_counting_wire_form():
    f = bloom.CountingBloomFilter(bloom.counting_params(30, 1e-3))
    for i, item in enumerate(_items('c', 30)):
        bloom.counting_insert(f, item, i + 1)
    data = bloom.encode_counting_filter(f)
    assert bloom.decode_counting_filter(data) == f
    with pytest.raises(wire.WireError):
        bloom.decode_counting_filter(data[:-4])


def test_counting_queries_match_exact_counts():
    rng = np.random.default_rng(9)
    exact = {item: int(c) for item, c in
             zip(_items('elem', 100), rng.integers(1, 50, size=100))}
    f = bloom.CountingBloomFilter(bloom.FilterParams(1 << 20, 1, bytes(16)))
    for item, count in exact.items():
        bloom.counting_insert(f, item, count)
    hits = sum(bloom.count_query(f, item) == count
               for item, count in exact.items())
    assert hits >= 99
