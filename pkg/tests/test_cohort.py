import logging

import numpy as np
import pytest
from statsmodels.duration.survfunc import SurvfuncRight, survdiff

from pathconcord.cohort import CohortConfig, generate, patient_rng
from pathconcord.errors import EmptyGroup, NoEvents, ValidationError
from pathconcord.network import sequence_to_flow, strip_terminals, validate_flow
from pathconcord.survival import km_curve, log_rank, tercile_bins


def test_same_seed_reproduces(colon_network):
    cfg = CohortConfig(seed=3, n_patients=200)
    a, b = generate(colon_network, None, cfg), generate(colon_network, None, cfg)
    assert [r.sequence for r in a] == [r.sequence for r in b]
    assert [r.event_time for r in a] == [r.event_time for r in b]


def test_patient_streams_independent_of_cohort_size(colon_network):
    small = generate(colon_network, None, CohortConfig(seed=9, n_patients=50))
    large = generate(colon_network, None, CohortConfig(seed=9, n_patients=500))
    assert [r.sequence for r in small] == [r.sequence for r in large[:50]]
    assert patient_rng(9, 3).random() == patient_rng(9, 3).random()


def test_zero_rates_reproduce_references(colon_network):
    cfg = CohortConfig(seed=1, n_patients=100, delete_rate=0, repeat_rate=0, insert_rate=0, exit_rate=0)
    refs = {tuple(strip_terminals(r)) for r in colon_network.reference_pathways}
    recs = generate(colon_network, None, cfg)
    assert all(r.sequence in refs and r.perturbations == 0 for r in recs)


def test_walks_are_feasible_and_protected(colon_network):
    recs = generate(colon_network, None, CohortConfig(seed=2, n_patients=500, delete_rate=0.5, insert_rate=0.4))
    for r in recs:
        assert validate_flow(colon_network, r.flow).ok
        assert np.array_equal(r.flow.counts, sequence_to_flow(colon_network, r.sequence).counts)
        assert "RESECTION" in r.sequence
    assert len({r.patient_id for r in recs}) == 500 and recs[0].patient_id == "P000"


def test_event_times_respect_horizon(colon_network):
    recs = generate(colon_network, None, CohortConfig(seed=0, n_patients=400, horizon=2.0, dropout_rate=0.5))
    t = np.array([r.event_time for r in recs])
    assert t.max() <= 2.0 and t.min() > 0
    assert not all(r.event_observed for r in recs) and any(r.event_observed for r in recs)


def test_config_validation():
    with pytest.raises(ValidationError):
        CohortConfig(delete_rate=1.5)
    with pytest.raises(ValidationError):
        CohortConfig.from_dict({"seed": 1, "bogus": 2})
    assert CohortConfig.from_dict(CohortConfig(seed=4).to_dict()) == CohortConfig(seed=4)


def test_km_hand_computed():
    t = [1, 2, 2, 3, 4, 4, 5, 6, 7, 8]
    e = [1, 1, 0, 1, 1, 1, 0, 1, 0, 1]
    km = km_curve((t, e))
    expect, s, n = {}, 1.0, 10
    for time in sorted(set(t)):
        d = sum(1 for ti, ei in zip(t, e) if ti == time and ei)
        if d:
            s *= 1 - d / n
            expect[time] = s
        n -= sum(1 for ti in t if ti == time)
    assert list(km.times) == sorted(expect)
    assert np.allclose(km.survival, list(expect.values()), atol=1e-12)
    assert km.at(0.5) == 1.0 and km.at(4.5) == pytest.approx(expect[4])


def test_km_matches_statsmodels():
    rng = np.random.default_rng(0)
    t = np.round(rng.exponential(2.0, 300), 1) + 0.1
    e = rng.random(300) < 0.7
    ours = km_curve((t, e))
    ref = SurvfuncRight(t, e.astype(int))
    assert np.allclose(ours.times, ref.surv_times)
    assert np.allclose(ours.survival, ref.surv_prob, atol=1e-12)


def test_km_edge_cases():
    one = km_curve(([3.0], [True]))
    assert one.at(2.9) == 1.0 and one.at(3.0) == 0.0
    censored = km_curve(([1.0, 2.0], [False, False]))
    assert censored.times.size == 0 and censored.at(10) == 1.0
    with pytest.raises(EmptyGroup):
        km_curve(([], []))


def test_log_rank_identical_groups():
    g = ([1.0, 2.0, 3.0, 4.0], [True, True, False, True])
    res = log_rank([g, g])
    assert res.statistic == pytest.approx(0.0, abs=1e-12) and res.p_value == pytest.approx(1.0)


@pytest.mark.parametrize("k", [2, 3])
def test_log_rank_matches_statsmodels(k):
    rng = np.random.default_rng(k)
    groups, times, status, labels = [], [], [], []
    for j in range(k):
        t = np.round(rng.exponential(1.0 + j, 120), 1) + 0.1
        e = rng.random(120) < 0.8
        groups.append((t, e))
        times.append(t), status.append(e), labels.append(np.full(120, j))
    res = log_rank(groups)
    chisq, p = survdiff(np.concatenate(times), np.concatenate(status).astype(int), np.concatenate(labels))
    assert res.statistic == pytest.approx(chisq, rel=1e-9)
    assert res.p_value == pytest.approx(p, rel=1e-6)
    assert res.dof == k - 1 and res.observed.sum() == pytest.approx(res.expected.sum())


def test_log_rank_errors():
    with pytest.raises(NoEvents):
        log_rank([([1.0], [False]), ([2.0], [False])])
    with pytest.raises(EmptyGroup):
        log_rank([([1.0], [True]), ([], [])])


def test_terciles_even_and_remainder():
    assert np.bincount(tercile_bins(np.arange(9.0)).labels).tolist() == [3, 3, 3]
    bins = tercile_bins(np.arange(10.0))
    assert np.bincount(bins.labels).tolist() == [4, 3, 3]
    assert bins.labels[0] == 0 and bins.labels[9] == 2
    assert np.bincount(tercile_bins(np.arange(11.0)).labels).tolist() == [4, 4, 3]


def test_terciles_ties_by_id(caplog):
    ids = ["P3", "P1", "P2", "P0", "P5", "P4"]
    with caplog.at_level(logging.WARNING):
        bins = tercile_bins([0.5] * 6, ids)
    assert bins.degenerate and caplog.records
    assert [bins.labels[ids.index(p)] for p in sorted(ids)] == [0, 0, 1, 1, 2, 2]
