import logging

import numpy as np
import pytest

from pathconcord.errors import InfeasibleConstraints, TrivialNetwork, UnknownArcInConstraint, ValidationError
from pathconcord.inverse import (
    ConstraintSet,
    InverseInstance,
    build_constraint_rows,
    gaps_for,
    solve_stage1,
    solve_stage2,
    stage2_weights,
    stage_invariants,
)
from pathconcord.network import END, START, sequence_to_flow
from pathconcord.solver import detect_negative_cycle, shortest_distances, shortest_path_cost

from conftest import make_network

TWO_PATH = [(START, "A"), ("A", "B"), ("B", END), (START, "C"), ("C", END)]


@pytest.fixture(scope="module")
def two_path():
    return make_network("ABC", transitions=TWO_PATH, references=[["A", "B"]], repeat=False)


def constructive_cost(net, ref, alt):
    """-1 on arcs only the reference uses, +1 on arcs only the alternative uses."""
    xr = sequence_to_flow(net, ref).counts
    xa = sequence_to_flow(net, alt).counts
    return np.where(xr > 0, -1.0, 0.0) + np.where(xa > 0, 1.0, 0.0)


def check_invariants(inst, sol, tol=1e-7):
    inv = stage_invariants(inst, sol)
    assert inv["circulation"] <= tol
    assert 1 - tol <= inv["norm_inf"] <= 1
    assert inv["dual_feasibility"] <= tol
    assert inv["min_reference_gap"] >= -1e-9
    assert not inv["negative_cycle"]


def test_constructive_cost_is_zero_gap(two_path):
    c = constructive_cost(two_path, ["A", "B"], ["C"])
    A = two_path.incidence_system.A
    assert not (A @ c).any()
    d = shortest_distances(two_path, c)
    p = d[:-1]
    assert (A.T @ p - c).max() <= 1e-12
    assert gaps_for(c, p, [sequence_to_flow(two_path, ["A", "B"])])[0] == pytest.approx(0.0, abs=1e-12)


def test_stage1_zero_gap_full_mode(two_path):
    inst = InverseInstance.from_sequences(two_path)
    sol = solve_stage1(inst, mode="full")
    assert sol.mode == "full"
    assert sol.objective <= 1e-10
    check_invariants(inst, sol)


def test_trivial_network():
    with pytest.raises(TrivialNetwork):
        make_network("A", transitions=[(START, "A"), ("A", END)], repeat=False)


def test_colon_single_anchored_qp(colon_instance, colon_stage1):
    assert colon_stage1.mode == "anchored"
    assert len(colon_stage1.reports) == 1
    k, v = colon_stage1.anchor
    assert colon_instance.network.arc_name(k) == "CHEMO_COMPLETE.end->END" and v == -1.0
    assert colon_stage1.cost[k] == -1.0
    check_invariants(colon_instance, colon_stage1)


def test_colon_constraints_hold(colon_instance, colon_stage1):
    rows = build_constraint_rows(colon_instance.constraints, colon_instance.network)
    assert rows.G_ub.shape[0] == 8 + 4
    assert (rows.G_ub @ colon_stage1.cost).max() <= 1e-7


def test_activity_ranking_row(colon_network):
    cs = ConstraintSet(activity_rankings=(("ABD_CT", "PELVIS_CT"),))
    rows = build_constraint_rows(cs, colon_network)
    assert rows.G_ub.shape == (1, colon_network.n_arcs)
    row = rows.G_ub[0]
    assert row[colon_network.intra_arc("ABD_CT")] == 1 and row[colon_network.intra_arc("PELVIS_CT")] == -1
    assert np.count_nonzero(row) == 2


def test_subpath_row_over_six_arcs(colon_network, colon_constraints):
    rows = build_constraint_rows(colon_constraints, colon_network)
    last = rows.G_ub[-1]  # MO_CONSULT_END preferred over RESECTION_END
    net = colon_network
    plus = [net.transition_arc("RESECTION", "MO_CONSULT_END"), net.intra_arc("MO_CONSULT_END"), net.transition_arc("MO_CONSULT_END", END)]
    minus = [net.transition_arc("RESECTION", "RESECTION_END"), net.intra_arc("RESECTION_END"), net.transition_arc("RESECTION_END", END)]
    assert np.count_nonzero(last) == 6
    assert all(last[k] == 1 for k in plus) and all(last[k] == -1 for k in minus)


def test_labels_resolve_in_arc_refs(colon_network):
    cs = ConstraintSet(anchors=(("Chemo complete.end", "END", -1.0),))
    rows = build_constraint_rows(cs, colon_network)
    assert rows.anchors[0][0] == colon_network.transition_arc("CHEMO_COMPLETE", END)


def test_empty_constraint_set(colon_network):
    rows = build_constraint_rows(ConstraintSet(), colon_network)
    assert rows.G_ub.shape[0] == 0 and rows.G_eq.shape[0] == 0


def test_unknown_arc(colon_network):
    with pytest.raises(UnknownArcInConstraint):
        build_constraint_rows(ConstraintSet(anchors=(("START", "RESECTION_END.start", 1.0),)), colon_network)
    with pytest.raises(UnknownArcInConstraint):
        build_constraint_rows(ConstraintSet(activity_rankings=(("NOPE", "ABD_CT"),)), colon_network)
    with pytest.raises(ValidationError):
        build_constraint_rows(ConstraintSet(anchors=(("CHEMO_COMPLETE.end", "END", 0.5),)), colon_network)


def test_constraint_json_roundtrip(colon_constraints):
    assert ConstraintSet.from_dict(colon_constraints.to_dict()) == colon_constraints


def test_contradictory_constraints(two_path):
    # preferring A (c_A <= c_B) contradicts anchors that put A at +1 and B at -1
    cs = ConstraintSet(
        activity_rankings=(("A", "B"),),
        anchors=(("A.start", "A.end", 1.0), ("B.start", "B.end", -1.0)),
    )
    inst = InverseInstance.from_sequences(two_path, constraints=cs)
    with pytest.raises(InfeasibleConstraints):
        solve_stage1(inst, mode="full")


def test_gaps_for_identities(colon_instance, colon_stage1):
    net = colon_instance.network
    c, p = colon_stage1.cost, colon_stage1.dual
    sp, path = shortest_path_cost(net, c)
    d = shortest_distances(net, c)
    assert gaps_for(c, d[:-1], [path])[0] == pytest.approx(0.0, abs=1e-8)
    assert np.allclose(gaps_for(c, p, colon_instance.references), colon_stage1.gaps["reference"], atol=1e-12)


def test_gap_unchanged_by_zero_cost_cycle(abc_network):
    c = np.zeros(abc_network.n_arcs)
    x1 = sequence_to_flow(abc_network, list("ABC"))
    x2 = sequence_to_flow(abc_network, list("ABBC"))
    p = np.zeros(abc_network.n_nodes - 1)
    assert gaps_for(c, p, [x1])[0] == gaps_for(c, p, [x2])[0]


def conflicting_instance():
    """Two references whose gaps cannot both vanish once A's intra arc is fixed at -1."""
    transitions = [(START, "A"), (START, "B"), ("A", END), ("B", END), ("A", "B")]
    net = make_network("AB", transitions=transitions, references=[["A"], ["B"]], repeat=False)
    return InverseInstance.from_sequences(net, constraints=ConstraintSet(anchors=(("A.start", "A.end", -1.0),)))


def test_full_decomposition_no_worse_than_anchored():
    inst = conflicting_instance()
    anchored = solve_stage1(inst, mode="anchored")
    full = solve_stage1(InverseInstance.from_sequences(inst.network), mode="full")
    assert anchored.objective > 1e-6
    assert full.objective <= anchored.objective + 1e-9


def test_stage2_weights_are_rational():
    w_s, w_d, warn = stage2_weights(3, 7)
    assert w_s == 7 / 3 and w_d == 1.0 and not warn
    assert stage2_weights(0, 4)[2] and stage2_weights(4, 0)[2]


def test_stage2_identical_cohorts_zero_objective(abc_network):
    walks = [list("ABC"), list("ABXC"), list("AC"), list("XABC")]
    inst = InverseInstance.from_sequences(abc_network, survived=walks, died=walks, constraints=ConstraintSet(anchors=(("C.end", "END", -1.0),)))
    s1 = solve_stage1(inst)
    s2 = solve_stage2(inst, s1)
    assert s2.objective == pytest.approx(0.0, abs=1e-9)
    assert np.abs(s2.gaps["reference"] - s1.gaps["reference"]).max() <= 1e-6


def test_stage2_pins_reference_gaps_and_separates(abc_network):
    survived = [list("ABC")] * 3 + [list("AC")]
    died = [list("AXBC"), list("XABC"), list("AXXBC")]
    cs = ConstraintSet(anchors=(("C.end", "END", -1.0),))
    inst = InverseInstance.from_sequences(abc_network, survived=survived, died=died, constraints=cs)
    s1 = solve_stage1(inst)
    s2 = solve_stage2(inst, s1)
    check_invariants(inst, s2)
    assert np.abs(gaps_for(s2.cost, s2.dual, inst.references) - s1.gaps["reference"]).max() <= 1e-6
    assert detect_negative_cycle(abc_network, s2.cost) is None
    sep2 = s2.gaps["died"].mean() - s2.gaps["survived"].mean()
    sep1 = gaps_for(s1.cost, s1.dual, inst.died).mean() - gaps_for(s1.cost, s1.dual, inst.survived).mean()
    assert sep2 >= sep1 - 1e-9
    assert (s2.gaps["survived"] >= -1e-9).all() and (s2.gaps["died"] >= -1e-9).all()


def test_stage2_one_sided_warns(abc_network, caplog):
    cs = ConstraintSet(anchors=(("C.end", "END", -1.0),))
    inst = InverseInstance.from_sequences(abc_network, died=[list("AXBC")], constraints=cs)
    s1 = solve_stage1(inst)
    with caplog.at_level(logging.WARNING):
        s2 = solve_stage2(inst, s1)
    assert s2.warnings and "died" in s2.gaps


def test_stage2_skipped_without_cohort(colon_instance, colon_stage1):
    assert solve_stage2(colon_instance, colon_stage1) is colon_stage1
