import math

import numpy as np
import pytest

from pathconcord.cohort import CohortConfig, generate
from pathconcord.detour import (
    CATEGORIES,
    MISSING,
    align,
    arc_accounting,
    attribute,
    attribution_diff,
    build_detours,
    category_of,
    decompose,
    detour_shares,
    detour_type_table,
    population_attribution,
)
from pathconcord.errors import IdentityViolation, MissingArcForDetour, UnknownActivity
from pathconcord.inverse import InverseInstance, solve_stage1
from pathconcord.network import END, START, sequence_to_flow
from pathconcord.score import longest_walk_table
from pathconcord.solver import shortest_path_cost

from conftest import make_network

VARIANT_COUNTS = {"AABC": (0, 1), "XABC": (1, 2), "BC": (2, 1), "XBC": (2, 2), "BAC": (3, 3)}


@pytest.fixture(scope="module")
def abc_cost(abc_network):
    sol = solve_stage1(InverseInstance.from_sequences(abc_network), mode="full")
    sp, _ = shortest_path_cost(abc_network, sol.cost)
    return sol.cost, sp, longest_walk_table(abc_network, sol.cost, 40)


@pytest.fixture(scope="module")
def colon_setup(colon_network, colon_stage1):
    c = colon_stage1.cost
    sp, _ = shortest_path_cost(colon_network, c)
    return c, sp, longest_walk_table(colon_network, c, 80)


def test_align_reference_is_clean():
    al = align(list("ABC"), list("ABC"))
    assert all(al.present) and not any(al.deltas)


def test_align_duplicate_goes_to_delta():
    al = align(list("AABC"), list("ABC"))
    assert al.deltas[1] == ["A"]


def test_align_deletion():
    al = align(list("BC"), list("ABC"))
    assert al.present == [True, False, True, True, True]
    assert al.deltas[0] == []


def test_align_transposition():
    al = align(list("BAC"), list("ABC"))
    assert al.present[1] is False and al.deltas[2] == ["A"]


@pytest.mark.parametrize("walk", ["ABC", "AABC", "XABC", "BC", "XBC", "BAC", "CBA", "XXX", "", "CXAXB"])
def test_alignment_roundtrip(walk):
    al = align(list(walk), list("ABC"))
    assert al.reassemble() == [START, *walk, END]


def test_unknown_activity(abc_network):
    with pytest.raises(UnknownActivity):
        align(["A", "Q"], list("ABC"), abc_network)


@pytest.mark.parametrize("walk,counts", sorted(VARIANT_COUNTS.items()))
def test_variant_walk_arc_accounting(abc_network, abc_cost, walk, counts):
    c, sp, table = abc_cost
    dec = decompose(abc_network, list(walk), c, sp, table)
    assert arc_accounting(abc_network, dec.detours) == counts


def test_reference_walk_has_no_detours(abc_network, abc_cost):
    c, sp, table = abc_cost
    dec = decompose(abc_network, list("ABC"), c, sp, table)
    assert dec.detours == [] and dec.total_discordance == 0.0 and dec.omega == 1.0


def test_single_extra_ed_visit_cost(colon_network, colon_setup):
    c, sp, table = colon_setup
    ref = list(colon_network.reference_pathways[0])
    i = ref.index("RESECTION")
    walk = ref[: i + 1] + ["ED_VISIT"] + ref[i + 1 :]
    dec = decompose(colon_network, walk, c, sp, table, references=[ref])
    (d,) = dec.detours
    net = colon_network
    succ = ref[i + 1]
    num = (
        c[net.transition_arc("RESECTION", "ED_VISIT")]
        + c[net.intra_arc("ED_VISIT")]
        + c[net.transition_arc("ED_VISIT", succ)]
        - c[net.transition_arc("RESECTION", succ)]
    )
    assert d.numerator == pytest.approx(num, abs=1e-12)
    assert d.cost == pytest.approx(num / (dec.denominator), abs=1e-12)
    shares = detour_shares(d, c, dec.denominator)
    assert set(shares) == {("ED_VISIT", "ED visit")}


def test_repeated_discordant_activity_matches_walk_cost(colon_network, colon_setup):
    c, sp, table = colon_setup
    ref = list(colon_network.reference_pathways[0])
    walk = ref[:2] + ["ED_VISIT", "ED_VISIT"] + ref[2:]
    dec = decompose(colon_network, walk, c, sp, table, references=[ref])
    (d,) = dec.detours
    repeat = colon_network.transition_arc("ED_VISIT", "ED_VISIT")
    assert repeat in d.extra_arcs
    x = sequence_to_flow(colon_network, walk).counts
    xr = sequence_to_flow(colon_network, ref).counts
    assert d.numerator == pytest.approx(c @ x - c @ xr, abs=1e-12)


def test_missing_bridge_arc():
    net = make_network("ABC", transitions=[(START, "A"), ("A", "B"), ("B", "C"), ("C", END), (START, "B")], references=[["A", "B", "C"]])
    sol = solve_stage1(InverseInstance.from_sequences(net), mode="full")
    sp, _ = shortest_path_cost(net, sol.cost)
    table = longest_walk_table(net, sol.cost, 20)
    # a walk of just C skips A and B, and the network has no START -> C bridge
    with pytest.raises(MissingArcForDetour):
        build_detours(net, align(["C"], list("ABC")), sol.cost, 1.0)
    dec = decompose(net, ["B", "C"], sol.cost, sp, table)
    assert len(dec.detours) == 1


def test_identity_violation_when_no_shortest_reference(abc_network, abc_cost):
    c, sp, table = abc_cost
    # no reference can attain a shortest cost below the true one
    with pytest.raises(IdentityViolation):
        decompose(abc_network, list("XABC"), c, sp - 1.0, table)


def test_category_defaults(colon_network):
    assert category_of(colon_network, "ED_VISIT") == "ED visit"
    assert category_of(colon_network, "EXTRA_CONSULT") == "extra consultation"
    assert category_of(colon_network, "PELVIS_MRI_US") == "extra abdomen/pelvis imaging"
    net = make_network(["Chest_xray", "Colonoscopy", "Misc"], complete=True)
    assert category_of(net, "Chest_xray") == "extra chest imaging"
    assert category_of(net, "Colonoscopy") == "extra endoscopy"
    assert category_of(net, "Misc") == "other"


def _cohort_decompositions(colon_network, colon_setup, n=300, seed=7):
    c, sp, table = colon_setup
    recs = generate(colon_network, None, CohortConfig(seed=seed, n_patients=n, insert_rate=0.3, delete_rate=0.15))
    return recs, [decompose(colon_network, r.sequence, c, sp, table) for r in recs]


def test_detour_identity_and_shares(colon_network, colon_setup):
    c, _, _ = colon_setup
    recs, decs = _cohort_decompositions(colon_network, colon_setup)
    for dec in decs:
        assert dec.residual <= 1e-8
        for d in dec.detours:
            shares = detour_shares(d, c, dec.denominator)
            assert abs(math.fsum(shares.values()) - d.cost) <= 1e-10
            assert set(cat for _, cat in shares) <= set(CATEGORIES)
        att = attribute(dec, c)
        assert abs(math.fsum(att.shares.values()) - dec.total_discordance) <= 1e-10


def test_population_and_diff_identities(colon_network, colon_setup):
    c, _, _ = colon_setup
    recs, decs = _cohort_decompositions(colon_network, colon_setup)
    atts = [attribute(d, c) for d in decs]
    pop = population_attribution(atts)
    mean_disc = np.mean([1 - d.omega for d in decs])
    assert math.fsum(pop.shares.values()) == pytest.approx(mean_disc, abs=1e-10)
    a = population_attribution(atts[::2])
    b = population_attribution(atts[1::2])
    diff = attribution_diff(a, b)
    assert math.fsum(diff.shares.values()) == pytest.approx(a.total - b.total, abs=1e-10)
    assert math.fsum(diff.by_category().values()) == pytest.approx(a.total - b.total, abs=1e-10)
    assert MISSING in pop.by_category()


def test_detour_type_table(colon_network, colon_setup):
    _, decs = _cohort_decompositions(colon_network, colon_setup)
    rows = detour_type_table(decs)
    assert sum(r["patients"] for r in rows) == len(decs)
    assert rows[0]["type"] == "Concordant" and rows[0]["mean_discordance"] == 0.0
