import random

import pytest
from rapidfuzz.distance import DamerauLevenshtein, Indel, Levenshtein, OSA

from pathconcord.baselines import EditConfig, baseline_score, edit_distance

from oracles import all_strings, edit_script_distances

RAPIDFUZZ = {"LCSD": Indel.distance, "LD": Levenshtein.distance, "DLD": DamerauLevenshtein.distance, "OSA": OSA.distance}


def test_worked_examples():
    assert edit_distance("ABC", "AABC", "LD") == 1
    assert edit_distance("ABC", "BAC", "DLD") == 1
    assert edit_distance("ABC", "BAC", "LD") == 2
    assert edit_distance("ABC", "XBC", "LCSD") == 2
    assert edit_distance("", "ABC", "LD") == 3


def test_unknown_variant():
    with pytest.raises(ValueError):
        EditConfig("HAMMING")


def test_osa_differs_from_unrestricted():
    # the classic case where OSA breaks the triangle inequality
    assert edit_distance("CA", "ABC", "OSA") == 3
    assert edit_distance("CA", "ABC", "DLD") == 2


@pytest.mark.parametrize("variant", ["LCSD", "LD", "DLD", "OSA"])
def test_agrees_with_rapidfuzz(variant):
    rng = random.Random(5)
    for _ in range(2000):
        a = "".join(rng.choice("ABCD") for _ in range(rng.randint(0, 9)))
        b = "".join(rng.choice("ABCD") for _ in range(rng.randint(0, 9)))
        assert edit_distance(a, b, variant) == RAPIDFUZZ[variant](a, b)


def test_exhaustive_small_alphabet():
    for variant in ("LCSD", "LD", "DLD"):
        for src in all_strings("AB", 2):
            dist = edit_script_distances(src, "AB", variant, 5 - len(src))
            for tgt in all_strings("AB", 5 - len(src)):
                if len(tgt) >= len(src):
                    assert edit_distance(src, tgt, variant) == dist[tgt]


def test_ordering_between_variants():
    rng = random.Random(11)
    for _ in range(1000):
        a = [rng.choice("ABC") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("ABC") for _ in range(rng.randint(0, 8))]
        assert edit_distance(a, b, "LCSD") >= edit_distance(a, b, "LD") >= edit_distance(a, b, "DLD")


def test_baseline_score_reference_is_one():
    refs = [["A", "B", "C"], ["A", "D"]]
    s = baseline_score(["A", "D"], refs, "DLD")
    assert s.raw == 0 and s.normalized == 1.0 and s.reference_index == 1


def test_baseline_score_disjoint_equal_length():
    s = baseline_score(list("ABC"), [list("XYZ")], "LD")
    assert s.raw == 3 and s.normalized == 0.5


def test_baseline_score_takes_minimum_and_terminals():
    refs = [list("ABCD"), list("AB")]
    s = baseline_score(["START", "A", "B", "X", "END"], refs, "LCSD")
    assert s.raw == 1 and s.reference_index == 1
    assert s.normalized == pytest.approx(1 - 1 / 5)
    assert baseline_score([], [[]], "LD").normalized == 1.0
