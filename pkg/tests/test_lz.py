import math

import numpy as np
import pytest

from hamdaemon import lz
from hamdaemon.model import DomainError, reference_params

D5 = reference_params(5)
LADDER = np.arange(5.0, -5.0, -1.0)


def test_pr5_analytic():
    assert lz.lz_probability(5, D5, 5) == pytest.approx(0.308, abs=1e-3)
    assert lz.lz_probability(5, D5, 3) == pytest.approx(math.exp(-0.9 * math.pi), rel=1e-12)
    assert lz.lz_probability(5, D5, 3) == pytest.approx(0.059, abs=1e-3)


def test_ladder_symmetry():
    for m in LADDER:
        assert lz.lz_probability(5, D5, m) == pytest.approx(lz.lz_probability(5, D5, 1 - m))


def test_off_ladder_rejected():
    with pytest.raises(DomainError):
        lz.lz_probability(5, D5, -5)
    with pytest.raises(DomainError):
        lz.lz_probability(5, D5, 2.5)


def test_two_level_projection():
    t = lz.project_two_level(5, D5, 5)
    assert t.slope == pytest.approx(1 / (2 * D5.M_tilde))
    assert t.gap_half == pytest.approx(7.5 * math.sqrt(10))
    assert t.lz_probability() == pytest.approx(lz.lz_probability(5, D5, 5), rel=1e-12)
    assert t.gap_width == pytest.approx(t.gap_half / t.slope)


@pytest.mark.parametrize("m", LADDER)
def test_two_level_sweep_matches_formula(m):
    model = lz.project_two_level(5, D5, m)
    assert lz.sweep_two_level(model) == pytest.approx(lz.lz_probability(5, D5, m), abs=1e-3)


def test_cascade_tree():
    tree = lz.cascade_tree(5, D5, 5)
    assert len(tree.leaves) == 11
    assert sum(tree.leaves.values()) == pytest.approx(1.0, abs=1e-12)
    assert tree.leaves[5.0] == pytest.approx(lz.lz_probability(5, D5, 5))
    assert tree.leaves[-5.0] == pytest.approx(lz.full_downconversion_probability(5, D5))
    assert tree.crossing_m == list(LADDER)
    assert len(tree.stages) == 11


def test_tree_momentum_offsets():
    hol = D5.hbar_over_L
    for node in lz.cascade_tree(5, D5, 5).leaf_nodes():
        assert node.momentum_offset == pytest.approx((5 - node.m) * hol)


def test_full_downconversion():
    expected = math.prod(1 - lz.lz_probability(5, D5, m) for m in LADDER)
    assert lz.full_downconversion_probability(5, D5) == pytest.approx(expected)
    assert lz.full_downconversion_probability(5, D5) == pytest.approx(0.287, abs=1e-3)


def test_ignition():
    assert lz.ignition_probability(5, D5, 5) == pytest.approx(1 - lz.lz_probability(5, D5, 5))
    assert lz.ignition_probability(5, D5, 4) == pytest.approx(lz.lz_probability(5, D5, 5))


def test_step_entropy():
    tree = lz.cascade_tree(5, D5, 5)
    times = np.arange(10) * 0.18 + 0.5
    curve = lz.step_entropy(tree, times)
    p = lz.lz_probability(5, D5, 5)
    assert curve.values[0] == 0.0
    assert curve.values[1] == pytest.approx(-p * math.log(p) - (1 - p) * math.log(1 - p))
    assert curve.values[1] == pytest.approx(0.617, abs=1e-3)
    assert np.all(curve.values <= math.log(11))
    assert curve(0.0) == 0.0 and curve(0.55) == curve.values[1]
    with pytest.raises(ValueError):
        lz.step_entropy(tree, times[:-1])
    with pytest.raises(ValueError):
        lz.step_entropy(tree, times[::-1])


def test_tree_serializable():
    import json
    json.dumps(lz.cascade_tree(5, D5, 5).to_dict())


@pytest.mark.parametrize("m0", [4.5, 6, -5.5])
def test_cascade_rejects_off_ladder_start(m0):
    with pytest.raises(DomainError):
        lz.cascade_tree(5, D5, m0)
