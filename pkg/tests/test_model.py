import json

import numpy as np
import pytest

from jointlca.data import CrossCovarianceSet
from jointlca.model import (
    JointLCAModel,
    estimated_rank,
    fidelity,
    objective,
    penalty_value,
    reconstruct_pair,
)

from conftest import exact_ccset, random_ccset, random_orthonormal


def random_model(dims, r, rng, lam=0.0):
    return JointLCAModel(
        tuple(random_orthonormal(p, r, rng) for p in dims),
        rng.uniform(0, 2, size=(len(dims), r)),
        lam,
    )


def test_reconstruct_rank_one():
    model = JointLCAModel(([[1.0], [0.0]], [[0.0], [1.0]]), [[2.0], [3.0]])
    np.testing.assert_array_equal(reconstruct_pair(model, 0, 1), [[0.0, 6.0], [0.0, 0.0]])


def test_reconstruct_zero_scales(rng):
    model = JointLCAModel(tuple(random_orthonormal(p, 2, rng) for p in (3, 4)), np.zeros((2, 2)))
    assert not np.any(reconstruct_pair(model, 0, 1))


def test_reconstruct_matches_triple_product(rng):
    model = random_model((4, 5, 3), 2, rng)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        di, dj = np.diag(model.scales[i]), np.diag(model.scales[j])
        expected = model.loadings[i] @ di @ dj.T @ model.loadings[j].T
        np.testing.assert_allclose(reconstruct_pair(model, i, j), expected, atol=1e-12)


def test_reconstruct_bad_index(rng):
    model = random_model((3, 3), 1, rng)
    with pytest.raises(IndexError):
        reconstruct_pair(model, 0, 2)


def test_model_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        JointLCAModel((np.eye(2), np.eye(2)), [[1.0, -1.0], [1.0, 1.0]])
    with pytest.raises(ValueError, match="shape"):
        JointLCAModel((np.eye(2), np.eye(2)), np.ones((3, 2)))


def test_fidelity_exact_model_is_zero(rng):
    d = rng.uniform(0.5, 2, size=(3, 2))
    cc, v = exact_ccset((4, 5, 6), d, rng)
    model = JointLCAModel(tuple(v), d)
    assert fidelity(model, cc) == pytest.approx(0.0, abs=1e-24)


def test_fidelity_zero_model_counts_pairs(rng):
    cc = random_ccset((3, 4, 5), rng)
    zero = JointLCAModel(tuple(np.eye(p)[:, :2] for p in cc.dims), np.zeros((3, 2)))
    assert fidelity(zero, cc) == pytest.approx(3.0, rel=1e-14)
    assert objective(zero, cc, 0.7) == pytest.approx(3.0, rel=1e-14)


def test_fidelity_scalar():
    cc = CrossCovarianceSet.from_blocks({(0, 1): [[1.0]]}, weights="unit")
    model = JointLCAModel(([[1.0]], [[1.0]]), [[0.5], [1.0]])
    assert fidelity(model, cc) == pytest.approx(0.25)


def test_fidelity_dimension_mismatch(rng):
    cc = random_ccset((3, 4), rng)
    with pytest.raises(ValueError, match="dims"):
        fidelity(random_model((3, 5), 1, rng), cc)


def test_penalty_examples():
    two = JointLCAModel(([[1.0]], [[1.0]]), [[1.0], [1.0]])
    assert penalty_value(two, {(0, 1): 1.0}) == pytest.approx(1.0)
    three = JointLCAModel(([[1.0]],) * 3, np.ones((3, 1)))
    unit = {(0, 1): 1.0, (0, 2): 1.0, (1, 2): 1.0}
    assert penalty_value(three, unit) == pytest.approx(np.sqrt(3.0))
    assert penalty_value(JointLCAModel(([[1.0]],) * 3, np.zeros((3, 1))), unit) == 0.0


def test_penalty_homogeneous_degree_two(rng):
    model = random_model((3, 4, 5), 2, rng)
    w = {(0, 1): 0.3, (0, 2): 1.2, (1, 2): 2.0}
    scaled = JointLCAModel(model.loadings, 1.7 * model.scales)
    assert penalty_value(scaled, w) == pytest.approx(1.7**2 * penalty_value(model, w), rel=1e-13)


def test_objective_combines(rng):
    d = rng.uniform(0.5, 2, size=(3, 2))
    cc, v = exact_ccset((4, 5, 6), d, rng)
    model = JointLCAModel(tuple(v), d)
    assert objective(model, cc, 0.0) == fidelity(model, cc)
    assert objective(model, cc, 1.0) == pytest.approx(penalty_value(model, cc.weights), abs=1e-12)
    with pytest.raises(ValueError):
        objective(model, cc, -1.0)


def test_permutation_invariance(rng):
    cc = random_ccset((4, 5, 6), rng)
    model = random_model((4, 5, 6), 3, rng)
    perm = model.permute([2, 0, 1])
    assert objective(perm, cc, 0.4) == pytest.approx(objective(model, cc, 0.4), rel=1e-13)
    assert estimated_rank(perm) == estimated_rank(model)


def test_estimated_rank_examples():
    zero = JointLCAModel((np.eye(3), np.eye(3)), np.zeros((2, 3)))
    assert estimated_rank(zero) == 0
    two = JointLCAModel((np.eye(3),) * 3, [[1, 1, 0], [1, 1, 0], [1, 1, 0]])
    assert estimated_rank(two, tol=1e-8) == 2
    half = JointLCAModel((np.eye(1), np.eye(1)), [[1.0], [0.0]])
    assert estimated_rank(half) == 0
    assert estimated_rank(JointLCAModel.empty((3, 4))) == 0


def test_estimated_rank_relative_default():
    model = JointLCAModel((np.eye(2), np.eye(2)), [[1e6, 1e-3], [1e6, 1e-3]])
    # 1e-6 group norm sits below 1e-8 * 1e12
    assert estimated_rank(model) == 1
    assert estimated_rank(model, tol=0.0) == 2


def test_sorted_descending_and_stable(rng):
    v = tuple(random_orthonormal(4, 3, rng) for _ in range(2))
    model = JointLCAModel(v, [[1.0, 3.0, 1.0], [1.0, 1.0, 1.0]])
    out = model.sorted()
    np.testing.assert_array_equal(out.scales[0], [3.0, 1.0, 1.0])
    np.testing.assert_array_equal(out.loadings[0][:, 1], v[0][:, 0])


def test_sigma_group_reproducible(rng):
    model = random_model((3, 4, 5), 2, rng)
    group = model.sigma_group(1)
    for (i, j), value in group.values.items():
        assert value == model.scales[i, 1] * model.scales[j, 1]


def test_json_round_trip_exact(rng, tmp_path):
    model = random_model((3, 4), 2, rng, lam=0.123456789)
    path = tmp_path / "m.json"
    model.to_json(path)
    back = JointLCAModel.from_json(path)
    for a, b in zip(model.loadings, back.loadings):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(model.scales, back.scales)
    assert back.lam == model.lam
    assert json.loads(path.read_text())["r"] == 2


def test_empty_model_round_trip():
    empty = JointLCAModel.empty((3, 4), lam=2.0)
    back = JointLCAModel.from_json(empty.to_json())
    assert back.zero_rank and back.dims == (3, 4)
