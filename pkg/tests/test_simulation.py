import numpy as np
import pytest

from jointlca.data import cross_covariances
from jointlca.simulation import SimConfig, generate, noise_sd, orthonormal_centered, sample_diagonals


def test_orthonormal_centered_postconditions(rng):
    m = orthonormal_centered(5, 2, rng)
    assert np.all(np.abs(m.sum(axis=0)) <= 1e-10)
    np.testing.assert_allclose(m.T @ m, np.eye(2), atol=1e-10)


def test_orthonormal_centered_bounds(rng):
    orthonormal_centered(3, 2, rng)
    with pytest.raises(ValueError):
        orthonormal_centered(3, 3, rng)


def test_orthonormal_centered_deterministic():
    a = orthonormal_centered(7, 3, np.random.default_rng(5))
    b = orthonormal_centered(7, 3, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


def test_case_ranges(rng):
    joint = sample_diagonals("II", 10_000, rng, "joint")
    assert joint.min() >= 0.5 * np.sqrt(5) and joint.max() <= np.sqrt(5)
    indiv = sample_diagonals("II", 10_000, rng, "individual")
    assert indiv.min() >= 0.5 and indiv.max() <= 1.0
    for structure in ("joint", "individual"):
        x = sample_diagonals("I", 10_000, rng, structure)
        assert x.min() >= 0.0 and x.max() <= 1.0


def test_sample_diagonals_reproducible():
    a = sample_diagonals("I", 4, np.random.default_rng(1))
    b = sample_diagonals("I", 4, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)


def test_sample_diagonals_bad_arguments(rng):
    with pytest.raises(ValueError):
        sample_diagonals("III", 2, rng)
    with pytest.raises(ValueError):
        sample_diagonals("I", 2, rng, "shared")


def test_noise_sd_examples():
    z = [np.sqrt(12.0 / 6) * np.ones((3, 2)), np.zeros((3, 2))]
    assert noise_sd(z, 3, [2, 2]) == pytest.approx(1.0, rel=1e-14)
    assert noise_sd([2 * x for x in z], 3, [2, 2]) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(ValueError):
        noise_sd([np.zeros((2, 2))])


def test_noise_sd_summation_oracle(rng):
    z = [rng.normal(size=(6, p)) for p in (3, 4)]
    total = sum(float(x) ** 2 for zi in z for x in zi.ravel())
    assert noise_sd(z) == pytest.approx(np.sqrt(total / (6 * 7)), rel=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dims=(3, 3), r0=3, r_indiv=1)
    with pytest.raises(ValueError):
        SimConfig(dims=(10,), r0=1)
    with pytest.raises(ValueError):
        SimConfig(dims=(10, 10), case="III")


@pytest.mark.parametrize("dims", [(100, 100, 100), (100, 200, 300, 400)])
def test_generated_dimensions(dims):
    ds, truth = generate(SimConfig(dims=dims, n=100, seed=3))
    assert ds.dims == dims and ds.n == 100
    assert [v.shape for v in truth.V] == [(p, 2) for p in dims]


def test_ground_truth_invariants():
    cfg = SimConfig(dims=(20, 30, 25), n=40, r0=3, case="II", seed=11)
    ds, truth = generate(cfg)
    for m in [truth.U, *truth.U0, *truth.V, *truth.V0]:
        np.testing.assert_allclose(m.T @ m, np.eye(m.shape[1]), atol=1e-8)
        assert np.all(np.abs(m.sum(axis=0)) <= 1e-8)
    energy = sum(np.sum(z * z) for z in truth.Z)
    ratio = energy / (cfg.n * sum(cfg.dims) * truth.noise_sd**2)
    assert ratio == pytest.approx(1.0, abs=1e-10)
    for i, x in enumerate(ds.arrays()):
        expected = truth.U @ (truth.V[i] * truth.D[i]).T + truth.U0[i] @ (truth.V0[i] * truth.D0[i]).T
        np.testing.assert_allclose(truth.Z[i], expected, atol=1e-12)
        resid = x - truth.Z[i]
        assert abs(resid.std() / truth.noise_sd - 1) < 0.05


def test_noiseless_orthogonal_hook():
    cfg = SimConfig(dims=(8, 9, 10), n=30, r0=2, seed=4)
    ds, truth = generate(cfg, noiseless=True, orthogonal_individual=True)
    cc = cross_covariances(ds)
    for (i, j), s in cc.pairs.items():
        np.testing.assert_allclose(s, (truth.V[i] * truth.D[i] * truth.D[j]) @ truth.V[j].T, atol=1e-8)
    assert not truth.noise_applied


def test_generate_reproducible():
    cfg = SimConfig(dims=(5, 6), n=12, r0=1, seed=9)
    a, _ = generate(cfg)
    b, _ = generate(cfg)
    for x, y in zip(a.arrays(), b.arrays()):
        np.testing.assert_array_equal(x, y)


def test_individual_scores_independent_per_view():
    _, truth = generate(SimConfig(dims=(10, 10, 10), n=50, seed=2))
    assert not np.allclose(np.abs(truth.U0[0]), np.abs(truth.U0[1]))


def test_truth_json(tmp_path):
    _, truth = generate(SimConfig(dims=(4, 5), n=10, r0=1, seed=0))
    truth.to_json(tmp_path / "t.json")
    assert (tmp_path / "t.json").read_text().startswith("{")
