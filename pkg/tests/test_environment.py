import numpy as np
import pytest

from pocmab.environment import (
    GenScheme,
    ProblemInstance,
    derive_operators,
    generate_instance,
    realize_reward,
    spawn_round,
    validate_filter,
)
from pocmab.errors import DimensionMismatch, ValidationError
from pocmab.streams import RandomStream


def make_instance(A=None, sigma_x=None, sigma_y=None, sigma2=1.0, mu_star=(1.0, 1.0), N=3):
    mu_star = np.asarray(mu_star, dtype=float)
    d = mu_star.shape[0]
    eye = np.eye(d)
    return ProblemInstance(
        d=d, N=N,
        A=eye if A is None else A,
        sigma_x=eye if sigma_x is None else sigma_x,
        sigma_y=eye if sigma_y is None else sigma_y,
        sigma2=sigma2, mu_star=mu_star,
    )


def test_generate_is_deterministic():
    a = generate_instance(10, 5, GenScheme(), RandomStream(77))
    b = generate_instance(10, 5, GenScheme(), RandomStream(77))
    assert a.to_dict() == b.to_dict()


def test_default_scheme_settings():
    inst = generate_instance(4, 3, None, RandomStream(1))
    np.testing.assert_array_equal(inst.sigma_x, np.eye(4))
    np.testing.assert_array_equal(inst.sigma_y, np.eye(4))
    assert inst.sigma2 == 1.0
    assert np.linalg.norm(inst.mu_star) > 0


def test_generated_A_nonsingular_over_many_seeds():
    for seed in range(1000):
        inst = generate_instance(5, 2, None, RandomStream(seed))
        sv = np.linalg.svd(inst.A, compute_uv=False)
        assert sv[-1] > 1e-8 * sv[0]
        assert sv[0] / sv[-1] < 1e6


def test_explicit_scheme_roundtrip():
    inst = make_instance(A=np.array([[2.0, 1.0], [0.0, 1.0]]), mu_star=(0.3, -1.0))
    again = generate_instance(2, 3, GenScheme("explicit", inst.to_dict()), RandomStream(0))
    assert again.to_dict() == inst.to_dict()
    with pytest.raises(DimensionMismatch):
        generate_instance(3, 3, GenScheme("explicit", inst.to_dict()), RandomStream(0))


def test_instance_file_roundtrip(tmp_path):
    inst = generate_instance(3, 4, None, RandomStream(5))
    inst.save(tmp_path / "inst.json")
    assert ProblemInstance.load(tmp_path / "inst.json").to_dict() == inst.to_dict()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"A": np.array([[1.0, 2.0], [2.0, 4.0]])},
        {"sigma_x": np.array([[1.0, 2.0], [2.0, 1.0]])},
        {"mu_star": (0.0, 0.0)},
        {"sigma2": -1.0},
    ],
)
def test_instance_invariants(kwargs):
    with pytest.raises(ValueError):
        make_instance(**kwargs)


def test_derive_identity_case():
    ops = derive_operators(make_instance())
    np.testing.assert_allclose(ops.D, 0.5 * np.eye(2), atol=1e-15)
    np.testing.assert_allclose(ops.Sigma_xy, 0.5 * np.eye(2), atol=1e-15)
    assert ops.sigma2_ry == pytest.approx(2.0, rel=1e-14)


def test_derive_perfect_observation_limit():
    ops = derive_operators(make_instance(sigma_y=1e-8 * np.eye(2)))
    assert np.linalg.norm(ops.D - np.eye(2)) < 1e-6


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("whitening", ["marginal", "noise"])
def test_derived_invariants(seed, whitening):
    gen = np.random.default_rng(seed)
    d = 4
    a = gen.standard_normal((d, d))
    sx = a @ a.T + np.eye(d)
    b = gen.standard_normal((d, d))
    sy = b @ b.T + 0.3 * np.eye(d)
    inst = make_instance(A=gen.standard_normal((d, d)), sigma_x=sx, sigma_y=sy, sigma2=0.7, mu_star=gen.standard_normal(d))
    ops = derive_operators(inst, whitening)
    sy_inv = np.linalg.inv(sy)
    info = inst.A.T @ sy_inv @ inst.A + np.linalg.inv(sx)
    assert np.abs(ops.Sigma_xy @ info - np.eye(d)).max() <= 1e-9
    assert np.abs(ops.D - ops.Sigma_xy @ inst.A.T @ sy_inv).max() <= 1e-10
    assert ops.sigma2_ry == pytest.approx(inst.mu_star @ ops.Sigma_xy @ inst.mu_star + 0.7, rel=1e-12)
    target = ops.D @ (inst.A @ sx @ inst.A.T + sy) @ ops.D.T if whitening == "marginal" else ops.D @ sy @ ops.D.T
    np.testing.assert_allclose(ops.S @ ops.S, target, rtol=1e-9, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(ops.S) > 0)
    np.testing.assert_allclose(ops.S @ ops.S_inv, np.eye(d), atol=1e-8)


def test_spawn_round_shapes_and_identity(rng):
    inst = generate_instance(4, 6, None, RandomStream(3))
    ops = derive_operators(inst)
    draw = spawn_round(inst, ops, rng)
    for arr in (draw.contexts, draw.outputs, draw.context_estimates):
        assert arr.shape == (6, 4)
    np.testing.assert_allclose(draw.context_estimates, draw.outputs @ ops.D.T, atol=1e-12)
    assert draw.hidden().contexts is None


def test_spawn_round_statistics():
    sx = np.array([[2.0, 0.5], [0.5, 1.0]])
    sy = np.array([[0.5, -0.2], [-0.2, 0.8]])
    inst = make_instance(A=np.array([[1.0, 2.0], [-1.0, 0.5]]), sigma_x=sx, sigma_y=sy, N=10)
    ops = derive_operators(inst)
    rng, nrng = RandomStream(10), RandomStream(11)
    ctx, noise = [], []
    for _ in range(10_000):
        draw = spawn_round(inst, ops, rng, nrng)
        ctx.append(draw.contexts)
        noise.append(draw.outputs - draw.contexts @ inst.A.T)
    ctx = np.concatenate(ctx)
    noise = np.concatenate(noise)
    assert np.linalg.norm(np.cov(ctx, rowvar=False) - sx, 2) <= 0.05 * np.linalg.norm(sx, 2)
    assert np.linalg.norm(np.cov(noise, rowvar=False) - sy, 2) <= 0.05 * np.linalg.norm(sy, 2)


def test_reward_noiseless():
    inst = make_instance(sigma2=0.0, mu_star=(2.0, -1.0))
    assert realize_reward(inst, np.array([1.5, 0.5]), RandomStream(0)) == pytest.approx(2.5, abs=1e-15)


def test_reward_statistics():
    inst = make_instance(sigma2=2.5, mu_star=(2.0, -1.0))
    rng = RandomStream(4)
    n = 100_000
    zero = np.array([realize_reward(inst, np.zeros(2), rng) for _ in range(n)])
    assert abs(zero.mean()) < 4 * np.sqrt(2.5) / np.sqrt(n)
    ctx = np.array([0.3, 0.7])
    resid = np.array([realize_reward(inst, ctx, rng) for _ in range(n)]) - ctx @ inst.mu_star
    assert resid.var() == pytest.approx(2.5, rel=0.05)


def test_reward_dimension_check(rng):
    with pytest.raises(DimensionMismatch):
        realize_reward(make_instance(), np.zeros(3), rng)


def test_validate_filter_identity_case():
    inst = make_instance(mu_star=(1.0, -0.5, 2.0))
    ops = derive_operators(inst)
    rep = validate_filter(inst, ops, 100_000, RandomStream(21))
    assert np.abs(rep.regression - 0.5 * np.eye(3)).max() <= 0.02
    assert rep.residual_rel_err <= 0.05
    assert rep.xhat_cov_rel_err_marginal <= 0.05
    assert rep.passed()


def test_validate_filter_separates_whitening_candidates():
    inst = generate_instance(3, 2, None, RandomStream(8))
    ops = derive_operators(inst)
    rep = validate_filter(inst, ops, 100_000, RandomStream(9))
    assert rep.xhat_cov_rel_err_marginal <= 0.05
    # the noise-only candidate misses the signal part of Cov(x_hat)
    assert rep.xhat_cov_rel_err_noise > 0.2


def test_validate_filter_sample_floor(rng):
    inst = make_instance()
    with pytest.raises(ValidationError):
        validate_filter(inst, derive_operators(inst), 100, rng)
