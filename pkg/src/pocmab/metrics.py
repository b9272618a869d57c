"""Regret accounting, estimation error, order-statistic constants and the
large-t covariance of the posterior mean."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtri

from .environment import DerivedOperators
from .errors import DimensionMismatch, InsufficientReplications, UndefinedNormalization, ZeroVector
from .gaussian_core import cholesky, projection_matrix, spd_inverse, symmetrize
from .streams import RandomStream

MIN_REPLICATIONS = 200


@dataclass(frozen=True, eq=False)
class RoundOutcome:
    t: int
    chosen: int
    oracle: int
    reward: float
    instant_regret: float
    mu_tilde: Optional[NDArray]
    mu_hat_snapshot: NDArray


def instant_regret(estimates: NDArray, chosen: int, oracle: int, mu_star: NDArray) -> float:
    """Conditional expected reward gap ``(x_hat[oracle] - x_hat[chosen]) @ mu_star``."""
    n = estimates.shape[0]
    for name, idx in (("chosen", chosen), ("oracle", oracle)):
        if not 0 <= idx < n:
            raise IndexError(f"{name} arm {idx} out of range for {n} arms")
    return float((estimates[oracle] - estimates[chosen]) @ mu_star)


def cumulative_regret(outcomes: Iterable[RoundOutcome]) -> NDArray:
    return np.cumsum([o.instant_regret for o in outcomes], dtype=float)


def estimation_error(mu_hat: NDArray, mu_star: NDArray, d: int | None = None) -> float:
    """``||mu_hat - mu_star|| / sqrt(d)``."""
    mu_hat = np.asarray(mu_hat, dtype=float)
    mu_star = np.asarray(mu_star, dtype=float)
    if mu_hat.shape != mu_star.shape:
        raise DimensionMismatch(f"{mu_hat.shape} vs {mu_star.shape}")
    d = mu_star.shape[0] if d is None else d
    return float(np.linalg.norm(mu_hat - mu_star) / math.sqrt(d))


def regret_normalizer(d: int, t: int, N: int) -> float:
    if t < 2 or N < 2:
        raise UndefinedNormalization(f"d log t sqrt(log N) vanishes for t={t}, N={N}")
    return d * math.log(t) * math.sqrt(math.log(N))


def normalized_regret(regret: float, d: int, t: int, N: int) -> float:
    """``regret / (d ln t sqrt(ln N))``; undefined for ``t < 2`` or ``N < 2``."""
    return regret / regret_normalizer(d, t, N)


@dataclass(frozen=True)
class Constants:
    N: int
    c_N: float
    k_N: float
    mc_samples: int
    std_error_c: float
    std_error_k: float


def _max_of_normals(N: int, n: int, rng: RandomStream, method: str) -> NDArray:
    if method == "direct":
        return rng.standard_normal((n, N)).max(axis=1)
    if method == "order_statistic":
        # max of N iid N(0,1) has cdf Phi(v)^N, so invert U^(1/N); the tail form keeps precision for large N
        u = rng.uniform(n)
        return -ndtri(-np.expm1(np.log(u) / N))
    raise ValueError(f"unknown sampling method {method!r}")


def estimate_constants(
    N: int,
    samples: int = 1_000_000,
    rng: RandomStream | None = None,
    method: str = "direct",
    chunk: int = 100_000,
) -> Constants:
    """Monte-Carlo ``c_N = E[max V_i]`` and ``k_N = E[(max V_i)^2]`` over ``N`` standard normals.

    ``method="direct"`` takes the max of ``N`` draws per sample;
    ``"order_statistic"`` samples the maximum directly by inverse cdf, which
    costs O(1) per sample and is what large-``N`` sweeps should use.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if samples < 10_000:
        raise ValueError("estimate_constants needs at least 10^4 samples")
    rng = rng or RandomStream(0)
    s1 = s2 = s4 = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        v = _max_of_normals(N, n, rng, method)
        v2 = v * v
        s1 += v.sum()
        s2 += v2.sum()
        s4 += (v2 * v2).sum()
        done += n
    c = s1 / samples
    k = s2 / samples
    var_c = (s2 - samples * c * c) / (samples - 1)
    var_k = (s4 - samples * k * k) / (samples - 1)
    return Constants(
        N=N,
        c_N=float(c),
        k_N=float(k),
        mc_samples=samples,
        std_error_c=float(math.sqrt(max(var_c, 0.0) / samples)),
        std_error_k=float(math.sqrt(max(var_k, 0.0) / samples)),
    )


@dataclass(frozen=True, eq=False)
class LimitQuantities:
    """Large-t covariance targets for the posterior mean.

    ``M = P_{S mu*} (k_N - 1) + I`` is the limit of the whitened per-round
    information ``E[S^{-1} x x' S^{-1}]``. ``limit_cov = S M^{-1} S sigma2_ry``
    is the published limit of ``t Cov(mu_hat(t))``; ``asymptotic_cov =
    S^{-1} M^{-1} S^{-1} sigma2_ry`` is what ``B(t) / t -> S M S`` implies.
    The two coincide only when ``S = I``.
    """

    S: NDArray
    M: NDArray
    M_inv: NDArray
    limit_cov: NDArray
    asymptotic_cov: NDArray
    sigma2_ry: float
    k_N: float


def limit_quantities(ops: DerivedOperators, mu_star: NDArray, constants: Constants) -> LimitQuantities:
    S = ops.S
    d = S.shape[0]
    P = projection_matrix(S @ np.asarray(mu_star, dtype=float))
    M = symmetrize(P * (constants.k_N - 1.0) + np.eye(d))
    M_inv = spd_inverse(cholesky(M))
    limit_cov = symmetrize(S @ M_inv @ S) * ops.sigma2_ry
    asymptotic_cov = symmetrize(ops.S_inv @ M_inv @ ops.S_inv) * ops.sigma2_ry
    return LimitQuantities(
        S=S, M=M, M_inv=M_inv, limit_cov=limit_cov, asymptotic_cov=asymptotic_cov,
        sigma2_ry=ops.sigma2_ry, k_N=constants.k_N,
    )


def angle_theta(S: NDArray, mu_star: NDArray, mu_tilde: NDArray) -> float:
    """Angle in ``[0, pi]`` between ``S mu_star`` and ``S mu_tilde``."""
    a = S @ np.asarray(mu_star, dtype=float)
    b = S @ np.asarray(mu_tilde, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if not (na > 0.0 and nb > 0.0):
        raise ZeroVector("angle undefined for a zero vector")
    cos = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return math.acos(cos)


@dataclass(frozen=True)
class RateRow:
    t: int
    scaled_trace: float
    target_trace: float
    ratio: float
    band: float  # 3-sigma Monte-Carlo half-width on ratio


def covariance_rate_check(
    snapshots: NDArray,
    checkpoints: Sequence[int],
    limit: LimitQuantities,
    target: str = "limit_cov",
) -> list[RateRow]:
    """Compare ``t * tr(Cov(mu_hat(t)))`` across replications with a limit trace.

    ``snapshots`` has shape ``(replications, len(checkpoints), d)``; rows are
    reduced in index order so the result does not depend on how they were
    produced. ``target`` picks ``limit_cov`` or ``asymptotic_cov``.
    """
    checkpoints = list(checkpoints)
    if not checkpoints:
        return []
    snapshots = np.asarray(snapshots, dtype=float)
    if snapshots.ndim != 3 or snapshots.shape[1] != len(checkpoints):
        raise DimensionMismatch(f"snapshots shape {snapshots.shape} does not match {len(checkpoints)} checkpoints")
    R = snapshots.shape[0]
    if R < MIN_REPLICATIONS:
        raise InsufficientReplications(f"need >= {MIN_REPLICATIONS} replications, got {R}")
    target_trace = float(np.trace(getattr(limit, target)))
    rows = []
    for k, t in enumerate(checkpoints):
        cov = np.atleast_2d(np.cov(snapshots[:, k, :], rowvar=False))
        scaled = t * float(np.trace(cov))
        # Var(tr C_hat) ~= 2 tr(C^2) / (R - 1) for Gaussian rows
        se = t * math.sqrt(2.0 * float(np.sum(cov * cov)) / (R - 1))
        rows.append(RateRow(t=t, scaled_trace=scaled, target_trace=target_trace,
                            ratio=scaled / target_trace, band=3.0 * se / target_trace))
    return rows
