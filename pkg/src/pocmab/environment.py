"""Problem instances and the hidden-context simulator.

Each arm's context ``x ~ N(0, Sigma_x)`` is hidden; the learner sees
``y = A x + e`` with ``e ~ N(0, Sigma_y)`` and the filtered estimate
``x_hat = E[x | y] = D y``. Pulling an arm pays ``x' mu_star + N(0, sigma2)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateA, DimensionMismatch, ValidationError
from .gaussian_core import cholesky, is_symmetric, mvn_sample_cov, spd_inverse, spd_solve, sym_sqrt, symmetrize
from .streams import RandomStream

MAX_CONDITION = 1e6
MAX_REDRAWS = 100
WHITENING_CHOICES = ("marginal", "noise")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    d: int
    N: int
    A: NDArray
    sigma_x: NDArray
    sigma_y: NDArray
    sigma2: float
    mu_star: NDArray

    def __post_init__(self) -> None:
        d = self.d
        if d < 1 or self.N < 1:
            raise ValidationError(f"need d >= 1 and N >= 1, got d={d}, N={self.N}")
        for name, shape in (("A", (d, d)), ("sigma_x", (d, d)), ("sigma_y", (d, d)), ("mu_star", (d,))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        sv = np.linalg.svd(self.A, compute_uv=False)
        if not sv[-1] > 1e-8 * sv[0]:
            raise ValidationError("A is singular (smallest singular value <= 1e-8 * largest)")
        for name in ("sigma_x", "sigma_y"):
            m = getattr(self, name)
            if not is_symmetric(m):
                raise ValidationError(f"{name} is not symmetric")
            cholesky(m)
        # sigma2 == 0 is admitted for noiseless test fixtures
        if not self.sigma2 >= 0.0:
            raise ValidationError("sigma2 must be non-negative")
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not np.linalg.norm(self.mu_star) > 0.0:
            raise ValidationError("mu_star must be nonzero")

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "N": self.N,
            "A": self.A.tolist(),
            "sigma_x": self.sigma_x.tolist(),
            "sigma_y": self.sigma_y.tolist(),
            "sigma2": self.sigma2,
            "mu_star": self.mu_star.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProblemInstance":
        missing = {"d", "N", "A", "sigma_x", "sigma_y", "sigma2", "mu_star"} - set(data)
        if missing:
            raise ValidationError(f"instance is missing keys: {sorted(missing)}")
        return cls(
            d=int(data["d"]),
            N=int(data["N"]),
            A=np.asarray(data["A"], dtype=float),
            sigma_x=np.asarray(data["sigma_x"], dtype=float),
            sigma_y=np.asarray(data["sigma_y"], dtype=float),
            sigma2=float(data["sigma2"]),
            mu_star=np.asarray(data["mu_star"], dtype=float),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ProblemInstance":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class GenScheme:
    """How to build an instance: ``default`` draws A and mu_star at random,
    ``explicit`` takes every field from ``instance``."""

    kind: str = "default"
    instance: Optional[dict] = None

    def __post_init__(self) -> None:
        if self.kind not in ("default", "explicit"):
            raise ValidationError(f"unknown generation scheme {self.kind!r}")
        if self.kind == "explicit" and self.instance is None:
            raise ValidationError("explicit scheme needs an instance")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.instance is not None:
            out["instance"] = self.instance
        return out


@dataclass(frozen=True, eq=False)
class DerivedOperators:
    """Filter quantities computed once per instance.

    ``S`` whitens the context estimates. With ``whitening="marginal"`` it is
    the root of ``Cov(x_hat) = D (A Sigma_x A' + Sigma_y) D'``; ``"noise"``
    uses the root of ``D Sigma_y D'`` instead.
    """

    D: NDArray
    Sigma_xy: NDArray
    sigma2_ry: float
    S: NDArray
    S_inv: NDArray
    whitening: str
    xhat_cov: NDArray
    noise_whitening_cov: NDArray
    chol_x: NDArray = field(repr=False)
    chol_y: NDArray = field(repr=False)

    @property
    def whitening_cov(self) -> NDArray:
        return self.xhat_cov if self.whitening == "marginal" else self.noise_whitening_cov


def generate_instance(d: int, N: int, scheme: GenScheme | None, rng: RandomStream) -> ProblemInstance:
    """Build a problem instance; a pure function of ``(d, N, scheme, rng)``."""
    scheme = scheme or GenScheme()
    if d < 1 or N < 1:
        raise ValidationError(f"need d >= 1 and N >= 1, got d={d}, N={N}")
    if scheme.kind == "explicit":
        inst = ProblemInstance.from_dict(scheme.instance)
        if (inst.d, inst.N) != (d, N):
            raise DimensionMismatch(f"explicit instance is (d={inst.d}, N={inst.N}), config says (d={d}, N={N})")
        return inst

    mu_star = rng.standard_normal(d)
    while not np.linalg.norm(mu_star) > 0.0:
        mu_star = rng.standard_normal(d)
    for _ in range(MAX_REDRAWS):
        A = rng.standard_normal((d, d))
        if np.linalg.cond(A) < MAX_CONDITION:
            break
    else:
        raise DegenerateA(f"{MAX_REDRAWS} draws of A all had condition number >= {MAX_CONDITION:g}")
    eye = np.eye(d)
    return ProblemInstance(d=d, N=N, A=A, sigma_x=eye, sigma_y=eye, sigma2=1.0, mu_star=mu_star)


def derive_operators(inst: ProblemInstance, whitening: str = "marginal") -> DerivedOperators:
    if whitening not in WHITENING_CHOICES:
        raise ValidationError(f"whitening must be one of {WHITENING_CHOICES}, got {whitening!r}")
    chol_x = cholesky(inst.sigma_x)
    chol_y = cholesky(inst.sigma_y)
    A = inst.A
    sy_inv_A = spd_solve(chol_y, A)  # Sigma_y^{-1} A
    info = symmetrize(A.T @ sy_inv_A + spd_inverse(chol_x))
    Sigma_xy = spd_inverse(cholesky(info))
    D = Sigma_xy @ sy_inv_A.T  # Sigma_xy A' Sigma_y^{-1}
    mu = inst.mu_star
    sigma2_ry = float(mu @ Sigma_xy @ mu + inst.sigma2)
    xhat_cov = symmetrize(D @ (A @ inst.sigma_x @ A.T + inst.sigma_y) @ D.T)
    noise_cov = symmetrize(D @ inst.sigma_y @ D.T)
    S = sym_sqrt(xhat_cov if whitening == "marginal" else noise_cov)
    S_inv = spd_inverse(cholesky(S))
    return DerivedOperators(
        D=D,
        Sigma_xy=Sigma_xy,
        sigma2_ry=sigma2_ry,
        S=S,
        S_inv=S_inv,
        whitening=whitening,
        xhat_cov=xhat_cov,
        noise_whitening_cov=noise_cov,
        chol_x=chol_x,
        chol_y=chol_y,
    )


@dataclass(frozen=True, eq=False)
class RoundDraw:
    contexts: Optional[NDArray]  # hidden; None when withheld from a policy
    outputs: NDArray
    context_estimates: NDArray

    def hidden(self) -> "RoundDraw":
        return RoundDraw(contexts=None, outputs=self.outputs, context_estimates=self.context_estimates)


def spawn_round(
    inst: ProblemInstance,
    ops: DerivedOperators,
    rng: RandomStream,
    noise_rng: RandomStream | None = None,
) -> RoundDraw:
    """Draw one round of contexts, outputs and filtered estimates.

    Contexts come from ``rng``; output noise from ``noise_rng`` when given
    (the harness keeps the two on separate substreams), else from ``rng``.
    """
    zero = np.zeros(inst.d)
    contexts = mvn_sample_cov(zero, ops.chol_x, rng, size=inst.N)
    noise = mvn_sample_cov(zero, ops.chol_y, noise_rng or rng, size=inst.N)
    outputs = contexts @ inst.A.T + noise
    return RoundDraw(contexts=contexts, outputs=outputs, context_estimates=outputs @ ops.D.T)


def reward_from_noise(inst: ProblemInstance, context: NDArray, z: float) -> float:
    """Reward given a pre-drawn standard normal ``z`` for the noise."""
    return float(np.asarray(context) @ inst.mu_star + np.sqrt(inst.sigma2) * z)


def realize_reward(inst: ProblemInstance, context: NDArray, rng: RandomStream) -> float:
    context = np.asarray(context, dtype=float)
    if context.shape != (inst.d,):
        raise DimensionMismatch(f"context has shape {context.shape}, expected ({inst.d},)")
    return reward_from_noise(inst, context, float(rng.standard_normal()))


def _rel_op_err(est: NDArray, ref: NDArray) -> float:
    return float(np.linalg.norm(est - ref, 2) / np.linalg.norm(ref, 2))


@dataclass
class ValidationReport:
    samples: int
    regression: NDArray
    D: NDArray
    regression_max_abs_err: float
    residual_var: float
    sigma2_ry: float
    residual_rel_err: float
    xhat_cov_empirical: NDArray
    xhat_cov_marginal: NDArray
    xhat_cov_noise: NDArray
    xhat_cov_rel_err_marginal: float
    xhat_cov_rel_err_noise: float

    def checks(self, regression_tol: float = 0.02, rel_tol: float = 0.05) -> dict[str, bool]:
        return {
            "regression_matches_D": self.regression_max_abs_err <= regression_tol,
            "residual_variance_matches_sigma2_ry": self.residual_rel_err <= rel_tol,
            "xhat_cov_matches_marginal": self.xhat_cov_rel_err_marginal <= rel_tol,
        }

    def passed(self, regression_tol: float = 0.02, rel_tol: float = 0.05) -> bool:
        return all(self.checks(regression_tol, rel_tol).values())


def validate_filter(inst: ProblemInstance, ops: DerivedOperators, samples: int, rng: RandomStream) -> ValidationReport:
    """Monte-Carlo check of the context filter against its closed forms.

    Compares (a) the least-squares regression of x on y with ``D``, (b) the
    variance of ``r - x_hat' mu_star`` with ``sigma2_ry``, and (c) the
    empirical covariance of ``x_hat`` with both whitening candidates.
    """
    if samples < 10_000:
        raise ValidationError("validate_filter needs at least 10^4 samples")
    zero = np.zeros(inst.d)
    x = mvn_sample_cov(zero, ops.chol_x, rng, size=samples)
    y = x @ inst.A.T + mvn_sample_cov(zero, ops.chol_y, rng, size=samples)
    r = x @ inst.mu_star + np.sqrt(inst.sigma2) * rng.standard_normal(samples)
    x_hat = y @ ops.D.T

    coef, *_ = np.linalg.lstsq(y, x, rcond=None)
    regression = coef.T  # x ~ regression @ y
    resid = r - x_hat @ inst.mu_star
    residual_var = float(np.var(resid, ddof=1))
    emp_cov = np.cov(x_hat, rowvar=False).reshape(inst.d, inst.d)
    return ValidationReport(
        samples=samples,
        regression=regression,
        D=ops.D,
        regression_max_abs_err=float(np.abs(regression - ops.D).max()),
        residual_var=residual_var,
        sigma2_ry=ops.sigma2_ry,
        residual_rel_err=abs(residual_var - ops.sigma2_ry) / ops.sigma2_ry,
        xhat_cov_empirical=emp_cov,
        xhat_cov_marginal=ops.xhat_cov,
        xhat_cov_noise=ops.noise_whitening_cov,
        xhat_cov_rel_err_marginal=_rel_op_err(emp_cov, ops.xhat_cov),
        xhat_cov_rel_err_noise=_rel_op_err(emp_cov, ops.noise_whitening_cov),
    )
