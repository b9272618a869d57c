"""Thompson Sampling on filtered context estimates, plus baseline policies."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .environment import ProblemInstance, RoundDraw
from .errors import DimensionMismatch, OracleAccessDenied
from .gaussian_core import cholesky, mvn_sample_precision, spd_inverse, spd_solve, symmetrize
from .streams import RandomStream


class PolicyKind(str, enum.Enum):
    THOMPSON = "thompson"
    GREEDY = "greedy"
    RANDOM = "random"
    ORACLE = "oracle"
    FULL_OBS_THOMPSON = "full_obs_thompson"

    def __str__(self) -> str:
        return self.value

    @property
    def observes_contexts(self) -> bool:
        """True when the policy learns from (and acts on) the hidden contexts."""
        return self is PolicyKind.FULL_OBS_THOMPSON


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """Gaussian belief ``N(mu_hat, B^{-1})`` over the reward weights at round ``t``."""

    B: NDArray
    mu_hat: NDArray
    t: int = 1
    chol_B: NDArray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.chol_B is None:
            object.__setattr__(self, "chol_B", cholesky(self.B))

    @property
    def d(self) -> int:
        return self.mu_hat.shape[0]

    @property
    def covariance(self) -> NDArray:
        return spd_inverse(self.chol_B)


@dataclass
class History:
    chosen_estimates: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.chosen_estimates) != len(self.rewards):
            raise DimensionMismatch("history needs one reward per chosen estimate")

    def append(self, x_hat: NDArray, reward: float) -> None:
        self.chosen_estimates.append(np.asarray(x_hat, dtype=float))
        self.rewards.append(float(reward))

    def __len__(self) -> int:
        return len(self.rewards)


def init_posterior(prior: NDArray, d: int | None = None) -> PosteriorState:
    """Belief at round 1: precision ``prior^{-1}`` and zero mean."""
    prior = np.asarray(prior, dtype=float)
    if d is not None and prior.shape != (d, d):
        raise DimensionMismatch(f"prior has shape {prior.shape}, expected ({d}, {d})")
    B = spd_inverse(cholesky(prior))
    return PosteriorState(B=B, mu_hat=np.zeros(prior.shape[0]), t=1)


def sample_parameter(state: PosteriorState, rng: RandomStream, scale: float = 1.0) -> NDArray:
    """Draw ``mu_tilde ~ N(mu_hat, scale * B^{-1})``."""
    if scale == 1.0:
        return mvn_sample_precision(state.mu_hat, state.chol_B, rng)
    return mvn_sample_precision(state.mu_hat, state.chol_B / np.sqrt(scale), rng)


def select_arm(estimates: NDArray, mu: NDArray) -> int:
    """Index of the row maximizing ``row @ mu``; ties go to the lowest index."""
    estimates = np.asarray(estimates, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if estimates.ndim != 2 or estimates.shape[0] < 1 or estimates.shape[1] != mu.shape[0]:
        raise DimensionMismatch(f"estimates {estimates.shape} incompatible with mu {mu.shape}")
    return int(np.argmax(estimates @ mu))


def update_posterior(state: PosteriorState, x_hat: NDArray, reward: float) -> PosteriorState:
    """Rank-one precision update followed by a fresh factorization.

    ``B' = B + x x'`` and ``mu' = B'^{-1} (B mu + x r)``.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != state.mu_hat.shape:
        raise DimensionMismatch(f"x_hat has shape {x_hat.shape}, expected {state.mu_hat.shape}")
    B_next = symmetrize(state.B + np.outer(x_hat, x_hat))
    chol = cholesky(B_next)
    mu_next = spd_solve(chol, state.B @ state.mu_hat + x_hat * reward)
    return PosteriorState(B=B_next, mu_hat=mu_next, t=state.t + 1, chol_B=chol)


def posterior_from_history(prior: NDArray, hist: History) -> PosteriorState:
    """Batch posterior: ``B = prior^{-1} + sum x x'``, ``mu_hat = B^{-1} sum x r``."""
    state = init_posterior(prior)
    if len(hist) == 0:
        return state
    X = np.asarray(hist.chosen_estimates, dtype=float).reshape(len(hist), -1)
    r = np.asarray(hist.rewards, dtype=float)
    B = symmetrize(state.B + X.T @ X)
    chol = cholesky(B)
    return PosteriorState(B=B, mu_hat=spd_solve(chol, X.T @ r), t=len(hist) + 1, chol_B=chol)


def act(
    kind: PolicyKind | str,
    state: PosteriorState,
    draw: RoundDraw,
    inst: Optional[ProblemInstance],
    rng: RandomStream,
    posterior_scale: float = 1.0,
) -> tuple[int, NDArray]:
    """Choose an arm for one round; returns ``(arm, mu_used)``.

    ``inst`` is only consulted by the oracle (for ``mu_star``) and may be
    ``None`` for every other policy.
    """
    kind = PolicyKind(kind)
    estimates = draw.context_estimates
    if kind is PolicyKind.THOMPSON:
        mu = sample_parameter(state, rng, posterior_scale)
        return select_arm(estimates, mu), mu
    if kind is PolicyKind.GREEDY:
        return select_arm(estimates, state.mu_hat), state.mu_hat
    if kind is PolicyKind.RANDOM:
        return int(rng.integers(estimates.shape[0])), state.mu_hat
    if kind is PolicyKind.ORACLE:
        if inst is None:
            raise OracleAccessDenied("oracle policy needs the problem instance (mu_star)")
        return select_arm(estimates, inst.mu_star), inst.mu_star
    if draw.contexts is None:
        raise OracleAccessDenied("full_obs_thompson needs the hidden contexts")
    mu = sample_parameter(state, rng, posterior_scale)
    return select_arm(draw.contexts, mu), mu


def thompson_select_batch(
    B: NDArray, b: NDArray, estimates: NDArray, z: NDArray, scale: float = 1.0
) -> tuple[NDArray, NDArray, NDArray]:
    """Vectorized Thompson decision for ``R`` independent trajectories.

    ``B`` is ``(R, d, d)``, ``b = sum x r`` is ``(R, d)``, ``estimates`` is
    ``(R, N, d)`` and ``z`` holds the ``(R, d)`` standard normals. Returns
    ``(arms, mu_tilde, mu_hat)``. Row ``k`` matches what ``act`` computes for
    a single trajectory fed the same ``z``.
    """
    L = np.linalg.cholesky(B)
    mu_hat = np.linalg.solve(B, b[..., None])[..., 0]
    offset = np.linalg.solve(np.swapaxes(L, 1, 2), z[..., None])[..., 0]
    mu_tilde = mu_hat + np.sqrt(scale) * offset
    scores = np.einsum("rnd,rd->rn", estimates, mu_tilde)
    return np.argmax(scores, axis=1), mu_tilde, mu_hat


def posterior_means_batch(B: NDArray, b: NDArray) -> NDArray:
    return np.linalg.solve(B, b[..., None])[..., 0]


def stack_states(states: Sequence[PosteriorState]) -> tuple[NDArray, NDArray]:
    """``(B, b)`` arrays for the batch routines, with ``b = B mu_hat``."""
    B = np.stack([s.B for s in states])
    b = np.stack([s.B @ s.mu_hat for s in states])
    return B, b
