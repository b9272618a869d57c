"""Seeded experiment runner: replications, aggregation and CSV output.

Random-stream layout per replication ``k`` of master seed ``s``::

    RandomStream(s).substream(k)
        .substream("instance")        problem instance
        .substream("contexts")        hidden contexts
        .substream("output-noise")    observation noise
        .substream("reward-noise")    one standard normal per (round, arm)
        .substream("policy:<kind>")   each policy's private decisions

so adding a policy, or more replications, never perturbs existing streams.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import yaml
from numpy.typing import NDArray

from .environment import (
    WHITENING_CHOICES,
    DerivedOperators,
    GenScheme,
    ProblemInstance,
    derive_operators,
    generate_instance,
    reward_from_noise,
    spawn_round,
)
from .errors import ParseError, ValidationError
from .metrics import RoundOutcome, estimation_error, instant_regret, normalized_regret
from .policy import PolicyKind, act, init_posterior, posterior_means_batch, select_arm, thompson_select_batch, update_posterior
from .streams import RandomStream

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (10, 50, 100, 250, 500, 1000)
ALL_POLICIES = tuple(PolicyKind)
CSV_HEADER = ("t", "policy", "mean_cum_regret", "se_cum_regret", "mean_norm_regret", "mean_est_error", "se_est_error")
THREADS_ENV = "POCMAB_THREADS"


@dataclass
class ExperimentConfig:
    d: int = 10
    N: int = 10
    T: int = 1000
    replications: int = 50
    master_seed: int = 0
    policies: list = field(default_factory=lambda: list(ALL_POLICIES))
    prior_scale: float = 1.0
    scaled_posterior: bool = False
    gen_scheme: GenScheme = field(default_factory=GenScheme)
    checkpoints: Optional[list] = None
    output_path: str = "results.csv"
    whitening: str = "marginal"

    def __post_init__(self) -> None:
        self.policies = [PolicyKind(p) for p in self.policies]
        if self.checkpoints is None:
            self.checkpoints = [c for c in DEFAULT_CHECKPOINTS if c <= self.T]
        self.validate()

    def validate(self) -> None:
        for name in ("d", "N", "T", "replications"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.master_seed < 2**64:
            raise ValidationError("master_seed must fit in 64 unsigned bits")
        if not self.prior_scale > 0:
            raise ValidationError("prior_scale must be positive")
        if not self.policies:
            raise ValidationError("at least one policy is required")
        if len(set(self.policies)) != len(self.policies):
            raise ValidationError("policies must be distinct")
        if self.whitening not in WHITENING_CHOICES:
            raise ValidationError(f"whitening must be one of {WHITENING_CHOICES}")
        bad = [c for c in self.checkpoints if not 1 <= c <= self.T]
        if bad:
            raise ValidationError(f"checkpoints outside [1, T]: {bad}")
        self.checkpoints = sorted(set(self.checkpoints))

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["policies"] = [p.value for p in self.policies]
        out["gen_scheme"] = self.gen_scheme.to_dict()
        return out

    def prior(self) -> NDArray:
        return self.prior_scale * np.eye(self.d)


_INT_KEYS = ("d", "N", "T", "replications", "master_seed")


def _config_from_mapping(data: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key not in known:
            raise ParseError("unknown key", str(key))
        if key in _INT_KEYS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ParseError(f"expected an integer, got {value!r}", key)
        elif key == "prior_scale":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParseError(f"expected a number, got {value!r}", key)
            value = float(value)
        elif key == "scaled_posterior":
            if not isinstance(value, bool):
                raise ParseError(f"expected a boolean, got {value!r}", key)
        elif key == "policies":
            if not isinstance(value, list):
                raise ParseError("expected a list", key)
            for i, p in enumerate(value):
                try:
                    PolicyKind(p)
                except ValueError:
                    raise ParseError(f"unknown policy {p!r}", f"{key}[{i}]") from None
        elif key == "checkpoints":
            if value is not None:
                if not isinstance(value, list):
                    raise ParseError("expected a list", key)
                for i, c in enumerate(value):
                    if isinstance(c, bool) or not isinstance(c, int):
                        raise ParseError(f"expected an integer, got {c!r}", f"{key}[{i}]")
        elif key == "gen_scheme":
            value = _parse_scheme(value)
        elif key in ("output_path", "whitening"):
            if not isinstance(value, str):
                raise ParseError("expected a string", key)
        kwargs[key] = value
    return ExperimentConfig(**kwargs)


def _parse_scheme(value: Any) -> GenScheme:
    if isinstance(value, str):
        value = {"kind": value}
    if not isinstance(value, dict):
        raise ParseError("expected a string or mapping", "gen_scheme")
    extra = set(value) - {"kind", "instance"}
    if extra:
        raise ParseError("unknown key", f"gen_scheme.{sorted(extra)[0]}")
    kind = value.get("kind", "default")
    if kind not in ("default", "explicit"):
        raise ParseError(f"unknown scheme {kind!r}", "gen_scheme.kind")
    instance = value.get("instance")
    if instance is not None and not isinstance(instance, dict):
        raise ParseError("expected a mapping", "gen_scheme.instance")
    return GenScheme(kind=kind, instance=instance)


def parse_config(source: str) -> ExperimentConfig:
    """Parse a YAML/JSON document into a validated config; missing keys take defaults."""
    try:
        data = yaml.safe_load(source) if source.strip() else {}
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed document: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError("top level must be a mapping")
    return _config_from_mapping(data)


def emit_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# replications


@dataclass
class PolicyTrajectory:
    kind: PolicyKind
    outcomes: list
    est_error: NDArray  # ||mu_hat(t) - mu*|| / sqrt(d), t = 1..T
    snapshots: dict  # checkpoint t -> mu_hat(t)

    @property
    def instant_regret(self) -> NDArray:
        return np.array([o.instant_regret for o in self.outcomes])

    @property
    def cum_regret(self) -> NDArray:
        return np.cumsum(self.instant_regret)


@dataclass
class ReplicationResult:
    rep_index: int
    instance: ProblemInstance
    trajectories: dict  # PolicyKind -> PolicyTrajectory


def replication_stream(cfg: ExperimentConfig, rep_index: int) -> RandomStream:
    return RandomStream(cfg.master_seed).substream(rep_index)


def replication_instance(cfg: ExperimentConfig, rep_index: int) -> tuple[ProblemInstance, DerivedOperators]:
    rep = replication_stream(cfg, rep_index)
    inst = generate_instance(cfg.d, cfg.N, cfg.gen_scheme, rep.substream("instance"))
    return inst, derive_operators(inst, cfg.whitening)


def run_replication(cfg: ExperimentConfig, rep_index: int) -> ReplicationResult:
    """Run every configured policy on one instance and one shared sequence of rounds.

    Instantaneous regret is the gap between the oracle's conditional expected
    reward and the chosen arm's expected reward given what the policy could
    see: ``x_hat @ mu*`` for policies acting on estimates, ``x @ mu*`` for
    ``full_obs_thompson``.
    """
    rep = replication_stream(cfg, rep_index)
    inst, ops = replication_instance(cfg, rep_index)
    ctx_rng = rep.substream("contexts")
    noise_rng = rep.substream("output-noise")
    reward_rng = rep.substream("reward-noise")
    policy_rngs = {k: rep.substream(f"policy:{k.value}") for k in cfg.policies}
    scale = ops.sigma2_ry if cfg.scaled_posterior else 1.0
    prior = cfg.prior()
    mu_star = inst.mu_star
    checkpoints = set(cfg.checkpoints)

    states = {k: init_posterior(prior, cfg.d) for k in cfg.policies}
    outcomes = {k: [] for k in cfg.policies}
    errors = {k: np.empty(cfg.T) for k in cfg.policies}
    snapshots = {k: {} for k in cfg.policies}

    for t in range(1, cfg.T + 1):
        draw = spawn_round(inst, ops, ctx_rng, noise_rng)
        hidden = draw.hidden()
        z = reward_rng.standard_normal(cfg.N)
        estimates = draw.context_estimates
        oracle = select_arm(estimates, mu_star)
        for kind in cfg.policies:
            state = states[kind]
            errors[kind][t - 1] = estimation_error(state.mu_hat, mu_star, cfg.d)
            if t in checkpoints:
                snapshots[kind][t] = state.mu_hat.copy()
            full_obs = kind.observes_contexts
            arm, mu_used = act(
                kind, state, draw if full_obs else hidden,
                inst if kind is PolicyKind.ORACLE else None,
                policy_rngs[kind], scale,
            )
            context = draw.contexts[arm]
            reward = reward_from_noise(inst, context, z[arm])
            if full_obs:
                regret = float(estimates[oracle] @ mu_star - context @ mu_star)
                feature = context
            else:
                regret = instant_regret(estimates, arm, oracle, mu_star)
                feature = estimates[arm]
            outcomes[kind].append(RoundOutcome(
                t=t, chosen=arm, oracle=oracle, reward=reward, instant_regret=regret,
                mu_tilde=mu_used, mu_hat_snapshot=state.mu_hat,
            ))
            states[kind] = update_posterior(state, feature, reward)

    return ReplicationResult(
        rep_index=rep_index,
        instance=inst,
        trajectories={k: PolicyTrajectory(k, outcomes[k], errors[k], snapshots[k]) for k in cfg.policies},
    )


def _replication_arrays(args: tuple[ExperimentConfig, int]) -> dict:
    cfg, rep_index = args
    res = run_replication(cfg, rep_index)
    return {k.value: (tr.instant_regret, tr.est_error) for k, tr in res.trajectories.items()}


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    n = int(raw) if raw else 0
    if n < 0:
        raise ValidationError(f"{THREADS_ENV} must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class AggregateRecord:
    t: int
    policy: str
    mean_cum_regret: float
    se_cum_regret: float
    mean_norm_regret: Optional[float]
    mean_est_error: float
    se_est_error: float


def _mean_se(x: NDArray) -> tuple[NDArray, NDArray]:
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


def aggregate(cfg: ExperimentConfig, per_rep: Sequence[dict]) -> list[AggregateRecord]:
    """Reduce per-replication arrays (in replication order) to per-(policy, t) records."""
    records = []
    for policy in sorted(p.value for p in cfg.policies):
        cum = np.cumsum(np.stack([r[policy][0] for r in per_rep]), axis=1)
        err = np.stack([r[policy][1] for r in per_rep])
        m_cum, se_cum = _mean_se(cum)
        m_err, se_err = _mean_se(err)
        for i in range(cfg.T):
            t = i + 1
            norm = normalized_regret(m_cum[i], cfg.d, t, cfg.N) if t >= 2 and cfg.N >= 2 else None
            records.append(AggregateRecord(
                t=t, policy=policy,
                mean_cum_regret=float(m_cum[i]), se_cum_regret=float(se_cum[i]),
                mean_norm_regret=None if norm is None else float(norm),
                mean_est_error=float(m_err[i]), se_est_error=float(se_err[i]),
            ))
    return records


def run_replications(cfg: ExperimentConfig, workers: int | None = None) -> list[dict]:
    """Per-replication ``{policy: (instant_regret, est_error)}`` in replication order."""
    workers = worker_count() if workers is None else workers
    jobs = [(cfg, k) for k in range(cfg.replications)]
    if workers <= 1 or cfg.replications == 1:
        return [_replication_arrays(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, cfg.replications)) as pool:
        return list(pool.map(_replication_arrays, jobs))


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[AggregateRecord]:
    log.info("running %d replications (d=%d, N=%d, T=%d)", cfg.replications, cfg.d, cfg.N, cfg.T)
    return aggregate(cfg, run_replications(cfg, workers))


# ---------------------------------------------------------------------------
# CSV


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.10g}"


def emit_csv(records: Sequence[AggregateRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([
                r.t, r.policy, _fmt(r.mean_cum_regret), _fmt(r.se_cum_regret),
                _fmt(r.mean_norm_regret), _fmt(r.mean_est_error), _fmt(r.se_est_error),
            ])


def read_csv(path: str | Path) -> list[AggregateRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ParseError(f"unexpected header {header}")
        out = []
        for row in reader:
            out.append(AggregateRecord(
                t=int(row[0]), policy=row[1],
                mean_cum_regret=float(row[2]), se_cum_regret=float(row[3]),
                mean_norm_regret=float(row[4]) if row[4] else None,
                mean_est_error=float(row[5]), se_est_error=float(row[6]),
            ))
    return out


# ---------------------------------------------------------------------------
# lockstep Thompson trajectories for covariance studies


def run_snapshot_batch(
    inst: ProblemInstance,
    ops: DerivedOperators,
    replications: int,
    checkpoints: Sequence[int],
    rng: RandomStream,
    prior_scale: float = 1.0,
    posterior_scale: float = 1.0,
) -> NDArray:
    """Posterior means ``mu_hat(t)`` of many Thompson trajectories on one instance.

    All trajectories advance together with batched linear algebra; they share
    the instance but draw independent rounds. Returns an array of shape
    ``(replications, len(checkpoints), d)``.
    """
    checkpoints = sorted(set(checkpoints))
    R, N, d = replications, inst.N, inst.d
    out = np.empty((R, len(checkpoints), d))
    if not checkpoints:
        return out
    B = np.tile(np.eye(d) / prior_scale, (R, 1, 1))
    b = np.zeros((R, d))
    rows = np.arange(R)
    k = 0
    for t in range(1, checkpoints[-1] + 1):
        if t == checkpoints[k]:
            out[:, k, :] = posterior_means_batch(B, b)
            k += 1
            if k == len(checkpoints):
                break
        x = rng.standard_normal((R, N, d)) @ ops.chol_x.T
        y = x @ inst.A.T + rng.standard_normal((R, N, d)) @ ops.chol_y.T
        x_hat = y @ ops.D.T
        z = rng.standard_normal((R, d))
        arms, _, _ = thompson_select_batch(B, b, x_hat, z, posterior_scale)
        feat = x_hat[rows, arms]
        r = x[rows, arms] @ inst.mu_star + math.sqrt(inst.sigma2) * rng.standard_normal(R)
        B += feat[:, :, None] * feat[:, None, :]
        b += feat * r[:, None]
    return out
