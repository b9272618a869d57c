"""Command-line entry point: ``pocmab simulate | constants | validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .environment import reward_from_noise, spawn_round, validate_filter
from .errors import ConfigError
from .harness import emit_csv, load_config, replication_instance, replication_stream, run_experiment
from .metrics import estimate_constants
from .policy import History, init_posterior, posterior_from_history, select_arm, update_posterior
from .streams import RandomStream

EQUIVALENCE_RTOL = 1e-8


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pocmab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment and write the aggregate CSV")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=None, help="overrides output_path from the config")

    const = sub.add_parser("constants", help="Monte-Carlo c_N and k_N")
    const.add_argument("--n", type=int, required=True)
    const.add_argument("--samples", type=int, default=1_000_000)
    const.add_argument("--seed", type=int, default=0)

    val = sub.add_parser("validate", help="check the context filter and posterior recursion")
    val.add_argument("--config", required=True)
    val.add_argument("--samples", type=int, default=100_000)
    val.add_argument("--steps", type=int, default=500, help="history length for the recursion check")
    return parser


def _simulate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_path)
    records = run_experiment(cfg)
    emit_csv(records, out)
    print(f"wrote {len(records)} rows to {out}")
    return 0


def _constants(args) -> int:
    if args.n < 1 or args.samples < 10_000:
        print("error: need --n >= 1 and --samples >= 10000", file=sys.stderr)
        return 2
    c = estimate_constants(args.n, args.samples, RandomStream(args.seed))
    print(f"N = {c.N}  samples = {c.mc_samples}")
    print(f"c_N = {c.c_N:.6f}  (se {c.std_error_c:.2e})")
    print(f"k_N = {c.k_N:.6f}  (se {c.std_error_k:.2e})")
    return 0


def recursion_mismatch(inst, ops, prior, steps: int, rng: RandomStream) -> tuple[float, float]:
    """Relative gaps between batch and recursive posteriors on a random-arm history."""
    hist = History()
    state = init_posterior(prior, inst.d)
    for _ in range(steps):
        draw = spawn_round(inst, ops, rng)
        arm = int(rng.integers(inst.N))
        reward = reward_from_noise(inst, draw.contexts[arm], float(rng.standard_normal()))
        hist.append(draw.context_estimates[arm], reward)
        state = update_posterior(state, draw.context_estimates[arm], reward)
    batch = posterior_from_history(prior, hist)
    rel_B = np.linalg.norm(state.B - batch.B) / np.linalg.norm(batch.B)
    rel_mu = np.linalg.norm(state.mu_hat - batch.mu_hat) / max(np.linalg.norm(batch.mu_hat), 1e-300)
    return float(rel_B), float(rel_mu)


def _validate(args) -> int:
    cfg = load_config(args.config)
    inst, ops = replication_instance(cfg, 0)
    rng = replication_stream(cfg, 0).substream("validate")
    report = validate_filter(inst, ops, args.samples, rng.substream("filter"))
    ok = True
    print(f"instance: d={inst.d} N={inst.N} sigma2_ry={ops.sigma2_ry:.6g}")
    details = {
        "regression_matches_D": f"max |regression - D| = {report.regression_max_abs_err:.4g} (tol 0.02)",
        "residual_variance_matches_sigma2_ry": (
            f"residual var {report.residual_var:.6g} vs {report.sigma2_ry:.6g}, rel err {report.residual_rel_err:.4g} (tol 0.05)"
        ),
        "xhat_cov_matches_marginal": f"rel op-norm err {report.xhat_cov_rel_err_marginal:.4g} (tol 0.05)",
    }
    for name, passed in report.checks().items():
        ok &= passed
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {details[name]}")
    print(f"[INFO] Cov(x_hat) vs D Sigma_y D' (noise-only whitening): rel op-norm err {report.xhat_cov_rel_err_noise:.4g}")
    rel_B, rel_mu = recursion_mismatch(inst, ops, cfg.prior(), args.steps, rng.substream("recursion"))
    passed = rel_B <= EQUIVALENCE_RTOL and rel_mu <= EQUIVALENCE_RTOL
    ok &= passed
    print(f"[{'PASS' if passed else 'FAIL'}] batch_recursive_posterior: rel B gap {rel_B:.3g}, rel mu gap {rel_mu:.3g} (tol {EQUIVALENCE_RTOL:g})")
    return 0 if ok else 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"simulate": _simulate, "constants": _constants, "validate": _validate}
    try:
        return handlers[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
