"""Command-line front-end.

::

    rwce <analyze|simulate|verify|report> --config <path> [--out <dir>] [--seed <u64>] [--format json|csv]

Exit codes: 0 all checks passed, 1 some check failed, 2 invalid config or
unwritable output, 3 a walk hit ``max_radius`` with ``on_truncation`` set
to ``"raise"`` (a partial report is still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import checks
from .config import ConfigError, ExperimentConfig, load_config
from .electrical import resistance_profile
from .environment import ratio_certificate, run_environment, slowness_report
from .errors import ProbeRadiusError, RWCEError, TruncationExceededError
from .graphs import ball, split_at_origin
from .report import CheckRow, add_rows, emit, merge, new_report
from .walker import NOT_HIT, classify_result, simulate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_TRUNCATED = 0, 1, 2, 3
SUBCOMMANDS = ("analyze", "simulate", "verify", "report")
ANALYSIS_HORIZON = 200


def _split(cfg):
    try:
        return split_at_origin(cfg.family(), max(2, cfg.probe_radius))
    except ProbeRadiusError:
        return None


def analysis_trace(cfg, split):
    """Environment history on a fixed ball, driven by the first simulated walk.

    The walk is cut at its first exit from the ball; None when it never moves
    inside it.
    """
    fam, env = cfg.family(), cfg.env()
    R = max(cfg.radii + ([split.d_max] if split is not None else []))
    b = ball(fam, max(R, env.min_radius))
    H = min(cfg.horizon, ANALYSIS_HORIZON)
    # the walk only matters until it leaves b
    traj = simulate(fam, env, H, 1, cfg.seed, max_radius=max(2, b.radius), on_truncation="stop").trajectories[0]
    labels = traj.labels
    edges = []
    for u, v in zip(labels, labels[1:]):
        if u not in b.index or v not in b.index or b.dist[b.index[u]] >= b.radius and b.dist[b.index[v]] >= b.radius:
            break
        try:
            edges.append(b.edge_index(u, v))
        except (KeyError, ValueError):
            break
    if not edges:
        return None
    return run_environment(env, b, edges, cfg.seed)


def analyze(cfg) -> dict:
    rep = new_report("analyze", cfg)
    fam, env = cfg.family(), cfg.env()
    b = ball(fam, max(cfg.radii))
    c0 = env.initial(b)
    prof = resistance_profile(fam, c0, cfg.radii)
    split = _split(cfg)
    rep["profile"] = {
        "radii": list(prof.radii),
        "effective_resistance": list(prof.values),
        "return_probability": list(prof.return_probabilities),
        "monotone": prof.monotone,
        "verdict": prof.verdict,
        "limit": prof.limit,
        "limiting_return_probability": prof.limiting_return_probability,
        "origin_conductance": prof.origin_conductance,
        "component_split": None if split is None else {
            "d_max": split.d_max, "finite": list(split.finite), "probe_radius": split.probe_radius},
    }
    trace = analysis_trace(cfg, split)
    if trace is not None and split is not None and split.d_max <= trace.ball.radius:
        sr = slowness_report(trace, split.d_max)
        rep["slowness"] = {
            "horizon": trace.horizon, "ball_radius": trace.ball.radius, "d_max": sr.d_max,
            "gamma": sr.gamma, "gamma_total": sr.gamma_total, "gamma_converged": sr.gamma_converged,
            "gamma_star_sup": sr.gamma_star_sup, "sup_bounded": sr.sup_bounded, "verdict": sr.verdict,
            "lower_bound_min": float(sr.lower_bound.min()), "observed_min": float(sr.observed_min.min()),
        }
        certs = []
        radii = [n for n in cfg.radii if split.d_max <= n <= trace.ball.radius]
        for k in split.infinite_components:
            if not radii:
                break
            try:
                cert = ratio_certificate(trace, split, k, radii)
            except RWCEError as exc:
                certs.append({"component": k, "error": str(exc)})
                continue
            certs.append({"component": k, "radii": list(cert.radii),
                          "alpha_product": cert.alpha_products[:, -1], "beta_product": cert.beta_products[:, -1],
                          "lambda": float(cert.lam()[-1]), "max_deviation": cert.deviation.max(axis=1)})
        rep["ratio_certificates"] = certs
    add_rows(rep, [CheckRow(None, "profile non-decreasing", "Rayleigh monotonicity", float(not prof.monotone), 0.0, "==")])
    return rep


def simulate_pipeline(cfg) -> dict:
    rep = new_report("simulate", cfg)
    fam, env = cfg.family(), cfg.env()
    split = _split(cfg)
    res = simulate(fam, env, cfg.horizon, cfg.trials, cfg.seed, record_paths=False, max_radius=cfg.max_radius,
                   on_truncation=cfg.on_truncation, d_max=None if split is None else split.d_max)
    ret = res.first_return[res.first_return != NOT_HIT]
    visits = [{"vertex": res.ball.labels[i], "visits": int(res.visits[i])} for i in np.flatnonzero(res.visits)]
    cert = res.ellipticity_certificate()
    pmin = min(cert.values()) if cert else float("nan")
    rep["simulation"] = {
        "trials": res.trials, "horizon": res.horizon, "return_frequency": res.return_frequency,
        "mean_first_return": float(ret.mean()) if ret.size else None,
        "truncated": int(res.truncated.sum()), "final_radius": res.final_radius,
        "gamma_total_max": float(res.gamma[-1].max()), "sup_conductance_max": float(res.sup_c[-1].max()),
        "min_transition_probability": pmin, "visits": visits,
    }
    cl = classify_result(fam, env, res, cfg.radii)
    rep["classification"] = {
        "verdict": cl.verdict, "slowness_verdict": cl.slowness_verdict, "profile_verdict": cl.profile_verdict,
        "profile_radius": cl.profile_radius, "return_frequency": cl.return_frequency,
        "gamma_increment": cl.gamma_increment, "empirical": True,
    }
    add_rows(rep, [CheckRow(None, "observed transition probabilities positive", "ellipticity", pmin, 0.0, ">")])
    return rep


def verify_pipeline(cfg, include_suite: bool = True) -> dict:
    rep = new_report("verify", cfg)
    split = _split(cfg)
    trace = analysis_trace(cfg, split)
    add_rows(rep, checks.config_rows(cfg, trace, split))
    if include_suite:
        scale = cfg.verify.get("scale", "full")
        add_rows(rep, checks.acceptance_rows(scale))
        add_rows(rep, checks.invariant_rows(scale))
    return rep


def run_pipeline(cfg, subcommand: str, include_suite: bool = True):
    """Run one subcommand; returns ``(report, exit_code)`` without writing files."""
    try:
        if subcommand == "analyze":
            rep = analyze(cfg)
        elif subcommand == "simulate":
            rep = simulate_pipeline(cfg)
        elif subcommand == "verify":
            rep = verify_pipeline(cfg, include_suite)
        elif subcommand == "report":
            rep = merge([analyze(cfg), simulate_pipeline(cfg), verify_pipeline(cfg, include_suite=False)])
        else:
            raise ValueError(f"unknown subcommand {subcommand!r}")
    except TruncationExceededError as exc:
        rep = new_report(subcommand, cfg)
        rep["truncation"] = {"message": str(exc), **{k: v for k, v in (exc.partial or {}).items()}}
        add_rows(rep, [CheckRow(None, "walk stayed inside max_radius", "truncation", 1.0, 0.0, "==")])
        return rep, EXIT_TRUNCATED
    return rep, (EXIT_OK if rep["all_passed"] else EXIT_FAIL)


def _parser():
    p = argparse.ArgumentParser(prog="rwce", description="Random walks in changing environments.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", help="output directory (overrides outputs.dir)")
    p.add_argument("--seed", type=int, help="root seed, unsigned 64-bit (overrides seed)")
    p.add_argument("--format", choices=("json", "csv"), help="output format (overrides outputs.format)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
            cfg.validate()
    except ConfigError as exc:
        print(f"rwce: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.outputs.get("dir", "out")
    fmt = args.format or cfg.outputs.get("format", "json")
    try:
        rep, code = run_pipeline(cfg, args.subcommand)
    except RWCEError as exc:
        print(f"rwce: cannot run config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = emit(rep, out, fmt)
    except OSError as exc:
        print(f"rwce: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    failed = [r for r in rep["ledger"] if not r["passed"]]
    for r in failed:
        print(f"FAIL {r['check']}: measured {r['measured']!r} {r['relation']} {r['threshold']!r}", file=sys.stderr)
    print(f"{args.subcommand}: {len(rep['ledger']) - len(failed)}/{len(rep['ledger'])} checks passed; "
          f"wrote {', '.join(paths)}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
