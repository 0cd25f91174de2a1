"""Command-line interface: ``csflock {check,simulate,montecarlo,schedule,matrix-tools}``.

Exit codes: 0 success, 2 validation failure (bad input or failed
certificate), 3 runtime failure (non-finite integration, unwritable output).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .certify import TheoremParameters, certify
from . import harness, matrix_analysis
from .dynamics import NonFiniteStateError, diameter, write_final_state, write_trajectory_csv
from .switching import block_spanning_flags, block_times, write_schedule_csv

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


class RuntimeFailure(RuntimeError):
    pass


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise RuntimeFailure(f"cannot write {out}: {exc}") from exc


def _out_dir(path) -> Path:
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeFailure(f"cannot create {d}: {exc}") from exc
    return d


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise harness.ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise harness.ConfigError(f"{path} is not valid JSON: {exc}") from exc


def cmd_check(args) -> int:
    doc = _read_json(args.input)
    if "library" in doc or "library_file" in doc:
        cfg = harness.ExperimentConfig.from_dict(doc, base_dir=Path(args.input).parent)
        params = cfg.theorem_parameters()
        if params is None:
            raise harness.ConfigError("increments must have bounded support with a positive lower end")
        state = cfg.initial_state(args.seed if args.seed is not None else cfg.seed)
        dx0, dv0 = diameter(state.X), diameter(state.V)
    else:
        try:
            params = TheoremParameters.from_dict(doc)
            dx0 = float(doc.get("dx0", 1.0))
            dv0 = float(doc.get("dv0", 1.0))
        except KeyError as exc:
            raise harness.ConfigError(f"parameters missing field {exc}") from exc
    if args.dx0 is not None:
        dx0 = args.dx0
    if args.dv0 is not None:
        dv0 = args.dv0
    if dx0 < 0 or dv0 < 0:
        raise harness.ConfigError("initial diameters must be nonnegative")
    cert = certify(params, dx0, dv0)
    _emit(harness.canonical_json(cert.to_dict()) + "\n", args.out)
    if args.out is not None:
        status = "valid" if cert.valid else f"NOT certified: {cert.failure}"
        print(f"certificate {status}")
        for k in sorted(cert.margins):
            print(f"  {k} = {cert.margins[k]:.17g}")
    return EXIT_OK if cert.valid else EXIT_INVALID


def _summary_dict(summary) -> dict:
    return {f.name: getattr(summary, f.name) for f in fields(summary)}


def cmd_simulate(args) -> int:
    cfg = harness.load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    run = harness.run_detailed(cfg, seed)
    out = _out_dir(args.out)
    doc = {
        "summary": _summary_dict(run.summary),
        "dx0": diameter(run.state0.X),
        "dv0": diameter(run.state0.V),
        "certificate_valid": None if run.certificate is None else run.certificate.valid,
        "tol_v": cfg.tol_v,
        "note": harness.FLOCKING_PROXY_NOTE,
    }
    try:
        write_schedule_csv(run.schedule, out / "schedule.csv")
        if run.record is not None:
            write_trajectory_csv(run.record, out / "trajectory.csv")
            write_final_state(run.record.final, out / "final_state.json")
        (out / "summary.json").write_text(harness.canonical_json(doc) + "\n")
    except OSError as exc:
        raise RuntimeFailure(f"cannot write outputs: {exc}") from exc
    print(f"seed {seed}: flocked={run.summary.flocked} final_dv={run.summary.final_dv} status={run.summary.status}")
    if run.summary.status != "ok":
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = harness.load_config(args.config)
    report = harness.monte_carlo(cfg, args.runs, workers=args.workers, seed=args.seed)
    fmt = args.format or "json"
    if args.out is None:
        text = harness.canonical_json(harness.report_to_dict(report)) + "\n" if fmt == "json" else harness.report_to_csv(report)
        sys.stdout.write(text)
    else:
        try:
            harness.export_report(report, args.out, fmt)
        except OSError as exc:
            raise RuntimeFailure(f"cannot write {args.out}: {exc}") from exc
        print(f"{report.runs} runs: flocking fraction {report.flocking_fraction:.6g}, "
              f"spanning fraction {report.spanning_fraction}, p(n) {report.p_n}, "
              f"failures {report.failures} ({report.timing['wall_seconds']:.3g} s)")
    return EXIT_OK


def cmd_schedule(args) -> int:
    cfg = harness.load_config(args.config)
    if args.blocks is not None:
        if args.blocks < 1:
            raise harness.ConfigError("--blocks must be at least 1")
        cfg = harness.ExperimentConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)},
                                          "horizon_blocks": args.blocks, "t_end": None})
    seed = args.seed if args.seed is not None else cfg.seed
    p_n, n, c = harness.reference_spanning_probability(cfg)
    sched, blocks, nb, _ = harness._horizon_schedule(cfg, seed, None if n is None else (n, c))
    out = _out_dir(args.out)
    doc = {"seed": seed, "switch_count": sched.switch_count, "end": sched.end, "n": n, "c": c, "p_n": p_n}
    if blocks is not None:
        doc["block_indices"] = [int(i) for i in blocks.indices]
        doc["block_times"] = [float(t) for t in block_times(sched, blocks)]
        flags = block_spanning_flags(sched, cfg.library, blocks, nb)
        doc["block_spanning"] = flags
        doc["all_spanning"] = all(flags)
    try:
        write_schedule_csv(sched, out / "schedule.csv")
        (out / "blocks.json").write_text(harness.canonical_json(doc) + "\n")
    except OSError as exc:
        raise RuntimeFailure(f"cannot write outputs: {exc}") from exc
    print(f"{sched.switch_count} switches up to t={sched.end:.6g}; all blocks spanning: {doc.get('all_spanning')}")
    return EXIT_OK


def cmd_matrix_tools(args) -> int:
    try:
        m = matrix_analysis.read_matrix_csv(args.matrix)
    except OSError as exc:
        raise harness.ConfigError(f"cannot read {args.matrix}: {exc}") from exc
    doc = {"shape": list(m.shape), "row_diameter": matrix_analysis.row_diameter(m)}
    if m.shape[0] == m.shape[1]:
        mu = matrix_analysis.ergodicity_coefficient(m)
        doc.update({
            "mu": mu,
            "scrambling": matrix_analysis.is_scrambling(m, args.tol),
            "stochastic": matrix_analysis.is_stochastic(m, args.stochastic_tol),
        })
    if args.format == "text":
        text = "".join(f"{k}: {v}\n" for k, v in sorted(doc.items()))
    else:
        text = harness.canonical_json(doc) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csflock", description="Cucker-Smale flocking under random switching topologies")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="certify theorem parameters (JSON) or an experiment config")
    c.add_argument("input")
    c.add_argument("--dx0", type=float)
    c.add_argument("--dv0", type=float)
    c.add_argument("--seed", type=int, help="initial-condition seed when checking a config")
    c.add_argument("--out")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="one seeded run: trajectory CSV and summary JSON")
    s.add_argument("config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("montecarlo", help="M seeded runs summarised in one report")
    m.add_argument("config")
    m.add_argument("--runs", "-M", type=int, required=True)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--seed", type=int, help="base seed (overrides the config)")
    m.add_argument("--out")
    m.add_argument("--format", choices=("json", "csv"))
    m.set_defaults(func=cmd_montecarlo)

    sc = sub.add_parser("schedule", help="sample a switching schedule and analyse its blocks")
    sc.add_argument("config")
    sc.add_argument("--seed", type=int)
    sc.add_argument("--blocks", type=int)
    sc.add_argument("--out", required=True, help="output directory")
    sc.set_defaults(func=cmd_schedule)

    mt = sub.add_parser("matrix-tools", help="ergodicity coefficient and predicates of a CSV matrix")
    mt.add_argument("matrix")
    mt.add_argument("--tol", type=float, default=0.0, help="scrambling threshold on mu")
    mt.add_argument("--stochastic-tol", type=float, default=1e-12)
    mt.add_argument("--format", choices=("json", "text"), default="json")
    mt.add_argument("--out")
    mt.set_defaults(func=cmd_matrix_tools)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NonFiniteStateError, RuntimeFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:  # every validation error type derives from ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
