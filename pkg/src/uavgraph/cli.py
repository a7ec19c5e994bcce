"""Command-line entry point: ``uavgraph <command> [--config FILE] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .codec import parse_graph, render_route, serialize_graph
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .decision import BackendConfigError, BackendKind, propose_trajectory
from .graph import ScenarioError, build_scenario, random_instances
from .harness import CalibrationError, calibrate_battery, calibrated, run_gap_experiment, run_tasksize_sweep
from .routing import exhaustive_search

EXIT_OK, EXIT_INVALID, EXIT_CONFIG = 0, 1, 2
ROUNDTRIP_INSTANCES = 50


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(
            cfg,
            scenario=replace(cfg.scenario, seed=args.seed),
            hyper=replace(cfg.hyper, seed=args.seed),
        )
    if args.backend is not None:
        cfg = replace(cfg, backend=type(cfg.backend).from_dict({**cfg.backend.to_dict(), "kind": args.backend}))
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def cmd_calibrate(cfg: ExperimentConfig, args) -> int:
    capacity = calibrate_battery(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.with_capacity(capacity)
    save_config(resolved, out / "resolved_config.json")
    print(f"battery_capacity_j {capacity:.6f}")
    print(f"resolved config written to {out / 'resolved_config.json'}")
    return EXIT_OK


def cmd_gap(cfg: ExperimentConfig, args) -> int:
    result = run_gap_experiment(cfg)
    for method, s in result.summary().items():
        if "error" in s:
            print(f"{method}: FAILED {s['error']}")
        else:
            print(f"{method}: gap {s['initial_gap_j']:.1f} J -> {s['final_gap_j']:.1f} J")
    print(f"wrote {result.csv_path}")
    return EXIT_OK if result.ok else EXIT_INVALID


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    result = run_tasksize_sweep(cfg)
    for row in result.rows:
        print(" ".join(str(v) for v in row.csv_row()))
    print(f"wrote {result.csv_path}")
    if result.errors:
        for cell, err in result.errors.items():
            print(f"{cell}: FAILED {err}")
        return EXIT_INVALID
    if result.max_conservation_error > 1e-6:
        print(f"conservation violated by {result.max_conservation_error:.3g} J")
        return EXIT_INVALID
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, args) -> int:
    graph = build_scenario(cfg.scenario)
    res = exhaustive_search(graph, cfg.energy)
    print(render_route(res.route, graph))
    print(f"visit_order {list(res.route.visit_order)} charge_after {res.route.charge_after}")
    print(f"consumption_j {res.cost.consumption:.6f}")
    print(f"remaining_j {res.cost.remaining:.6f}")
    print(f"routes_evaluated {res.evaluated}")
    return EXIT_OK


def cmd_roundtrip(cfg: ExperimentConfig, args) -> int:
    graphs = [build_scenario(cfg.scenario)]
    graphs += random_instances(ROUNDTRIP_INSTANCES - 1, cfg.scenario, task_range=(5.0, 35.0))
    bad = 0
    for g in graphs:
        text = serialize_graph(g)
        back = parse_graph(text)
        if back != g or serialize_graph(back).body() != text.body():
            bad += 1
    print(f"roundtrip {len(graphs) - bad}/{len(graphs)} identical")
    return EXIT_OK if bad == 0 else EXIT_INVALID


def cmd_propose(cfg: ExperimentConfig, args) -> int:
    graph = build_scenario(cfg.scenario)
    proposal = propose_trajectory(graph, cfg.backend, cfg.energy)
    print(render_route(proposal.route, graph))
    print(json.dumps(proposal.to_dict(), sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "calibrate": (cmd_calibrate, "calibrate the battery so 30 MB is feasible and 35 MB is not"),
    "gap": (cmd_gap, "train the three allocators and write gap_curve.csv"),
    "sweep": (cmd_sweep, "run the task-size sweep and write remaining_energy.csv"),
    "oracle": (cmd_oracle, "print the exhaustive-optimal route"),
    "roundtrip": (cmd_roundtrip, "check that graph text parses back to the same graph"),
    "propose": (cmd_propose, "propose one trajectory through the configured backend"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="default", help="JSON config file, or 'default'")
    common.add_argument("--seed", type=int, help="override scenario and initialisation seeds")
    common.add_argument("--backend", choices=[k.value for k in BackendKind], help="decision backend kind")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="uavgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
        if args.command in ("gap", "sweep"):
            cfg = calibrated(cfg)
        return COMMANDS[args.command][0](cfg, args)
    except (ConfigError, BackendConfigError, ScenarioError, CalibrationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
