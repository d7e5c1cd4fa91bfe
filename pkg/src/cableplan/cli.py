"""Command-line entry point: ``cableplan {solve,fmm,pairs,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import ScenarioConfig, build_manifold_from_config, build_regions, load_scenario
from .eikonal import cached_all_pairs, fmm_solve
from .exceptions import ConsistencyError, InputError, SolverError
from .export import render_report, solution_record, to_geojson, write_json
from .solver import Scenario, evaluate_solution, normalise_mode, solve_network
from .terrain import write_esri_ascii

log = logging.getLogger("cableplan")
stats_log = logging.getLogger("cableplan.stats")

EXIT_INPUT, EXIT_SOLVER, EXIT_CONSISTENCY = 2, 3, 4


def _event(name: str, **fields) -> None:
    stats_log.info(json.dumps({"event": name, **fields}, sort_keys=True, default=str))


def _out_path(cfg: ScenarioConfig, out_dir, name: str) -> Path:
    if out_dir is not None:
        return Path(out_dir) / Path(name).name
    return cfg.resolve(name)


def _cache_dir(cfg: ScenarioConfig, out_dir):
    if cfg.cache_dir is not None:
        return cfg.cache_dir
    return None if out_dir is None else Path(out_dir) / "cache"


def cmd_solve(args) -> int:
    cfg = load_scenario(args.config)
    mode = normalise_mode(args.mode) if args.mode else cfg.mode
    settings = cfg.sweep.bu_costs if cfg.sweep else [None]
    m0 = build_manifold_from_config(cfg)
    regions = build_regions(cfg, m0)
    t0 = time.perf_counter()
    w, cache_path, reused = cached_all_pairs(m0, _cache_dir(cfg, args.out), cfg.limits.max_vertices, args.threads)
    _event("pairs", vertices=m0.n_vertices, seconds=round(time.perf_counter() - t0, 3), reused=reused)

    records = []
    for b in settings:
        m = m0 if b is None else build_manifold_from_config(cfg, bu_cost=b)
        t0 = time.perf_counter()
        sol = solve_network(
            Scenario(m, regions, mode, w=w, threads=args.threads, seed_incumbent=args.seed_incumbent)
        )
        check = evaluate_solution(sol, m)
        _event(
            "solve",
            bu_cost=b,
            mode=mode,
            seconds=round(time.perf_counter() - t0, 3),
            topologies=sol.stats.get("topologies"),
            evaluated=sol.stats.get("evaluated"),
            pruned=sol.stats.get("pruned"),
            incumbent_trace=sol.stats.get("incumbent_trace"),
            objective=sol.objective,
            reevaluated_total=check["total"],
        )
        records.append(solution_record(sol, m, cfg.cost_model.base_bu_cost if b is None else b))

    gj = _out_path(cfg, args.out, cfg.output.geojson)
    rp = _out_path(cfg, args.out, cfg.output.report)
    write_json(gj, to_geojson(records))
    write_json(gj.with_name("solution.json"), {"runs": records})
    rp.parent.mkdir(parents=True, exist_ok=True)
    rp.write_text(render_report(records))
    log.info("wrote %s, %s", gj, rp)
    return 0


def _parse_rc(text: str) -> tuple:
    try:
        r, c = (int(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"--source must be 'row,col', got '{text}'") from None
    return r, c


def cmd_fmm(args) -> int:
    cfg = load_scenario(args.config)
    m = build_manifold_from_config(cfg)
    if args.source:
        r, c = _parse_rc(args.source)
        if not (0 <= r < m.rows and 0 <= c < m.cols):
            raise InputError(f"source ({r},{c}) outside {m.rows}x{m.cols} grid")
        src = m.vertex_index(r, c)
    else:
        src = build_regions(cfg, m)[0].candidates[0][0]
    field = fmm_solve(m, {src})
    out = Path(args.out or cfg.resolve(".")) / f"fmm-{'-'.join(map(str, m.row_col(src)))}.asc"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_esri_ascii(out, field.value.reshape(m.rows, m.cols), m.cell_size, m.origin)
    log.info("wrote %s", out)
    return 0


def cmd_pairs(args) -> int:
    cfg = load_scenario(args.config)
    m = build_manifold_from_config(cfg)
    cache = _cache_dir(cfg, args.out) or cfg.resolve("cache")
    t0 = time.perf_counter()
    _, path, reused = cached_all_pairs(m, cache, cfg.limits.max_vertices, args.threads)
    _event("pairs", vertices=m.n_vertices, seconds=round(time.perf_counter() - t0, 3), reused=reused, path=path)
    print(path)
    return 0


def cmd_report(args) -> int:
    if args.solution:
        path = Path(args.solution)
    elif args.config:
        cfg = load_scenario(args.config)
        path = _out_path(cfg, args.out, cfg.output.geojson).with_name("solution.json")
    else:
        raise InputError("report needs --config or --solution")
    if not path.exists():
        raise InputError(f"no stored solution at {path}; run 'solve' first")
    sys.stdout.write(render_report(json.loads(path.read_text())["runs"]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cableplan", description="Cable network design on terrain manifolds.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="scenario YAML file")
        sp.add_argument("--out", help="output directory (default: paths from the config)")
        sp.add_argument("--threads", type=int, default=1)

    s = sub.add_parser("solve", help="optimize the network and write GeoJSON + report")
    common(s)
    s.add_argument("--mode", choices=["merge", "three", "merge_allowed", "three_branch_only"])
    s.add_argument("--seed-incumbent", type=float, default=None, help="known upper bound on total cost")
    s.set_defaults(func=cmd_solve)

    f = sub.add_parser("fmm", help="write one distance field as an ESRI ASCII raster")
    common(f)
    f.add_argument("--source", help="source vertex as 'row,col' (default: first candidate of first region)")
    f.set_defaults(func=cmd_fmm)

    q = sub.add_parser("pairs", help="precompute and cache the all-pairs cost matrix")
    common(q)
    q.set_defaults(func=cmd_pairs)

    r = sub.add_parser("report", help="print a stored solution as a table")
    common(r, config_required=False)
    r.add_argument("--solution", help="path to solution.json")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    stats_log.setLevel(logging.INFO)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY


if __name__ == "__main__":
    sys.exit(main())
