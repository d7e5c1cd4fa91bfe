"""Solution serialization: JSON record, GeoJSON features and a plain-text report."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from .solver import NetworkSolution
from .terrain import Manifold

__all__ = ["solution_record", "to_geojson", "render_report", "write_json"]


def _xy(m: Manifold, v: int) -> list:
    x, y = m.vertices[v, :2]
    return [float(x), float(y)]


def solution_record(sol: NetworkSolution, m: Manifold, bu_cost_setting=None) -> dict:
    """Plain-data view of a solution; everything the report and GeoJSON need."""
    t = sol.topology
    groups = []
    if sol.merged is not None:
        for g, v, k, c, z in zip(
            sol.merged.groups, sol.merged.vertex, sol.merged.branch_count, sol.group_charges, sol.group_zeroed
        ):
            groups.append(
                {
                    "steiner": list(g),
                    "vertex": int(v),
                    "row_col": list(m.row_col(v)),
                    "xy": _xy(m, v),
                    "branch_count": int(k),
                    "charged_cost": float(c),
                    "on_station": bool(z),
                }
            )
    stations = []
    for i, (r, k, v) in enumerate(zip(sol.regions, sol.chosen_station, sol.station_vertices)):
        stations.append(
            {
                "region": r.name or f"region{i}",
                "candidate": int(k),
                "vertex": int(v),
                "row_col": list(m.row_col(v)),
                "xy": _xy(m, v),
                "station_cost": float(r.candidates[k][1]),
            }
        )
    edges = [
        {
            "edge": [int(a), int(b)],
            "cost": float(p.cost),
            "length": float(p.length),
            "points": [[float(x), float(y)] for x, y in p.points[:, :2]],
        }
        for (a, b), p in sol.edge_paths
    ]
    return {
        "bu_cost_setting": bu_cost_setting,
        "mode": sol.mode,
        "topology": None if t is None else {"e1": [list(e) for e in t.edges_e1], "e2": [list(e) for e in t.edges_e2]},
        "objective": float(sol.objective),
        "cost_breakdown": {k: float(v) for k, v in sol.cost_breakdown.items()},
        "total_length": float(sol.total_length),
        "bu_count": int(sol.bu_count),
        "groups": groups,
        "stations": stations,
        "edges": edges,
        "stats": {k: sol.stats[k] for k in ("topologies", "evaluated", "pruned") if k in sol.stats},
    }


def to_geojson(records: Sequence[dict]) -> dict:
    feats = []
    for run, rec in enumerate(records):
        for e in rec["edges"]:
            pts = e["points"]
            if len(pts) < 2:
                continue  # edge inside a merged unit; the unit's Point covers it
            feats.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "LineString", "coordinates": pts},
                    "properties": {
                        "kind": "cable",
                        "run": run,
                        "edge": e["edge"],
                        "cost": e["cost"],
                        "length": e["length"],
                    },
                }
            )
        for g in rec["groups"]:
            feats.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": g["xy"]},
                    "properties": {
                        "kind": "branching_unit",
                        "run": run,
                        "steiner": g["steiner"],
                        "branch_count": g["branch_count"],
                        "charged_cost": g["charged_cost"],
                    },
                }
            )
        for s in rec["stations"]:
            feats.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": s["xy"]},
                    "properties": {
                        "kind": "station",
                        "run": run,
                        "region": s["region"],
                        "candidate": s["candidate"],
                        "station_cost": s["station_cost"],
                    },
                }
            )
    for f in feats:
        coords = f["geometry"]["coordinates"]
        flat = coords if f["geometry"]["type"] == "Point" else [c for p in coords for c in p]
        if not all(math.isfinite(c) for c in flat):
            raise ValueError("non-finite coordinate in GeoJSON output")
    return {"type": "FeatureCollection", "features": feats}


def render_report(records: Sequence[dict], length_unit: float = 1000.0) -> str:
    """Table of BU cost, BU count, cable length and total cost per run, then details."""
    mode = records[0]["mode"] if records else "?"
    out = [f"Cable network design ({mode})", ""]
    head = f"{'BU cost':>12}  {'BUs':>4}  {'Length (km)':>12}  {'Total cost':>14}"
    out += [head, "-" * len(head)]
    for rec in records:
        b = rec["bu_cost_setting"]
        bs = "-" if b is None else f"{b:.2f}"
        out.append(
            f"{bs:>12}  {rec['bu_count']:>4d}  {rec['total_length'] / length_unit:>12.3f}  "
            f"{rec['cost_breakdown']['total']:>14.2f}"
        )
    for i, rec in enumerate(records):
        cb = rec["cost_breakdown"]
        out += ["", f"Run {i + 1}: cost breakdown"]
        out += [f"  {k:<9}{cb[k]:>14.2f}" for k in ("cable", "bu", "stations", "total")]
        out.append("  Station selection")
        out.append(f"    {'Region':<12}{'Candidate':>10}{'Row':>6}{'Col':>6}{'Station cost':>14}")
        for s in rec["stations"]:
            r, c = s["row_col"]
            out.append(f"    {s['region']:<12}{s['candidate']:>10d}{r:>6d}{c:>6d}{s['station_cost']:>14.2f}")
        if rec["groups"]:
            out.append("  Branching units")
            out.append(f"    {'Steiner':<12}{'Branches':>10}{'Row':>6}{'Col':>6}{'Charged':>14}")
            for g in rec["groups"]:
                r, c = g["row_col"]
                lab = "+".join(f"s{s}" for s in g["steiner"])
                out.append(f"    {lab:<12}{g['branch_count']:>10d}{r:>6d}{c:>6d}{g['charged_cost']:>14.2f}")
    return "\n".join(out) + "\n"


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n")
