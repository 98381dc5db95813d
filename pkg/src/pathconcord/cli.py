"""Command-line interface.

Subcommands: build, invert, score, decompose, baseline, simulate, survcheck.
Errors are written to stderr as JSON; exit status is 0 on success, 2 for
invalid input, 3 for solver failures and 4 for file problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import VARIANTS, baseline_score
from .cohort import CohortConfig, generate
from .detour import attribute, attribution_diff, decompose, detour_type_table, population_attribution
from .errors import ConcordanceError, DataIOError
from .inverse import ConstraintSet, InverseInstance, fit, stage_invariants
from .io import SCORE_COLUMNS, EventLog, RefinementConfig, ingest, read_cohort, read_csv, read_json, write_cohort, write_csv, write_json
from .network import NetworkSpec, compile_network, sequence_to_flow
from .score import longest_walk_table, omega
from .solver import DEFAULT_TOL, shortest_path_cost
from .survival import km_curve, log_rank, tercile_bins

log = logging.getLogger("pathconcord")

TERCILE_NAMES = ("low", "medium", "high")


def bundled(name: str) -> Path:
    return Path(str(resources.files("pathconcord") / "data" / name))


def _network(args):
    path = args.network or bundled("colon_network.json")
    try:
        return compile_network(NetworkSpec.from_dict(read_json(path)))
    except DataIOError:
        raise


def _out(args, name: str) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create {out}: {exc}") from exc
    return out / name


def _load_cost(args, network):
    doc = read_json(args.cost)
    key = f"stage{args.stage}"
    if key not in doc:
        raise DataIOError(f"{args.cost} has no {key} section")
    c = np.array(doc[key]["cost"], dtype=float)
    if c.shape != (network.n_arcs,):
        raise DataIOError(f"cost vector has {c.shape[0]} entries, network has {network.n_arcs} arcs")
    return c


def _cohort_flows(network, rows):
    return [sequence_to_flow(network, r.sequence, r.patient_id) for r in rows]


def cmd_build(args) -> dict:
    net = _network(args)
    summary = net.describe()
    write_json(_out(args, "network_summary.json"), summary)
    return {"n_nodes": net.n_nodes, "n_arcs": net.n_arcs}


def cmd_invert(args) -> dict:
    net = _network(args)
    cs = ConstraintSet.from_dict(read_json(args.constraints or bundled("colon_constraints.json")))
    survived, died = [], []
    if args.cohort:
        for r in read_cohort(args.cohort):
            (died if r.event_observed else survived).append(r.sequence)
    inst = InverseInstance.from_sequences(net, None, survived, died, cs)
    s1, s2 = fit(inst, mode=args.mode, tol=args.tol)
    doc = {
        "arcs": [net.arc_name(k) for k in range(net.n_arcs)],
        "stage1": s1.to_dict(),
        "stage2": s2.to_dict(),
        "invariants": {"stage1": stage_invariants(inst, s1), "stage2": stage_invariants(inst, s2)},
        "counts": {"references": inst.R, "survived": inst.S, "died": inst.D},
    }
    write_json(_out(args, "cost.json"), doc)
    return {"stage1_objective": s1.objective, "stage2_objective": s2.objective, "mode": s1.mode}


def _scores(net, c, flows):
    sp, _ = shortest_path_cost(net, c)
    table = longest_walk_table(net, c, max(f.length for f in flows))
    return sp, table, [omega(net, f, c, sp, table) for f in flows]


def cmd_score(args) -> dict:
    net = _network(args)
    c = _load_cost(args, net)
    rows = read_cohort(args.cohort)
    flows = _cohort_flows(net, rows)
    sp, _, scores = _scores(net, c, flows)
    write_csv(_out(args, "scores.csv"), SCORE_COLUMNS, ({"patient_id": r.patient_id, **s.as_row()} for r, s in zip(rows, scores)))
    return {"patients": len(rows), "shortest_cost": sp, "mean_omega": math.fsum(s.omega for s in scores) / len(scores)}


def cmd_decompose(args) -> dict:
    net = _network(args)
    c = _load_cost(args, net)
    rows = read_cohort(args.cohort)
    flows = _cohort_flows(net, rows)
    sp, table, _ = _scores(net, c, flows)
    detour_rows, dec_rows = [], []
    attrs, decs = [], []
    for r in rows:
        dec = decompose(net, r.sequence, c, sp, table, tol=args.tol if args.tol > 1e-8 else 1e-8)
        decs.append(dec)
        attrs.append(attribute(dec, c))
        dec_rows.append(
            {
                "patient_id": r.patient_id,
                "reference": dec.reference_index,
                "n_detours": len(dec.detours),
                "total_discordance": dec.total_discordance,
                "omega": dec.omega,
                "omega_check": dec.omega_check,
            }
        )
        for j, d in enumerate(dec.detours):
            detour_rows.append(
                {
                    "patient_id": r.patient_id,
                    "detour": j,
                    "from": dec.reference[d.from_concordant],
                    "to": dec.reference[d.to_concordant],
                    "kind": d.kind,
                    "extra": ";".join(d.extra),
                    "skipped": ";".join(d.skipped),
                    "cost": d.cost,
                }
            )
    write_csv(_out(args, "decomposition.csv"), list(dec_rows[0]) if dec_rows else ["patient_id"], dec_rows)
    write_csv(_out(args, "detours.csv"), ["patient_id", "detour", "from", "to", "kind", "extra", "skipped", "cost"], detour_rows)
    pop = population_attribution(attrs)
    write_csv(_out(args, "attribution.csv"), ["origin_node", "category", "share"], pop.rows())
    died = [a for a, r in zip(attrs, rows) if r.event_observed]
    alive = [a for a, r in zip(attrs, rows) if not r.event_observed]
    if died and alive:
        diff = attribution_diff(population_attribution(died), population_attribution(alive))
        write_csv(_out(args, "attribution_diff.csv"), ["origin_node", "category", "share"], diff.rows())
    types = detour_type_table(decs)
    write_csv(_out(args, "detour_types.csv"), ["type", "patients", "fraction", "mean_discordance"], types)
    return {"patients": len(rows), "detours": len(detour_rows), "max_residual": max((d.residual for d in decs), default=0.0)}


def cmd_baseline(args) -> dict:
    net = _network(args)
    rows = read_cohort(args.cohort)
    variants = VARIANTS[:3] if args.variant == "all" else (args.variant,)
    out = []
    for r in rows:
        for v in variants:
            s = baseline_score(r.sequence, net.reference_pathways, v)
            out.append({"patient_id": r.patient_id, "variant": v, "raw": s.raw, "normalized": s.normalized})
    write_csv(_out(args, "baselines.csv"), ["patient_id", "variant", "raw", "normalized"], out)
    return {"rows": len(out)}


def cmd_simulate(args) -> dict:
    net = _network(args)
    data = read_json(args.config) if args.config else read_json(bundled("colon_cohort.json"))
    if args.seed is not None:
        data["seed"] = args.seed
    if args.n_patients is not None:
        data["n_patients"] = args.n_patients
    cfg = CohortConfig.from_dict(data)
    records = generate(net, None, cfg)
    write_cohort(_out(args, "cohort.csv"), records)
    return {"patients": len(records), "events": sum(r.event_observed for r in records)}


def cmd_ingest(args) -> dict:
    net = _network(args)
    cfg = RefinementConfig.load(args.refinement) if args.refinement else RefinementConfig()
    res = ingest(EventLog.read(args.events), cfg, net)
    outcomes = {}
    if args.outcomes:
        for rec in read_csv(args.outcomes, ["patient_id", "event_time", "event_observed"]):
            outcomes[rec["patient_id"]] = (rec["event_time"], rec["event_observed"])
    rows = [
        {
            "patient_id": pid,
            "activity_sequence": ";".join(seq),
            "event_time": outcomes.get(pid, ("", ""))[0],
            "event_observed": outcomes.get(pid, ("", ""))[1],
        }
        for pid, seq in res.sequences.items()
    ]
    write_csv(_out(args, "cohort.csv"), ["patient_id", "activity_sequence", "event_time", "event_observed"], rows)
    write_json(_out(args, "excluded.json"), res.excluded)
    return {"patients": len(rows), "excluded": len(res.excluded)}


def cmd_survcheck(args) -> dict:
    scores = {r["patient_id"]: float(r["omega"]) for r in read_csv(args.scores, ["patient_id", "omega"])}
    rows = [r for r in read_cohort(args.cohort) if r.patient_id in scores]
    if len(rows) < 3:
        raise DataIOError("survcheck needs at least three scored patients")
    bins = tercile_bins([scores[r.patient_id] for r in rows], [r.patient_id for r in rows])
    groups = []
    curve_rows = []
    for b, name in enumerate(TERCILE_NAMES):
        members = [r for r, lab in zip(rows, bins.labels) if lab == b]
        t = np.array([r.event_time for r in members])
        e = np.array([r.event_observed for r in members])
        groups.append((t, e))
        curve = km_curve((t, e))
        curve_rows.append({"group": name, "time": 0.0, "survival": 1.0, "at_risk": len(members), "events": 0})
        for tt, s, n, d in zip(curve.times, curve.survival, curve.at_risk, curve.events):
            curve_rows.append({"group": name, "time": float(tt), "survival": float(s), "at_risk": int(n), "events": int(d)})
    res = log_rank(groups)
    write_csv(_out(args, "km_curves.csv"), ["group", "time", "survival", "at_risk", "events"], curve_rows)
    doc = {
        "statistic": res.statistic,
        "dof": res.dof,
        "p_value": res.p_value,
        "groups": list(TERCILE_NAMES),
        "group_sizes": [int((bins.labels == b).sum()) for b in range(3)],
        "observed": [float(v) for v in res.observed],
        "expected": [float(v) for v in res.expected],
        "boundaries": list(bins.boundaries),
        "degenerate_bins": bins.degenerate,
    }
    write_json(_out(args, "logrank.json"), doc)
    return {"statistic": res.statistic, "p_value": res.p_value}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (simulate); accepted everywhere")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="solver and identity tolerance")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--network", default=None, help="network JSON (default: bundled colon-cancer network)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pathconcord", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("build", parents=[common], help="compile a network definition and write its summary")

    s = sub.add_parser("invert", parents=[common], help="learn arc costs (stages 1 and 2)")
    s.add_argument("--constraints", default=None, help="constraint JSON (default: bundled colon constraints)")
    s.add_argument("--cohort", default=None, help="cohort CSV; observed events are the died walks")
    s.add_argument("--mode", choices=["auto", "anchored", "full"], default="auto")

    for name, helptext in (("score", "per-patient omega and epsilon"), ("decompose", "detours and attribution tables")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--cost", required=True, help="cost JSON written by invert")
        s.add_argument("--cohort", required=True)
        s.add_argument("--stage", type=int, choices=[1, 2], default=2)

    s = sub.add_parser("baseline", parents=[common], help="edit-distance baselines")
    s.add_argument("--cohort", required=True)
    s.add_argument("--variant", choices=["all", *VARIANTS], default="all")

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic cohort")
    s.add_argument("--config", default=None, help="cohort config JSON (default: bundled)")
    s.add_argument("--n-patients", type=int, default=None)

    s = sub.add_parser("ingest", parents=[common], help="turn an event log into a cohort CSV")
    s.add_argument("--events", required=True, help="event-log CSV (patient_id, activity, day)")
    s.add_argument("--refinement", default=None, help="refinement config JSON")
    s.add_argument("--outcomes", default=None, help="CSV with patient_id, event_time, event_observed")

    s = sub.add_parser("survcheck", parents=[common], help="Kaplan-Meier curves and log-rank across omega terciles")
    s.add_argument("--scores", required=True)
    s.add_argument("--cohort", required=True)
    return p


COMMANDS = {
    "build": cmd_build,
    "invert": cmd_invert,
    "score": cmd_score,
    "decompose": cmd_decompose,
    "baseline": cmd_baseline,
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "survcheck": cmd_survcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = COMMANDS[args.command](args)
    except ConcordanceError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        err = DataIOError(str(exc))
        print(json.dumps(err.to_dict()), file=sys.stderr)
        return err.exit_code
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
