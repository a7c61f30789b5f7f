"""Command-line interface.

Scenario files are JSON documents (see README for the schema) naming a
matrix inline or by file, an attack list, observers, horizons, and a
seed; every run is deterministic given the scenario and seed.  Outputs
are written as ``trace.csv``, ``verdict.json`` and ``report.json`` in
the chosen output directory.

Exit codes: 0 success / clean identification, 2 invalid input,
3 ambiguous identification, 4 threshold calibration failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import consensus, detect, fdi, graph, numerics, sysan

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_AMBIGUOUS = 3
EXIT_CALIBRATION = 4


def load_matrix_file(path) -> np.ndarray:
    """Dense whitespace-separated rows, one matrix row per line."""
    return np.loadtxt(path, ndmin=2)


def _matrix_from_scenario(scn: dict, base: Path) -> np.ndarray:
    spec = scn.get("matrix")
    if spec is None:
        raise ValueError("scenario is missing the 'matrix' field")
    if "rows" in spec:
        return np.array(spec["rows"], dtype=float)
    if "file" in spec:
        return load_matrix_file(base / spec["file"])
    raise ValueError("matrix must give 'rows' or 'file'")


def _attacks_from_scenario(scn: dict, n: int, horizon: int,
                           rng: np.random.Generator) -> list:
    attacks = []
    for spec in scn.get("attacks", []):
        agent = int(spec["agent"])
        kind = spec["kind"]
        if kind == "constant":
            attacks.append(consensus.Attack.constant(agent, spec["value"]))
        elif kind == "exponential":
            attacks.append(consensus.Attack.exponential(
                agent, spec["rate"], spec["value"]))
        elif kind == "state_feedback":
            attacks.append(consensus.Attack.state_feedback(
                agent, spec["row"], spec.get("offset", 0.0)))
        elif kind == "sequence":
            attacks.append(consensus.Attack.sequence(agent, spec["values"]))
        elif kind == "initial_offset":
            attacks.append(consensus.Attack.initial_offset(agent, spec["value"]))
        elif kind == "random":
            lo, hi = spec.get("low", 0.1), spec.get("high", 1.0)
            values = rng.uniform(lo, hi, size=horizon)
            if spec.get("signed", False):
                values *= rng.choice([-1.0, 1.0], size=horizon)
            attacks.append(consensus.Attack.sequence(agent, values))
        else:
            raise ValueError(f"unknown attack kind {kind!r}")
    return attacks


def _x0_from_scenario(scn: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    spec = scn.get("x0")
    if spec is None:
        return np.zeros(n)
    if isinstance(spec, dict) and "random" in spec:
        lo = spec["random"].get("low", -1.0)
        hi = spec["random"].get("high", 1.0)
        return rng.uniform(lo, hi, size=n)
    return np.asarray(spec, dtype=float)


def _load_scenario(path: str) -> tuple:
    p = Path(path)
    with open(p, "r", encoding="utf-8") as fh:
        scn = json.load(fh)
    version = scn.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version}")
    return scn, p.parent


def _write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_trace(path: Path, header: list, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args) -> int:
    if args.scenario:
        scn, base = _load_scenario(args.scenario)
        A = _matrix_from_scenario(scn, base)
    else:
        A = load_matrix_file(args.matrix)
    checks = []
    ok = True
    n, m = A.shape
    checks.append(("square", n == m, f"{n}x{m}"))
    if n == m:
        neg = float(A.min())
        checks.append(("nonnegative entries", neg >= 0.0, f"min entry {neg:.3g}"))
        err = float(np.max(np.abs(A.sum(axis=1) - 1.0)))
        checks.append(("row sums equal one", err <= 1e-10, f"max error {err:.3g}"))
        G = graph.from_matrix(A)
        sc = graph.is_strongly_connected(G)
        checks.append(("irreducible", sc, "strongly connected graph"
                       if sc else "graph not strongly connected"))
        if sc:
            try:
                consensus.validate(A)
                checks.append(("primitive", True, "boolean power positive"))
            except consensus.ConsensusError as exc:
                checks.append(("primitive", False, str(exc)))
    for name, passed, detail in checks:
        ok &= passed
        print(f"{'ok  ' if passed else 'FAIL'} {name}: {detail}")
    print("valid consensus matrix" if ok else "not a consensus matrix")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_analyze(args) -> int:
    scn, base = _load_scenario(args.scenario)
    out = _prepare_out(args)
    A = _matrix_from_scenario(scn, base)
    n = A.shape[0]
    G = graph.from_matrix(A)
    try:
        net = consensus.validate(A)
        consensus_valid, invalid_reason = True, None
    except consensus.ConsensusError as exc:
        # pencil analysis and connectivity are still meaningful
        net, consensus_valid, invalid_reason = None, False, str(exc)
    bounds = graph.resilience_bounds(G)
    report = {
        "schema_version": SCHEMA_VERSION,
        "n": n,
        "consensus_valid": consensus_valid,
        "invalid_reason": invalid_reason,
        "connectivity": bounds.connectivity,
        "max_generic_faulty": bounds.max_generic_faulty,
        "max_generic_malicious": bounds.max_generic_malicious,
        "stationary_vector": net.pi.tolist() if net else None,
        "pairs": [],
    }
    observers = scn.get("observers") or ([scn["observer"]] if "observer" in scn
                                         else list(range(1, n + 1)))
    for K in scn.get("sets", []):
        for j in observers:
            B = consensus.input_matrix(n, sorted(int(a) for a in K))
            idx = [i for i in range(n) if abs(A[j - 1, i]) > 1e-12]
            C = np.zeros((len(idx), n))
            C[np.arange(len(idx)), idx] = 1.0
            triple = sysan.Triple.from_matrices(A, B, C, observer=j)
            analysis = sysan.invariant_zeros(triple)
            entry = {
                "set": sorted(int(a) for a in K),
                "observer": int(j),
                "left_invertible": analysis.left_invertible,
                "normal_rank": analysis.normal_rank,
            }
            if analysis.zeros is None:
                entry["zeros"] = None
            else:
                entry["zeros"] = [{"re": w.z.real, "im": w.z.imag,
                                   "modulus": abs(w.z)}
                                  for w in analysis.zeros]
            report["pairs"].append(entry)
    _write_json(out / "report.json", report)
    print(f"connectivity {bounds.connectivity}, "
          f"faulty bound {bounds.max_generic_faulty}, "
          f"malicious bound {bounds.max_generic_malicious}")
    return EXIT_OK


def _simulate_from_scenario(scn, base, seed):
    A = _matrix_from_scenario(scn, base)
    net = consensus.validate(A)
    horizon = int(scn.get("horizon", 100))
    rng = np.random.default_rng(seed)
    attacks = _attacks_from_scenario(scn, net.n, horizon, rng)
    x0 = _x0_from_scenario(scn, net.n, rng)
    traj = consensus.simulate(net, x0, attacks, horizon)
    return net, traj, attacks, horizon


def cmd_simulate(args) -> int:
    scn, base = _load_scenario(args.scenario)
    out = _prepare_out(args)
    seed = args.seed if args.seed is not None else scn.get("seed", 0)
    net, traj, attacks, horizon = _simulate_from_scenario(scn, base, seed)
    header = ["t"] + [f"x{i}" for i in range(1, net.n + 1)]
    rows = [[t] + [repr(v) for v in traj.states[t]] for t in range(horizon + 1)]
    _write_trace(out / "trace.csv", header, rows)
    verdict = {
        "schema_version": SCHEMA_VERSION,
        "mode": "simulate",
        "seed": seed,
        "horizon": horizon,
        "attacked_agents": list(traj.input_agents),
        "final_state": traj.states[-1].tolist(),
        "unforced_consensus_value": consensus.consensus_value(net, traj.states[0]),
    }
    _write_json(out / "verdict.json", verdict)
    print(f"simulated {horizon} steps, final spread "
          f"{float(np.ptp(traj.states[-1])):.3g}")
    return EXIT_OK


def cmd_detect(args) -> int:
    scn, base = _load_scenario(args.scenario)
    out = _prepare_out(args)
    seed = args.seed if args.seed is not None else scn.get("seed", 0)
    net, traj, _, horizon = _simulate_from_scenario(scn, base, seed)
    j = int(scn["observer"])
    filt = detect.DetectionFilter.from_network(net, j)
    ys = net.outputs(traj.states, j)
    estimates, residuals = filt.run(ys)
    norms = np.max(np.abs(residuals), axis=1)
    floor = float(scn.get("residual_floor", 1e-6))
    tail = norms[-max(1, len(norms) // 4):]
    flagged = bool(np.max(tail) > floor)
    header = ["t", "residual_norm"]
    rows = [[t, repr(float(norms[t]))] for t in range(len(norms))]
    _write_trace(out / "trace.csv", header, rows)
    _write_json(out / "verdict.json", {
        "schema_version": SCHEMA_VERSION,
        "mode": "detect",
        "observer": j,
        "seed": seed,
        "residual_floor": floor,
        "misbehavior_detected": flagged,
        "final_residual_norm": float(norms[-1]),
    })
    print("misbehavior detected" if flagged else "no active misbehavior seen")
    return EXIT_OK


def cmd_identify(args) -> int:
    scn, base = _load_scenario(args.scenario)
    out = _prepare_out(args)
    seed = args.seed if args.seed is not None else scn.get("seed", 0)
    net, traj, _, horizon = _simulate_from_scenario(scn, base, seed)
    j = int(scn["observer"])
    k = int(scn.get("k", 1))
    ys = net.outputs(traj.states, j)
    verdict = detect.complete_identification(net, j, k, ys)
    header = ["t", "candidate_set", "residual_norm"]
    rows = []
    for D, norms in sorted(verdict.residual_norms.items()):
        label = "+".join(str(a) for a in D)
        for t in range(len(norms)):
            rows.append([t, label, repr(float(norms[t]))])
    _write_trace(out / "trace.csv", header, rows)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "mode": "identify",
        "observer": j,
        "k": k,
        "seed": seed,
        "status": verdict.status,
        "identified": [int(a) for a in verdict.identified],
        "candidates": [[int(a) for a in S] for S in verdict.candidates],
        "horizon": verdict.horizon,
        "unsolvable": [[list(map(int, pair[0] if isinstance(pair[0], tuple)
                                 else [pair[0]])), list(map(int, pair[1]))]
                       for pair in verdict.unsolvable],
    }
    _write_json(out / "verdict.json", payload)
    if verdict.status == "identified":
        print(f"identified misbehaving set: {sorted(verdict.identified)}")
        return EXIT_OK
    print(f"ambiguous: candidates {[sorted(c) for c in verdict.candidates]}")
    return EXIT_AMBIGUOUS


def cmd_local_identify(args) -> int:
    scn, base = _load_scenario(args.scenario)
    out = _prepare_out(args)
    seed = args.seed if args.seed is not None else scn.get("seed", 0)
    net, traj, _, horizon = _simulate_from_scenario(scn, base, seed)
    j = int(scn["observer"])
    partition = scn["partition"]
    h = int(scn.get("block", 1))
    k_j = int(scn.get("k", 1))
    cal_spec = scn.get("calibration", {})
    decomp = detect.block_decompose(net.A, partition)
    bank = detect.build_local_bank(decomp, h, j, k_j)
    try:
        cal = detect.calibrate_threshold(
            decomp, bank,
            u_max=float(cal_spec.get("u_max", 1.0)),
            u_min=float(cal_spec.get("u_min", 0.1)),
            x_max=float(cal_spec.get("x_max", 1.0)),
            outside=tuple(cal_spec.get("outside", ())))
    except detect.CalibrationError as exc:
        _write_json(out / "verdict.json", {
            "schema_version": SCHEMA_VERSION,
            "mode": "local-identify",
            "observer": j,
            "seed": seed,
            "status": "calibration_failure",
            "epsilon": decomp.epsilon,
            "epsilon_star": exc.epsilon_star,
            "crossing_value": exc.crossing_value,
        })
        print(f"calibration failure: {exc}")
        return EXIT_CALIBRATION
    block_ys = detect.block_outputs(decomp, bank, traj.states)
    flagged = detect.local_identification(decomp, bank, cal, block_ys)
    rows = [[t, repr(float(np.max(np.abs(block_ys[t]))))]
            for t in range(block_ys.shape[0])]
    _write_trace(out / "trace.csv", ["t", "block_output_norm"], rows)
    _write_json(out / "verdict.json", {
        "schema_version": SCHEMA_VERSION,
        "mode": "local-identify",
        "observer": j,
        "block": h,
        "seed": seed,
        "status": "identified",
        "identified": [int(a) for a in flagged],
        "threshold": cal.T_h,
        "epsilon": decomp.epsilon,
        "eval_time": cal.eval_time,
    })
    print(f"flagged within block {h}: {sorted(flagged)}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    scn, base = _load_scenario(args.scenario)
    out = _prepare_out(args)
    A = _matrix_from_scenario(scn, base)
    net = consensus.validate(A)
    j = int(scn["observer"])
    targets = [int(a) for a in scn.get("targets", [])]
    decouple = [int(a) for a in scn.get("decouple", [])]
    C = net.output_matrix(j)
    B_t = consensus.input_matrix(net.n, targets)
    B_d = consensus.input_matrix(net.n, decouple)
    report = fdi.synthesize_residual_generator(net.A, B_t, B_d, C)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "mode": "synthesize",
        "observer": j,
        "targets": targets,
        "decouple": decouple,
        "solvable": report.solvable,
        "dim_V_star": report.V_star.dim,
        "dim_S_star": report.S_star.dim,
        "dim_unobservability": report.S_M.dim,
        "generator": json.loads(report.generator.to_json())
        if report.generator else None,
    }
    _write_json(out / "report.json", payload)
    print("solvable" if report.solvable else "not solvable")
    return EXIT_OK if report.solvable else EXIT_INVALID


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="netguard",
        description="Consensus-network misbehavior analysis and identification")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "validate": cmd_validate,
        "analyze": cmd_analyze,
        "simulate": cmd_simulate,
        "detect": cmd_detect,
        "identify": cmd_identify,
        "local-identify": cmd_local_identify,
        "synthesize": cmd_synthesize,
    }
    for name, handler in specs.items():
        p = sub.add_parser(name)
        if name == "validate":
            p.add_argument("--matrix", help="matrix file (rows of numbers)")
            p.add_argument("--scenario", help="scenario JSON file")
        else:
            p.add_argument("--scenario", required=True)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.set_defaults(handler=handler)
    args = parser.parse_args(argv)
    tol_env = os.environ.get("NETGUARD_TOL")
    if tol_env:
        numerics.set_rank_tolerance(float(tol_env))
    if args.command == "validate" and not (args.matrix or args.scenario):
        parser.error("validate needs --matrix or --scenario")
    try:
        return args.handler(args)
    except (ValueError, consensus.ConsensusError, OSError,
            json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
