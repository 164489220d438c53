"""Command-line entry points: ``solve``, ``verify``, ``simulate`` and ``table2``.

Exit codes: 0 converged and verified, 2 not converged (or verification
failed), 3 bad config or input file, 4 infeasible LP.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    TABLE2,
    TABLE2_GAMES,
    ConfigError,
    ExperimentConfig,
    load_config,
    preset_names,
    table2_preset,
)
from .lp import LPInfeasible, build_polytope, occupation_to_policy
from .solver import default_init, simulate, solve, verify_cne

log = logging.getLogger("macgame")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3, 4
RESULT_COLUMNS = ["user", "rate", "power_cost", "queue_cost", "pure", "iterations", "converged"]
MEASURE_COLUMNS = ["user", "k", "q", "l", "d", "z"]


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def result_rows(result) -> list:
    rows = []
    for i, rate in enumerate(result.rates):
        q = None if result.queue_costs is None else result.queue_costs[i]
        rows.append(
            [
                i + 1,
                _fmt(rate),
                _fmt(result.power_costs[i]),
                _fmt(q),
                "true" if result.pure[i] else "false",
                result.iterations,
                "true" if result.converged else "false",
            ]
        )
    return rows


def measure_rows(spec, measures) -> list:
    rows = []
    for i, (user, z) in enumerate(zip(spec.users, measures)):
        for (s, a), value in zip(user.space.pairs(), z):
            q = s[1] if len(s) > 1 else ""
            d = a[1] if len(a) > 1 else ""
            rows.append([i + 1, s[0], q, a[0], d, repr(float(value))])
    return rows


def write_result(cfg: ExperimentConfig, spec, result, out_dir: Path) -> Path:
    """Write ``<name>.csv``, ``<name>.measures.csv`` and ``<name>.meta.json``."""
    out_dir = Path(out_dir)
    base = out_dir / cfg.name
    _write_atomic(base.with_suffix(".csv"), _csv_text(RESULT_COLUMNS, result_rows(result)))
    _write_atomic(
        out_dir / f"{cfg.name}.measures.csv", _csv_text(MEASURE_COLUMNS, measure_rows(spec, result.measures))
    )
    meta = {
        "name": cfg.name,
        "config_sha256": cfg.digest(),
        "solver_version": __version__,
        "iterations": result.iterations,
        "converged": result.converged,
        "epsilon": result.epsilon,
        "config": cfg.raw,
    }
    _write_atomic(out_dir / f"{cfg.name}.meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return base.with_suffix(".csv")


def measures_path(result_path) -> Path:
    p = Path(result_path)
    if p.name.endswith(".measures.csv"):
        return p
    return p.with_name(p.name[: -len(".csv")] + ".measures.csv" if p.name.endswith(".csv") else p.name + ".measures.csv")


def read_measures(spec, path) -> list:
    """Parse a measures file against ``spec``; raises :class:`ConfigError` with a field path."""
    path = measures_path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read measures: {exc}") from None
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != MEASURE_COLUMNS:
        raise ConfigError(f"expected columns {MEASURE_COLUMNS}, got {reader.fieldnames}", str(path))
    zs = [np.full(u.space.size, np.nan) for u in spec.users]
    for line, row in enumerate(reader, start=2):
        where = f"{path.name}:{line}"
        try:
            i = int(row["user"]) - 1
            user = spec.users[i]
            if i < 0:
                raise IndexError
        except (ValueError, IndexError):
            raise ConfigError(f"bad user {row['user']!r}", f"{where}.user") from None
        try:
            s = (int(row["k"]),) if user.saturated else (int(row["k"]), int(row["q"]))
            a = (int(row["l"]),) if user.saturated else (int(row["l"]), int(row["d"]))
            z = float(row["z"])
        except (ValueError, TypeError):
            raise ConfigError("non-numeric state, action or z", where) from None
        sp = user.space
        if s not in sp.state_index or a not in sp.action_index:
            raise ConfigError(f"state {s} / action {a} outside the user's space", where)
        zs[i][sp.state_index[s] * sp.n_actions + sp.action_index[a]] = z
    for i, z in enumerate(zs):
        if np.isnan(z).any():
            raise ConfigError(f"measure of user {i + 1} is incomplete", str(path))
    return zs


def _initial(cfg, spec):
    init = cfg.solver["init"]
    if init in ("phase1", "idle"):
        return default_init(spec, init)
    return read_measures(spec, init)


def run_experiment(cfg: ExperimentConfig, out_dir=None, quiet: bool = False):
    """Solve one config and write its result files; returns ``(exit_code, result)``."""
    spec = cfg.game()
    out_dir = Path(out_dir or cfg.output["path"])
    try:
        result = solve(spec, _initial(cfg, spec), cfg.solver["eps"], cfg.solver["max_sweeps"])
    except LPInfeasible as exc:
        log.error("%s: infeasible best-response LP: %s", cfg.name, exc)
        return EXIT_INFEASIBLE, None
    path = write_result(cfg, spec, result, out_dir)
    report = verify_cne(spec, result.measures, max(cfg.solver["eps"], 1e-9))
    if not quiet:
        print(_csv_text(RESULT_COLUMNS, result_rows(result)), end="")
        log.info("wrote %s", path)
    if not result.converged:
        log.error("%s: not converged after %d sweeps", cfg.name, result.iterations)
        return EXIT_NOT_CONVERGED, result
    if not report.ok:
        log.error("%s: converged point fails verification (gains %s)", cfg.name, report.gains)
        return EXIT_NOT_CONVERGED, result
    return EXIT_OK, result


def run_verify(cfg: ExperimentConfig, result_path, eps=None) -> tuple[int, str]:
    spec = cfg.game()
    measures = read_measures(spec, result_path)
    for i, (user, z) in enumerate(zip(spec.users, measures)):
        if build_polytope(user).residual(z) > 1e-7:
            raise ConfigError(f"measure of user {i + 1} is infeasible", str(result_path))
    eps = cfg.solver["eps"] if eps is None else eps
    report = verify_cne(spec, measures, eps)
    rows = [[i + 1, f"{g:.6e}", "true" if g <= eps else "false"] for i, g in enumerate(report.gains)]
    return (EXIT_OK if report.ok else EXIT_NOT_CONVERGED), _csv_text(["user", "gain", "ok"], rows)


def run_simulate(cfg: ExperimentConfig, result_path, horizon=None, seed=None) -> str:
    spec = cfg.game()
    measures = read_measures(spec, result_path)
    policies = [occupation_to_policy(z, u) for z, u in zip(measures, spec.users)]
    horizon = cfg.sim["horizon"] if horizon is None else horizon
    seed = cfg.sim["seed"] if seed is None else seed
    sim = simulate(spec, policies, horizon, seed)
    width = max(len(o) for o in sim.channel_occupancy)
    header = ["user", "rate", "power_cost", "queue_cost"] + [f"occupancy_k{k}" for k in range(width)]
    rows = []
    for i in range(spec.n_users):
        q = None if sim.queue_costs is None else sim.queue_costs[i]
        occ = [_fmt(x) for x in sim.channel_occupancy[i]]
        occ += [""] * (width - len(occ))
        rows.append([i + 1, _fmt(sim.rates[i]), _fmt(sim.power_costs[i]), _fmt(q)] + occ)
    return _csv_text(header, rows)


def match_table2(game: str, mode: str, rates) -> tuple:
    """Closest published equilibrium to ``rates`` and the per-user absolute deltas."""
    best = None
    for ref in TABLE2[(game, mode)]:
        delta = np.abs(np.asarray(rates) - np.asarray(ref))
        if best is None or delta.max() < best[1].max():
            best = (ref, delta)
    return best


def run_table2(out_dir, quiet: bool = False) -> tuple[int, list]:
    """Solve all 14 published configurations and write ``table2.csv``."""
    out_dir = Path(out_dir)
    rows, status = [], EXIT_OK
    for mode in ("saturated", "unsaturated"):
        for game in TABLE2_GAMES:
            cfg = load_config(table2_preset(game, mode))
            t0 = time.perf_counter()
            code, result = run_experiment(cfg, out_dir, quiet=True)
            elapsed = time.perf_counter() - t0
            status = max(status, code)
            if result is None:
                continue
            ref, delta = match_table2(game, mode, result.rates)
            for i, rate in enumerate(result.rates):
                rows.append(
                    [game, mode, i + 1, _fmt(rate), _fmt(ref[i]), _fmt(delta[i]),
                     result.iterations, "true" if result.converged else "false", f"{elapsed:.2f}"]
                )
    header = ["game", "mode", "user", "rate", "reference", "abs_delta", "iterations", "converged", "seconds"]
    _write_atomic(out_dir / "table2.csv", _csv_text(header, rows))
    if not quiet:
        print(_format_table(rows))
    return status, rows


def _format_table(rows) -> str:
    lines = [f"{'game':<5} {'mode':<12} {'rates':<28} {'reference':<28} {'max|delta|':>10}"]
    by_key = {}
    for r in rows:
        by_key.setdefault((r[0], r[1]), []).append(r)
    for (game, mode), rs in by_key.items():
        rates = ",".join(f"{float(r[3]):.4f}" for r in rs)
        ref = ",".join(f"{float(r[4]):.4f}" for r in rs)
        worst = max(float(r[5]) for r in rs)
        lines.append(f"{game:<5} {mode:<12} {rates:<28} {ref:<28} {worst:>10.4f}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="macgame", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute an equilibrium for one config")
    p.add_argument("--config", required=True, help="YAML file or preset name")
    p.add_argument("--out", help="output directory (default: output.path from the config)")

    p = sub.add_parser("verify", help="best-deviation gains of a stored result")
    p.add_argument("--config", required=True)
    p.add_argument("--result", required=True, help="result CSV written by solve")
    p.add_argument("--eps", type=float)
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("simulate", help="Monte Carlo time averages of a stored result")
    p.add_argument("--config", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("table2", help="reproduce the published equilibrium throughput table")
    p.add_argument("--out", default="results")

    sub.add_parser("presets", help="list shipped presets")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "presets":
            print("\n".join(preset_names()))
            return EXIT_OK
        if args.command == "table2":
            return run_table2(args.out)[0]
        cfg = load_config(args.config)
        if args.command == "solve":
            return run_experiment(cfg, args.out)[0]
        if args.command == "verify":
            code, text = run_verify(cfg, args.result, args.eps)
        else:
            code, text = EXIT_OK, run_simulate(cfg, args.result, args.horizon, args.seed)
        if args.out:
            _write_atomic(Path(args.out), text)
        else:
            sys.stdout.write(text)
        return code
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except LPInfeasible as exc:
        log.error("infeasible LP: %s", exc)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
