"""Command-line entry point: ``clonedecomp {simulate,solve,calibrate,uncertainty}``.

Exit codes: 0 success, 2 bad input or usage, 3 the search hit its sweep cap
(outputs are still written).  Every run writes ``manifest.json`` last; it is
the only output that carries wall-clock timings.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from .calibrate import DEFAULT_LADDER, calibrate_lambda
from .core import (DimensionError, DomainError, GenotypeMatrix, Mode, ModelConfig,
                   ReadCountMatrix, Solution, WeightMatrix)
from .bregman import objective_q
from .simulate import simulate_haplotype, simulate_subclone
from .solver import SolverConfig, default_threads, multi_restart
from .tsvio import InputError, format_counts, read_counts
from .uncertainty import McmcConfig, conditional_mcmc

log = logging.getLogger("clonedecomp")

SOLUTION_SCHEMA = "clonedecomp.solution/1"
TRUTH_SCHEMA = "clonedecomp.truth/1"
MANIFEST_SCHEMA = "clonedecomp.manifest/1"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _probability(text: str) -> float:
    v = _positive_float(text)
    if not v < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return v


def _ladder(text: str) -> tuple[float, ...]:
    vals = tuple(_positive_float(x) for x in text.split(",") if x.strip())
    if not vals:
        raise argparse.ArgumentTypeError("ladder needs at least one value")
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError("ladder must be strictly decreasing")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=[m.value for m in Mode], default="haplotype")
    common.add_argument("--p0", type=_probability, default=0.01,
                        help="background VAF (default 0.01)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", type=Path, default=Path("."))
    common.add_argument("-v", "--verbose", action="store_true")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--restarts", type=_positive_int, default=100)
    search.add_argument("--threads", type=_positive_int, default=None,
                        help="parallel restarts (default $CLONEDECOMP_THREADS or 1)")
    search.add_argument("--max-sweeps", type=_positive_int, default=500)

    parser = argparse.ArgumentParser(prog="clonedecomp",
                                     description="Feature-allocation MAP search for VAF data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic data set")
    p.add_argument("--snvs", type=_positive_int, default=80)
    p.add_argument("--samples", type=_positive_int, default=25)
    p.add_argument("--depth", type=_positive_int, default=50)
    p.add_argument("--het-prob", type=_probability, default=0.7)

    p = sub.add_parser("solve", parents=[common, search], help="multi-restart MAP search")
    p.add_argument("input", type=Path)
    p.add_argument("--lambda-sq", type=_positive_float, default=8.0)

    p = sub.add_parser("calibrate", parents=[common, search], help="choose lambda_sq")
    p.add_argument("input", type=Path)
    p.add_argument("--ladder", type=_ladder, default=DEFAULT_LADDER,
                   help="comma-separated decreasing penalties")

    p = sub.add_parser("uncertainty", parents=[common], help="posterior agreement p_bar")
    p.add_argument("input", type=Path)
    p.add_argument("--solution", type=Path, required=True,
                   help="solution JSON written by solve or calibrate")
    p.add_argument("--iterations", type=_positive_int, default=1000)
    p.add_argument("--burn-in", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------
# output helpers

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def solution_record(sol: Solution, counts: ReadCountMatrix, model: ModelConfig) -> dict:
    return {
        "schema": SOLUTION_SCHEMA,
        "mode": model.mode.value,
        "lambda_sq": model.lambda_sq,
        "p0": model.p0,
        "seed": sol.seed,
        "C_hat": sol.C_hat,
        "q_value": sol.q_value,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "snv_labels": list(counts.snv_labels),
        "sample_labels": list(counts.sample_labels),
        "Z": sol.Z_hat.entries.astype(int).tolist(),
        "W": sol.W_hat.w.tolist(),
    }


def load_solution(path: Path, counts: ReadCountMatrix) -> tuple[Solution, ModelConfig]:
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read solution {path}: {exc}") from None
    if rec.get("schema", "").split("/")[0] != SOLUTION_SCHEMA.split("/")[0]:
        raise InputError(f"{path} is not a solution file")
    if list(rec["snv_labels"]) != list(counts.snv_labels):
        raise InputError("solution SNV labels do not match the input table")
    if list(rec["sample_labels"]) != list(counts.sample_labels):
        raise InputError("solution sample labels do not match the input table")
    model = ModelConfig(p0=rec["p0"], lambda_sq=rec["lambda_sq"], mode=Mode(rec["mode"]))
    C = rec["C_hat"]
    Z = np.array(rec["Z"], dtype=np.int8).reshape(counts.S, C)
    W = np.array(rec["W"], dtype=float).reshape(counts.T, C + 1)
    Zm, Wm = GenotypeMatrix(Z, model.mode), WeightMatrix(W)
    sol = Solution(C, Zm, Wm, objective_q(counts, Zm, Wm, model), rec.get("iterations", 0),
                   rec.get("seed", 0), converged=rec.get("converged", True))
    return sol, model


def _z_csv(sol: Solution, counts: ReadCountMatrix) -> str:
    header = ["snv_id"] + [f"feature{c + 1}" for c in range(sol.C_hat)]
    rows = ([lab] + [int(v) for v in row] for lab, row in zip(counts.snv_labels,
                                                             sol.Z_hat.entries))
    return _csv(header, rows)


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


class _Run:
    """Collects outputs in memory and writes them together once compute is done."""

    def __init__(self, args):
        self.args = args
        self.files: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self._t = time.perf_counter()

    def phase(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = round(now - self._t, 6)
        self._t = now

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def flush(self, config: dict) -> None:
        out: Path = self.args.out_dir
        for name, text in sorted(self.files.items()):
            _atomic_write(out / name, text)
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "subcommand": self.args.command,
            "input": str(getattr(self.args, "input", "")) or None,
            "seed": self.args.seed,
            "config": config,
            "versions": _versions(),
            "timings_seconds": self.timings,
            "outputs": sorted(self.files),
        }
        _atomic_write(out / "manifest.json", _json(manifest))


def _model(args, lambda_sq: float = 8.0) -> ModelConfig:
    return ModelConfig(p0=args.p0, lambda_sq=lambda_sq, mode=Mode(args.mode))


def _solver_cfg(args, model: ModelConfig) -> SolverConfig:
    return SolverConfig(model=model, max_sweeps=args.max_sweeps, rng_seed=args.seed)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    try:
        return default_threads()
    except ValueError:
        raise InputError("CLONEDECOMP_THREADS must be an integer") from None


def _config_snapshot(cfg: SolverConfig) -> dict:
    d = asdict(cfg)
    d["model"]["mode"] = cfg.model.mode.value
    d["birth_schedule"] = cfg.birth_schedule.value
    return d


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    run = _Run(args)
    gen = simulate_haplotype if args.mode == "haplotype" else simulate_subclone
    kw = dict(S=args.snvs, T=args.samples, depth=args.depth, p0=args.p0)
    if args.mode == "subclone":
        kw["het_prob"] = args.het_prob
    counts, truth = gen(args.seed, **kw)
    run.phase("simulate")
    run.add("counts.tsv", format_counts(counts))
    run.add("truth.json", _json({
        "schema": TRUTH_SCHEMA,
        "mode": args.mode,
        "seed": args.seed,
        "p0": truth.p0,
        "depth": truth.N_depth,
        "snv_labels": list(counts.snv_labels),
        "sample_labels": list(counts.sample_labels),
        "Z": truth.Z_true.entries.astype(int).tolist(),
        "W": truth.W_true.w.tolist(),
    }))
    run.flush({"mode": args.mode, **kw})
    return EXIT_OK


def cmd_solve(args) -> int:
    counts = read_counts(args.input)
    run = _Run(args)
    run.phase("read")
    cfg = _solver_cfg(args, _model(args, args.lambda_sq))
    ens = multi_restart(counts, cfg, args.restarts, _threads(args))
    run.phase("search")
    best = ens.best_solution
    run.add("solution.json", _json(solution_record(best, counts, cfg.model)))
    run.add("Z.csv", _z_csv(best, counts))
    run.add("c_histogram.csv", _csv(["C_hat", "count"], ens.c_histogram.items()))
    run.add("restarts.csv", _csv(
        ["restart", "seed", "C_hat", "q_value", "iterations", "converged"],
        ([i, s.seed, s.C_hat, s.q_value, s.iterations, int(s.converged)]
         for i, s in enumerate(ens.solutions))))
    run.flush({"solver": _config_snapshot(cfg), "restarts": args.restarts})
    log.info("best of %d restarts: C_hat=%d, Q=%.6f", args.restarts, best.C_hat, best.q_value)
    return EXIT_OK if best.converged else EXIT_NOT_CONVERGED


def cmd_calibrate(args) -> int:
    counts = read_counts(args.input)
    run = _Run(args)
    run.phase("read")
    cfg = _solver_cfg(args, _model(args))
    trace = calibrate_lambda(counts, cfg, args.ladder, args.restarts,
                             parallelism=_threads(args))
    run.phase("calibrate")
    sel = trace.selected_solution
    model = replace(cfg.model, lambda_sq=trace.selected_lambda_sq)
    rows = ([lam, C, mw, float(r.solution.q_value), int(lam == trace.selected_lambda_sq)]
            for (lam, C, mw), r in zip(trace.ladder, trace.rungs))
    run.add("calibration.csv", _csv(
        ["lambda_sq", "C_hat", "min_peak_weight", "q_value", "selected"], rows))
    rec = solution_record(sel, counts, model)
    rec["calibration_warning"] = trace.warning
    rec["degenerate"] = trace.degenerate
    run.add("solution.json", _json(rec))
    run.add("Z.csv", _z_csv(sel, counts))
    run.flush({"solver": _config_snapshot(cfg), "ladder": list(args.ladder),
               "restarts_per_rung": args.restarts})
    if trace.warning:
        log.warning(trace.warning)
    return EXIT_OK if sel.converged else EXIT_NOT_CONVERGED


def cmd_uncertainty(args) -> int:
    counts = read_counts(args.input)
    sol, model = load_solution(args.solution, counts)
    if model.mode.value != args.mode:
        log.info("using mode %s from the solution file", model.mode.value)
    if args.burn_in < 0 or args.burn_in >= args.iterations:
        raise InputError("--burn-in must lie in [0, iterations)")
    run = _Run(args)
    run.phase("read")
    mcfg = McmcConfig(iterations=args.iterations, burn_in=args.burn_in, rng_seed=args.seed)
    unc = conditional_mcmc(counts, sol, mcfg, model)
    run.phase("mcmc")
    header = ["snv_id"] + [f"feature{c + 1}" for c in range(sol.C_hat)]
    run.add("p_bar.csv", _csv(header, ([lab] + list(row) for lab, row in
                                        zip(counts.snv_labels, unc.p_bar))))
    run.flush({"mcmc": asdict(mcfg), "mode": model.mode.value})
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "solve": cmd_solve, "calibrate": cmd_calibrate,
            "uncertainty": cmd_uncertainty}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, DimensionError, DomainError) as exc:
        print(f"clonedecomp: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"clonedecomp: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
