"""Command-line entry point: ``olrg {oracle,train,tobc,verify,report}``.

Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure,
4 verification failure.
"""

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .config import load_config
from .dynamics import Checkpoints, SolverConfig
from .errors import ConfigError, NumericError, ResourceError
from .hem import Pulses, export_pulse_schedule
from .model import initial_set
from .tobc import full_grid, tobc_values
from .train import predict, select_best_epoch, train, transfer_schedule
from .verify import (
    adjoint_power_deviation,
    check_dyson_truncation,
    check_rt_bound,
    check_telescoping,
    exact_expectation,
    tensor_adjoint_deviation,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
MAX_TOBC_DIM = 2**10
SUITES = ("telescoping", "rt_bound", "dyson", "lemmas")


def fmt(x: float) -> str:
    """Shortest round-trip repr, with -0.0 folded to 0.0 and 12-digit rounding."""
    return repr(float(round(float(x), 12)) + 0.0)


def exact(x: float) -> str:
    """Round-trip repr without rounding (used for values derived from printed columns)."""
    return repr(float(x) + 0.0)


def relative_error(pred: float, oracle: float) -> float:
    return abs(pred - oracle) / max(abs(oracle), 1e-12)


def deterministic() -> bool:
    return os.environ.get("OLRG_DETERMINISTIC") == "1"


def configure_threads():
    if deterministic():
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    elif os.environ.get("OLRG_THREADS"):
        torch.set_num_threads(int(os.environ["OLRG_THREADS"]))


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_oracle(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "value"])
    for T in args.T:
        w.writerow([f"{T:g}", fmt(exact_expectation(args.N, args.h, (1, 2), T))])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _write_history(path, histories, record_time):
    entries = []
    for h in histories:
        for r in h.records:
            entries.append({
                "T": h.T,
                "epoch": r.epoch,
                "total_loss": r.total_loss,
                "per_step_losses": r.per_step_losses,
                "wall_ms": r.wall_ms if record_time else None,
            })
    Path(path).write_text(json.dumps(entries, indent=1) + "\n")


def cmd_train(args) -> int:
    exp = load_config(args.config)
    out = Path(args.out) if args.out else exp.output
    out.mkdir(parents=True, exist_ok=True)
    cfg, record_time = exp.train, not deterministic()
    if len(exp.times) > 1:
        histories = transfer_schedule(cfg, exp.model, exp.layout, exp.times, exp.epochs_per_point, record_time=record_time)
    else:
        histories = [train(cfg, exp.model, exp.layout, record_time=record_time)]
    _write_history(out / "history.json", histories, record_time)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "pred_SzSz", "pred_ZZ", "oracle_SzSz", "oracle_ZZ", "rel_error", "best_epoch", "seed"])
    from dataclasses import replace

    for h in histories:
        theta = h.best_theta if h.best_theta is not None else h.final_theta
        pred = predict(replace(cfg, T=h.T), exp.model, exp.layout, theta)
        oracle = exact_expectation(cfg.target_N, exp.model.h, (1, 2), h.T)
        pred, oracle = round(pred, 12) + 0.0, round(oracle, 12) + 0.0
        best = "" if h.best_epoch is None else h.best_epoch
        w.writerow([f"{h.T:g}", exact(pred / 4), exact(pred), exact(oracle / 4), exact(oracle), exact(relative_error(pred, oracle)), best, cfg.seed])
    (out / "results.csv").write_text(buf.getvalue())

    final = histories[-1].best_theta if histories[-1].best_theta is not None else histories[-1].final_theta
    if hasattr(exp.layout, "save"):
        exp.layout.save(out / "checkpoint.olrg", final)
    if isinstance(exp.layout, Pulses):
        export_pulse_schedule(exp.layout, final, cfg.target_N, histories[-1].T, exp.pulse_samples, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_tobc(args) -> int:
    exp = load_config(args.config)
    n = args.sites or exp.train.target_N
    T = exp.train.T if args.T is None else args.T
    M = args.M or exp.train.checkpoints
    if 2**n > MAX_TOBC_DIM:
        raise ResourceError(f"{n} sites gives dimension {2**n} > {MAX_TOBC_DIM}")
    s = initial_set(exp.model, n)
    grid = Checkpoints(T, M)
    batch = full_grid(args.order, grid, len(s.boundary))
    if args.order == 0:
        batch = type(batch)(batch.ids[:1], batch.steps[:1], batch.signs[:1])
    (chi,) = tobc_values(s, [batch], grid, SolverConfig(method="expm"))
    k = args.order
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["order"] + [f"i{j+1}" for j in range(k)] + [f"t{j+1}" for j in range(k)] + [f"s{j+1}" for j in range(k)] + ["re", "im"])
    for row in range(len(batch)):
        ids = [int(i) for i in batch.ids[row]]
        times = [fmt(grid.time(int(m))) for m in batch.steps[row]]
        signs = [int(x) for x in batch.signs[row]]
        w.writerow([k] + ids + times + signs + [fmt(chi[row].real), fmt(chi[row].imag)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def run_suite(name: str, instances: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, instances)
    reports = []
    if name == "telescoping":
        reports = [dict(suite=name, **check_telescoping(2, 1, 2, 1.0, int(s)).to_dict()) for s in seeds]
    elif name == "rt_bound":
        reports = [dict(suite=name, **check_rt_bound(2, 1, 0.5, 0.1, int(s)).to_dict()) for s in seeds]
    elif name == "dyson":
        table = check_dyson_truncation(T=0.5, k_max=3)
        for M in sorted({m for m, *_ in table.rows}):
            reports.append({"suite": name, "M": M, "errors": table.errors(M), "satisfied": table.monotone(M)})
    elif name == "lemmas":
        worst_t = worst_p = 0.0
        for _ in range(instances):
            a, b, x, y = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(4))
            sigma = int(rng.choice([-1, 1]))
            worst_t = max(worst_t, tensor_adjoint_deviation(a, b, x, y, sigma))
            worst_p = max(worst_p, adjoint_power_deviation(a, b, x, sigma))
        for lemma, dev in (("tensor_product_adjoint", worst_t), ("adjoint_power", worst_p)):
            reports.append({"suite": name, "lemma": lemma, "max_deviation": dev, "satisfied": dev < 1e-10})
    return reports


def cmd_verify(args) -> int:
    if not args.suites:
        raise ConfigError(f"select at least one suite from: {', '.join(SUITES)}")
    unknown = [s for s in args.suites if s not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s) {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    reports = []
    for name in args.suites:
        reports += run_suite(name, args.instances, args.seed)
    _emit(json.dumps(reports, indent=1) + "\n", args.out)
    return EXIT_OK if all(r["satisfied"] for r in reports) else EXIT_VERIFY


def cmd_report(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "T", "pred_SzSz", "oracle_SzSz", "rel_error", "best_epoch", "seed", "epochs", "final_loss", "best_ma_loss"])
    for run in args.runs:
        run = Path(run)
        try:
            history = json.loads((run / "history.json").read_text())
            with open(run / "results.csv", newline="") as fh:
                rows = list(csv.DictReader(fh))
        except FileNotFoundError as exc:
            raise ConfigError(f"{run} is not a run directory: {exc.filename} missing") from None
        for row in rows:
            T = float(row["T"])
            losses = [e["total_loss"] for e in history if e["T"] == T]
            window = min(args.window, len(losses)) if losses else 0
            if losses:
                best = select_best_epoch(losses, window)
                best_ma = fmt(np.mean(losses[best - window + 1 : best + 1]))
                final = fmt(losses[-1])
            else:
                best_ma = final = ""
            w.writerow([str(run), row["T"], row["pred_SzSz"], row["oracle_SzSz"], row["rel_error"], row["best_epoch"], row["seed"], len(losses), final, best_ma])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="olrg", description="Operator learning renormalization group experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle", help="exact <Z1 Z2>(T) for the N-site chain from |0...0>")
    o.add_argument("--N", type=int, required=True, help="number of sites (at most 12)")
    o.add_argument("--h", type=float, default=1.0, help="transverse field")
    o.add_argument("--T", type=float, nargs="+", required=True, help="evolution times")
    o.add_argument("--out", help="write CSV here instead of stdout")
    o.set_defaults(func=cmd_oracle)

    t = sub.add_parser("train", help="train an operator map from a TOML config")
    t.add_argument("config", help="TOML file with schema = 1")
    t.add_argument("--out", help="override output.directory")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("tobc", help="dump every correlator of one order on the checkpoint grid")
    c.add_argument("config", help="TOML file; [model] and [loss] define the system")
    c.add_argument("--order", type=int, required=True, help="correlator order k")
    c.add_argument("--sites", type=int, help="system size (default model.target_N)")
    c.add_argument("--T", type=float, help="total time (default loss.T)")
    c.add_argument("--M", type=int, help="checkpoints (default loss.checkpoints)")
    c.add_argument("--out", help="write CSV here instead of stdout")
    c.set_defaults(func=cmd_tobc)

    v = sub.add_parser("verify", help="run verification batteries; exits 4 on any failure")
    v.add_argument("suites", nargs="*", metavar="suite", help=f"one or more of {', '.join(SUITES)}")
    v.add_argument("--instances", type=int, default=200, help="random instances per suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="write JSON here instead of stdout")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="join run directories into one summary CSV")
    r.add_argument("runs", nargs="+", help="directories written by 'olrg train'")
    r.add_argument("--window", type=int, default=10, help="moving-average window")
    r.add_argument("--out", help="write CSV here instead of stdout")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_threads()
    try:
        return args.func(args)
    except (ConfigError, ResourceError) as exc:
        print(f"olrg: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"olrg: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
