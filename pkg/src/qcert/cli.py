"""Experiment runner.

    qcert run --experiment adversary --n 8 10 12 --trials 20 --out runs/adv
    qcert validate --experiment certify --n 20 --dense

Trial ``i`` of a sweep uses ``Seed(master_seed, i)`` where ``i`` counts
trials across all requested ``n`` in order, so outputs do not depend on the
thread count.  Exit codes: 0 success, 1 config error, 2 guard violation,
3 failed check under ``--check``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from . import __version__
from .experiments import EXPERIMENTS, Params
from .protocols import DENSE_MAX_QUBITS
from .statevec import MAX_QUBITS, Seed, SizeGuardError

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_CHECK = 0, 1, 2, 3
FORMATS = ("rows", "records", "chart")
THREADS_ENV = "QCERT_THREADS"
# fields that change how a run executes but never what it computes
EXECUTION_FIELDS = ("threads", "output_dir")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "certify"
    n_list: List[int] = field(default_factory=lambda: [8])
    gamma: float = 1.0
    trials: int = 10
    master_seed: int = 0
    threads: int = 1
    output_dir: str = "runs/out"
    formats: List[str] = field(default_factory=lambda: ["rows", "records"])
    construction: str = "worst"
    lab: str = "target"
    leftover: int = 0
    dense: bool = False
    shots: int = 0
    epsilon: float = 0.2
    delta: float = 0.05
    repeats: int = 0
    threshold: float = -1.0
    subtest: str = "ideal"
    tol: float = 1e-8
    max_iter: int = 10_000
    target_file: str = ""
    lab_file: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.n_list = [int(n) for n in cfg.n_list]
        cfg.formats = list(cfg.formats)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def params(self) -> Params:
        names = {f.name for f in dataclasses.fields(Params)}
        return Params(**{k: v for k, v in self.to_dict().items() if k in names})

    def content(self) -> dict:
        """Config minus execution-only fields; embedded in every data file."""
        return {k: v for k, v in self.to_dict().items() if k not in EXECUTION_FIELDS}


def resolve_threads(threads: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
    if threads < 0:
        raise ConfigError("threads must be >= 0")
    return threads or (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "info", "error" or "guard"
    message: str

    def __str__(self) -> str:
        return f"[{self.level}] {self.message}"


def _bytes(count: float) -> str:
    for unit in ("B", "KiB", "MiB", "GiB", "TiB"):
        if count < 1024:
            return f"{count:.0f} {unit}"
        count /= 1024
    return f"{count:.0f} PiB"


def validate(cfg: ExperimentConfig) -> List[Diagnostic]:
    out: List[Diagnostic] = []
    if cfg.experiment not in EXPERIMENTS:
        out.append(Diagnostic("error", f"unknown experiment {cfg.experiment!r}; choose from {sorted(EXPERIMENTS)}"))
    bad_formats = set(cfg.formats) - set(FORMATS)
    if bad_formats:
        out.append(Diagnostic("error", f"unknown formats {sorted(bad_formats)}"))
    if cfg.trials < 1:
        out.append(Diagnostic("error", "trials must be >= 1"))
    if not cfg.n_list:
        out.append(Diagnostic("error", "at least one n is required"))
    if cfg.gamma < 0:
        out.append(Diagnostic("error", "gamma must be >= 0"))
    if not 0 < cfg.epsilon <= 1 or not 0 < cfg.delta < 1:
        out.append(Diagnostic("error", "need 0 < epsilon <= 1 and 0 < delta < 1"))
    try:
        threads = resolve_threads(cfg.threads)
        out.append(Diagnostic("info", f"threads resolved to {threads}"))
    except ConfigError as exc:
        out.append(Diagnostic("error", str(exc)))
    if any(d.level == "error" for d in out):
        return out
    params = cfg.params()
    experiment = EXPERIMENTS[cfg.experiment]
    for n in cfg.n_list:
        if not 2 <= n <= MAX_QUBITS:
            out.append(Diagnostic("error", f"n={n} outside [2, {MAX_QUBITS}]"))
            continue
        r = params.split(n)
        state_mem = 16 * 2**n
        line = f"n={n}: leftover k={n - r}, r={r}; state {_bytes(state_mem)}"
        if params.dense:
            line += f", dense oracle {_bytes(16 * 4**n)}"
        out.append(Diagnostic("info", line))
        if params.dense and n > DENSE_MAX_QUBITS:
            out.append(Diagnostic("guard", f"dense oracle needs n <= {DENSE_MAX_QUBITS}, got n={n}"))
            continue
        try:
            experiment.guard(params, n)
        except SizeGuardError as exc:
            out.append(Diagnostic("guard", f"n={n}: {exc}"))
    return out


def exit_code_for(diagnostics: List[Diagnostic]) -> int:
    levels = {d.level for d in diagnostics}
    if "error" in levels:
        return EXIT_CONFIG
    if "guard" in levels:
        return EXIT_GUARD
    return EXIT_OK


# ---------------------------------------------------------------------------
# running


def run_trial(cfg: ExperimentConfig, params: Params, n: int, index: int) -> dict:
    base = {"trial": index, "n": n}
    try:
        row = EXPERIMENTS[cfg.experiment].trial(params, n, Seed(cfg.master_seed, index))
        return {**base, "status": "ok", **row}
    except Exception as exc:  # contain per-trial failures in the row file
        return {**base, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def run_trials(cfg: ExperimentConfig, threads: Optional[int] = None) -> List[dict]:
    params = cfg.params()
    jobs = [(n, i * cfg.trials + t) for i, n in enumerate(cfg.n_list) for t in range(cfg.trials)]
    workers = resolve_threads(cfg.threads) if threads is None else threads
    if workers <= 1:
        return [run_trial(cfg, params, n, index) for n, index in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: run_trial(cfg, params, *job), jobs))


def _cell(value) -> str:
    if value is None:
        return ""
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_text(cfg: ExperimentConfig, rows: List[dict]) -> str:
    columns: List[str] = []
    for row in rows:
        columns += [key for key in row if key not in columns]
    buf = io.StringIO()
    buf.write(f"# qcert {__version__} config={json.dumps(cfg.content(), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(key)) for key in columns])
    return buf.getvalue()


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


def records_text(cfg: ExperimentConfig, rows: List[dict]) -> str:
    meta = {"version": __version__, "config": cfg.content()}
    lines = [json.dumps({"meta": meta}, sort_keys=True)]
    lines += [json.dumps(_jsonable(row)) for row in rows]
    return "\n".join(lines) + "\n"


def summarize(cfg: ExperimentConfig, rows: List[dict]) -> dict:
    experiment = EXPERIMENTS[cfg.experiment]
    ok = [row for row in rows if row["status"] == "ok"]
    summary = experiment.summarize(ok, cfg.params()) if ok else {}
    return {"version": __version__, "config": cfg.content(), "trials_ok": len(ok),
            "trials_failed": len(rows) - len(ok), "summary": _jsonable(summary)}


def run_checks(cfg: ExperimentConfig, summary: dict) -> List[Tuple[str, bool, str]]:
    if summary["trials_failed"]:
        return [("all trials completed", False, f"{summary['trials_failed']} failed")]
    return EXPERIMENTS[cfg.experiment].check(summary["summary"], cfg.params())


def write_chart(cfg: ExperimentConfig, rows: List[dict], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from .experiments import by_n, mean_se

    key = EXPERIMENTS[cfg.experiment].headline
    ns, means, ses = [], [], []
    for n, group in by_n([row for row in rows if row["status"] == "ok" and row.get(key) is not None]).items():
        mean, se = mean_se([float(row[key]) for row in group])
        ns.append(n)
        means.append(mean)
        ses.append(se)
    with matplotlib.rc_context({"svg.hashsalt": "qcert", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.errorbar(ns, means, yerr=ses, marker="o", capsize=3)
        ax.set_xlabel("n (qubits)")
        ax.set_ylabel(f"mean {key}")
        ax.set_title(f"{cfg.experiment}: {cfg.trials} trials per n")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def run(cfg: ExperimentConfig, check: bool = False, stream=None) -> int:
    stream = stream or sys.stdout
    diagnostics = validate(cfg)
    code = exit_code_for(diagnostics)
    if code:
        for diag in diagnostics:
            if diag.level != "info":
                print(diag, file=sys.stderr)
        return code
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        print(f"[error] cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_trials(cfg)
    if "rows" in cfg.formats:
        (out / "rows.csv").write_text(rows_text(cfg, rows))
    if "records" in cfg.formats:
        (out / "records.jsonl").write_text(records_text(cfg, rows))
    summary = summarize(cfg, rows)
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    if "chart" in cfg.formats:
        write_chart(cfg, rows, out / "chart.svg")
    print(f"{cfg.experiment}: {summary['trials_ok']} ok, {summary['trials_failed']} failed -> {out}", file=stream)
    if check:
        results = run_checks(cfg, summary)
        for name, passed, detail in results:
            print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", file=stream)
        if not all(passed for _, passed, _ in results):
            return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcert", description="Two-basis certification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags given explicitly override it")
        p.add_argument("--experiment", choices=sorted(EXPERIMENTS))
        p.add_argument("--n", type=int, nargs="+", dest="n_list")
        p.add_argument("--gamma", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int, dest="master_seed")
        p.add_argument("--threads", type=int, help="0 = all cores; QCERT_THREADS overrides")
        p.add_argument("--out", dest="output_dir")
        p.add_argument("--format", nargs="+", dest="formats", choices=FORMATS)
        p.add_argument("--construction", choices=["worst", "fooling", "sign-flip", "product", "target"])
        p.add_argument("--lab", choices=["target", "haar", "fooling", "worst", "mixed"])
        p.add_argument("--leftover", type=int, help="leftover qubits k (overrides gamma)")
        p.add_argument("--dense", action="store_true", default=None, help="also evaluate the dense accept operator")
        p.add_argument("--shots", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--repeats", type=int)
        p.add_argument("--threshold", type=float)
        p.add_argument("--subtest", choices=["ideal", "mock"])
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--target-file")
        p.add_argument("--lab-file")
        if name == "run":
            p.add_argument("--check", action="store_true", help="exit 3 if the experiment's checks fail")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key, value in vars(args).items():
        if key in names and value is not None:
            data[key] = value
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        diagnostics = validate(cfg)
        for diag in diagnostics:
            print(diag)
        return exit_code_for(diagnostics)
    try:
        return run(cfg, check=args.check)
    except ConfigError as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
