"""Command-line pipeline: ingest -> featurize -> split -> grid -> train -> evaluate -> compare.

Each subcommand reads the previous stage's artifacts from the output
directory, so any stage can be rerun alone; ``full`` runs them all. Settings
come from built-in defaults, then a ``key = value`` config file
(``--config``), then ``--key value`` flags.

    fsvm-trend full --config fixtures/full.conf --out run/

Exit status: 0 success, 1 computation error, 2 usage or I/O error. Outputs
are written to a staging directory and only moved into place when the whole
command succeeds.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .dataset import Dataset, SplitPlan, UP, DOWN, build_dataset, protocol_split
from .errors import FsvmTrendError, ParseError, UsageError
from .evaluation import (EvalReport, GridResult, compare_models, default_grid, default_jobs,
                         dumps, evaluate_model, fit_on_rows, per_year_gnuplot, report_csv,
                         run_parameter_stage)
from .fsvm import FsvmModel, TrainConfig
from .fsvm.model import PRESETS
from .indicators import DEFAULT_SPECS, FeatureMatrix, compute_feature_matrix, format_spec, parse_spec
from .market_data import parse_ohlcv_csv, serialize_ohlcv_csv, validate_series

log = logging.getLogger("fsvm_trend")

FAMILIES = ("fsvm", "nafsvm")


# -- options ----------------------------------------------------------------------

def _choice(*allowed: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return text
    return parse


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in text.replace(",", " ").split())
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _specs(text: str) -> tuple:
    # whitespace separated: spec parameters themselves use commas
    return tuple(parse_spec(t) for t in text.split())


@dataclass(frozen=True)
class Option:
    name: str
    parse: Callable[[str], Any]
    default: str
    help: str
    hashed: bool = True


OPTIONS: tuple[Option, ...] = (
    Option("input", str, "", "OHLCV CSV to ingest", hashed=False),
    Option("date_format", str, "%d-%m-%Y", "strptime format of the Date column"),
    Option("symbol", str, "", "ticker recorded on the series"),
    Option("indicators", _specs, " ".join(format_spec(s) for s in DEFAULT_SPECS),
           "whitespace-separated indicator specs, e.g. 'sma_30 rsi_14'"),
    Option("tie_label", _choice("down", "up"), "down", "label for an unchanged next close"),
    Option("param_fraction", float, "0.1", "share of each (year, class) cell in the parameter set"),
    Option("param_train_fraction", float, "0.7", "train share inside the parameter set"),
    Option("train_fraction", float, "0.8", "train share of the comparison split"),
    Option("split_mode", _choice("random", "chronological"), "random", "comparison split mode"),
    Option("disjoint", _bool, "false", "draw comparison sets outside the parameter set"),
    Option("norm", _choice("minmax", "zscore"), "minmax", "feature normalisation"),
    Option("grid_C", _floats, "0.1 1 10 100", "C values searched"),
    Option("grid_gamma", _floats, "0.01 0.1 1 10", "rbf gamma values searched"),
    Option("grid_floor", _floats, "0.3 0.5 0.7 1.0", "membership floors searched"),
    Option("model", _choice("both", *FAMILIES), "both", "model families to run"),
    Option("params", _choice("auto", "grid", "manual"), "auto",
           "train with grid winners (grid), the C/gamma/floor keys (manual), "
           "or grid winners when best_configs.json exists (auto)"),
    Option("C", float, "1.0", "box constant for params=manual"),
    Option("gamma", float, "0.1", "rbf width for params=manual"),
    Option("floor", float, "0.5", "membership floor for params=manual"),
    Option("tolerance", float, "0.001", "SMO stopping tolerance (KKT gap)"),
    Option("max_passes", int, "1000", "SMO iteration budget in multiples of n"),
    Option("seed", int, "0", "seed for splits and solver tie-breaking"),
    Option("out", str, "out", "output directory", hashed=False),
    Option("jobs", int, "0", "concurrent grid trainings (0: one per processor)", hashed=False),
)
OPTION_BY_NAME = {o.name: o for o in OPTIONS}


@dataclass(frozen=True)
class RunConfig:
    raw: dict[str, str]
    values: dict[str, Any]

    def __getattr__(self, name: str) -> Any:
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def config_hash(self) -> str:
        """Digest of every setting that can change numeric output.

        Paths and the job count are left out so a relocated run hashes the same.
        """
        canon = {o.name: _canonical(self.values[o.name]) for o in OPTIONS if o.hashed}
        blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def meta(self) -> dict:
        return {"tool": "fsvm-trend", "config_hash": self.config_hash, "seed": self.seed}

    def render(self) -> str:
        lines = [f"# fsvm-trend {__version__} resolved configuration",
                 f"# config_hash = {self.config_hash}"]
        lines += [f"{o.name} = {self.raw[o.name]}" for o in OPTIONS]
        return "\n".join(lines) + "\n"


def _canonical(value):
    if isinstance(value, tuple):
        return [_canonical(v) for v in value]
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "column"):  # IndicatorSpec
        return format_spec(value)
    return value


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        if key not in OPTION_BY_NAME:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def resolve_config(file_values: dict[str, str], overrides: dict[str, str],
                   base_dir: Path | None = None) -> RunConfig:
    raw = {o.name: o.default for o in OPTIONS}
    raw.update(file_values)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    # a relative input in a config file is relative to that file
    if base_dir is not None and "input" in file_values and "input" not in overrides:
        p = Path(raw["input"])
        if raw["input"] and not p.is_absolute():
            raw["input"] = str(base_dir / p)
    values = {}
    for opt in OPTIONS:
        try:
            values[opt.name] = opt.parse(raw[opt.name])
        except (ValueError, FsvmTrendError) as exc:
            raise UsageError(f"bad value for {opt.name}: {raw[opt.name]!r} ({exc})") from None
    return RunConfig(raw, values)


# -- artifact context ---------------------------------------------------------------

class Workspace:
    """Reads artifacts from staging-then-output, writes only to staging."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self._created_out = not self.out.exists()
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            self.staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out))
        except OSError as exc:
            raise UsageError(f"cannot create output directory {self.out}: {exc.strerror}") from None
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        return self.staging / name

    def exists(self, name: str) -> bool:
        return (self.staging / name).exists() or (self.out / name).exists()

    def read(self, name: str) -> str:
        for base in (self.staging, self.out):
            p = base / name
            if p.exists():
                return p.read_text(encoding="utf-8")
        raise UsageError(f"missing artifact {self.out / name}; run the stage that produces it first")

    def read_csv(self, name: str) -> str:
        """Artifact text with the leading ``#`` stamp lines removed."""
        lines = self.read(name).splitlines(keepends=True)
        k = 0
        while k < len(lines) and lines[k].startswith("#"):
            k += 1
        return "".join(lines[k:])

    def read_json(self, name: str) -> dict:
        try:
            return json.loads(self.read(name))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{self.out / name}: invalid JSON ({exc})") from None

    def write(self, name: str, text: str) -> None:
        self.path(name).write_text(text, encoding="utf-8")
        if name not in self.written:
            self.written.append(name)

    def stamp(self) -> str:
        m = self.cfg.meta
        return f"# fsvm-trend config_hash={m['config_hash']} seed={m['seed']}\n"

    def write_csv(self, name: str, text: str) -> None:
        self.write(name, self.stamp() + text)

    def write_json(self, name: str, obj: dict) -> None:
        self.write(name, dumps({"meta": self.cfg.meta, **obj}))

    def commit(self) -> None:
        for name in self.written:
            os.replace(self.staging / name, self.out / name)
        shutil.rmtree(self.staging, ignore_errors=True)

    def abort(self) -> None:
        shutil.rmtree(self.staging, ignore_errors=True)
        if self._created_out:
            try:
                self.out.rmdir()
            except OSError:
                pass


# -- stages ---------------------------------------------------------------------------

def _families(cfg: RunConfig) -> tuple[str, ...]:
    return FAMILIES if cfg.model == "both" else (cfg.model,)


def _load_series(ws: Workspace):
    return parse_ohlcv_csv(ws.read_csv("series.csv"), ws.cfg.date_format, ws.cfg.symbol)


def _load_data(ws: Workspace) -> tuple[Dataset, SplitPlan]:
    data = Dataset.from_csv(ws.read_csv("dataset.csv"))
    plan = SplitPlan.from_dict(ws.read_json("split.json")["plan"])
    return data, plan


def stage_ingest(ws: Workspace) -> None:
    cfg = ws.cfg
    if not cfg.input:
        raise UsageError("no input file given (set 'input' in the config or pass --input)")
    path = Path(cfg.input)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise UsageError(f"input file not found: {path}") from None
    except OSError as exc:
        raise UsageError(f"cannot read input file {path}: {exc.strerror}") from None
    try:
        series = parse_ohlcv_csv(raw, cfg.date_format, cfg.symbol)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
    report = validate_series(series)
    ws.write("validation.jsonl",
             json.dumps({"meta": cfg.meta, "summary": report.summary()}, sort_keys=True) + "\n"
             + report.to_jsonl(series.dates))
    ws.write_csv("series.csv", serialize_ohlcv_csv(series, cfg.date_format))
    log.info("ingest: %d rows, %d flagged", report.total_rows, len(report.flagged))


def stage_featurize(ws: Workspace) -> None:
    series = _load_series(ws)
    fm = compute_feature_matrix(series, ws.cfg.indicators)
    ws.write_csv("features.csv", fm.to_csv())
    log.info("featurize: %d rows x %d indicators (warmup %d)", len(fm), len(fm.columns), fm.warmup)


def stage_split(ws: Workspace) -> None:
    cfg = ws.cfg
    series = _load_series(ws)
    fm = FeatureMatrix.from_csv(ws.read_csv("features.csv"))
    data = build_dataset(series, fm, UP if cfg.tie_label == "up" else DOWN)
    plan = protocol_split(data, cfg.param_fraction, cfg.param_train_fraction, cfg.train_fraction,
                          seed=cfg.seed, disjoint=cfg.disjoint,
                          chronological=cfg.split_mode == "chronological")
    ws.write_csv("dataset.csv", data.to_csv(plan))
    ws.write_json("split.json", {"plan": plan.to_dict()})
    log.info("split: %d examples, parameter set %d (%d/%d), comparison %d/%d", len(data),
             len(plan.parameter_set), len(plan.param_train), len(plan.param_holdout),
             len(plan.train_set), len(plan.holdout_set))


def _grid_for(cfg: RunConfig, family: str) -> list[TrainConfig]:
    return default_grid(family, C=cfg.grid_C, gamma=cfg.grid_gamma, floor=cfg.grid_floor,
                        tolerance=cfg.tolerance, max_passes=cfg.max_passes, seed=cfg.seed)


def stage_grid(ws: Workspace) -> None:
    from .plotting import plot_grid_top

    cfg = ws.cfg
    data, plan = _load_data(ws)
    jobs = cfg.jobs if cfg.jobs > 0 else default_jobs()
    results: list[GridResult] = []
    best = {}
    for fam in _families(cfg):
        res = run_parameter_stage(data, plan, _grid_for(cfg, fam), jobs=jobs,
                                  norm_method=cfg.norm, family=fam)
        results.append(res)
        best[fam] = res.best_config.to_dict()
        ws.write_csv(f"grid_{fam}.csv", res.to_csv())
        ws.write_json(f"grid_{fam}.json", res.to_dict())
        top = res.rows[res.best]
        log.info("grid %s: %d configs, best %s (train %.3f, holdout %.3f)", fam, len(res.rows),
                 res.best_config.label(), top.train_accuracy, top.holdout_accuracy)
    ws.write_json("best_configs.json", {"configs": best})
    plot_grid_top(results, ws.path("grid_top.png"))
    ws.written.append("grid_top.png")


def _train_config(ws: Workspace, family: str) -> TrainConfig:
    cfg = ws.cfg
    use_grid = cfg.params == "grid" or (cfg.params == "auto" and ws.exists("best_configs.json"))
    if use_grid:
        configs = ws.read_json("best_configs.json")["configs"]
        if family not in configs:
            raise UsageError(f"best_configs.json has no entry for {family}; rerun grid")
        return TrainConfig.from_dict(configs[family])
    kw = dict(tolerance=cfg.tolerance, max_passes=cfg.max_passes, seed=cfg.seed)
    if family == "fsvm":
        return PRESETS["fsvm"](cfg.C, cfg.floor, **kw)
    return PRESETS["nafsvm"](cfg.C, cfg.gamma, cfg.floor, **kw)


def stage_train(ws: Workspace) -> None:
    data, plan = _load_data(ws)
    for fam in _families(ws.cfg):
        config = _train_config(ws, fam)
        model = fit_on_rows(data, plan.train_set, config, ws.cfg.norm)
        d = model.diagnostics
        ws.write_json(f"model_{fam}.json",
                      {**model.to_dict(), "family": fam, "train_config": config.to_dict()})
        log.info("train %s: %s, %d support vectors, %d iterations, kkt %.2e", fam,
                 config.label(), len(model.alphas), d.iterations, d.max_kkt_violation)


def _load_model(ws: Workspace, family: str) -> tuple[FsvmModel, TrainConfig]:
    doc = ws.read_json(f"model_{family}.json")
    return FsvmModel.from_dict(doc), TrainConfig.from_dict(doc["train_config"])


def _write_eval(ws: Workspace, family: str, config: TrainConfig, report: EvalReport,
                train: EvalReport) -> None:
    ws.write_json(f"eval_{family}.json", {"family": family, "config": config.to_dict(),
                                          "holdout": report.to_dict(), "train": train.to_dict()})
    ws.write_csv(f"eval_{family}.csv", report_csv(report))
    ws.write(f"accuracy_by_year_{family}.dat",
             ws.stamp() + per_year_gnuplot(report, f"{family} holdout: {config.label()}"))


def stage_evaluate(ws: Workspace) -> None:
    data, plan = _load_data(ws)
    for fam in _families(ws.cfg):
        model, config = _load_model(ws, fam)
        report = evaluate_model(model, data, plan.holdout_set, "holdout")
        train = evaluate_model(model, data, plan.train_set, "train")
        _write_eval(ws, fam, config, report, train)
        log.info("evaluate %s: holdout accuracy %.4f (n=%d)", fam, report.accuracy, report.n)


def stage_compare(ws: Workspace) -> None:
    from .plotting import plot_accuracy_by_year

    data, plan = _load_data(ws)
    (ma, ca), (mb, cb) = (_load_model(ws, fam) for fam in FAMILIES)
    cmp = compare_models(data, plan, ma, mb, ca, cb, *FAMILIES)
    ws.write_json("comparison.json", cmp.to_dict())
    ws.write_csv("comparison_by_year.csv", cmp.per_year_csv())
    plot_accuracy_by_year([cmp.report_a, cmp.report_b], FAMILIES, ws.path("accuracy_by_year.png"))
    ws.written.append("accuracy_by_year.png")
    log.info("compare: fsvm %.4f, nafsvm %.4f, difference %+.4f",
             cmp.report_a.accuracy, cmp.report_b.accuracy, cmp.difference)


STAGES: dict[str, tuple[Callable[[Workspace], None], ...]] = {
    "ingest": (stage_ingest,),
    "featurize": (stage_featurize,),
    "split": (stage_split,),
    "grid": (stage_grid,),
    "train": (stage_train,),
    "evaluate": (stage_evaluate,),
    "compare": (stage_compare,),
}
STAGES["full"] = tuple(s for name in ("ingest", "featurize", "split", "grid", "train",
                                       "evaluate", "compare") for s in STAGES[name])

HELP = {
    "ingest": "parse and validate the input CSV",
    "featurize": "compute the indicator matrix",
    "split": "label directions and plan the parameter/comparison splits",
    "grid": "parameter-stage grid search for each model family",
    "train": "train the chosen configs on the comparison train set",
    "evaluate": "score trained models on the comparison holdout",
    "compare": "paired holdout comparison of fsvm and nafsvm",
    "full": "run every stage in order",
}


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", default=argparse.SUPPRESS, help="key = value config file")
    g.add_argument("--seed", default=argparse.SUPPRESS, help=OPTION_BY_NAME["seed"].help)
    g.add_argument("--out", default=argparse.SUPPRESS, help=OPTION_BY_NAME["out"].help)
    g.add_argument("--jobs", default=argparse.SUPPRESS, help=OPTION_BY_NAME["jobs"].help)
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    keys = common.add_argument_group("config overrides")
    for opt in OPTIONS:
        if opt.name in ("seed", "out", "jobs"):
            continue
        flags = [f"--{opt.name}"]
        if "_" in opt.name:
            flags.append(f"--{opt.name.replace('_', '-')}")
        keys.add_argument(*flags, dest=opt.name, default=argparse.SUPPRESS,
                          metavar="VALUE",
                          help=f"{opt.help} (default: {opt.default!r})".replace("%", "%%"))

    parser = argparse.ArgumentParser(prog="fsvm-trend", parents=[common],
                                     description="Fuzzy SVM stock-direction experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    verbose = args.pop("verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    ws = None
    try:
        config_path = args.pop("config", None)
        file_values = read_config_file(config_path) if config_path else {}
        base = Path(config_path).resolve().parent if config_path else None
        cfg = resolve_config(file_values, args, base)
        ws = Workspace(cfg)
        for stage in STAGES[command]:
            stage(ws)
        ws.write("config.resolved", cfg.render())
        ws.commit()
    except (UsageError, ParseError, OSError) as exc:
        if ws is not None:
            ws.abort()
        print(f"fsvm-trend: error: {exc}", file=sys.stderr)
        return 2
    except FsvmTrendError as exc:
        if ws is not None:
            ws.abort()
        print(f"fsvm-trend: error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        if ws is not None:
            ws.abort()
        raise
    print(f"{command}: wrote {len(ws.written)} files to {ws.out} "
          f"(config_hash={cfg.config_hash}, seed={cfg.seed})")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
