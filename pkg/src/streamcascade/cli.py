"""``cascade`` command-line harness.

Configuration is an INI file.  Sections only group keys for readability;
every key name is unique across sections, so ``--set key=value`` needs no
section prefix.  Values are resolved as: built-in default, then the config
file, then ``--set`` overrides, then ``--seed``.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from streamcascade import engine
from streamcascade.calibration import fit_calibration, fit_platt
from streamcascade.core import expected_calibration_error
from streamcascade.engine import Algorithm, RunConfig, SyntheticKind, SyntheticSpec
from streamcascade.supg import ResidualStrategy

log = logging.getLogger("streamcascade.cli")

COMMANDS = ("run", "sweep", "reliability", "parallel", "calibrate-demo", "generate")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""


# ---------------------------------------------------------------------------
# schema


def _float_list(text: str) -> tuple[float, ...]:
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(t) for t in items)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _float_list(text))


def _str_list(text: str) -> tuple[str, ...]:
    items = tuple(t.strip() for t in str(text).split(",") if t.strip())
    if not items:
        raise ValueError("empty list")
    return items


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        text = str(text).strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _in(lo, hi, lo_open=False, hi_open=False):
    def check(v) -> Optional[str]:
        vals = v if isinstance(v, tuple) else (v,)
        for x in vals:
            if (x <= lo if lo_open else x < lo) or (hi is not None and (x >= hi if hi_open else x > hi)):
                left = "(" if lo_open else "["
                right = ")" if hi_open else "]"
                return f"value {x} outside {left}{lo}, {'inf' if hi is None else hi}{right}"
        return None
    return check


@dataclass(frozen=True)
class Option:
    section: str
    default: object
    parse: Callable
    check: Optional[Callable] = None
    help: str = ""


_ALGOS = tuple(a.value for a in Algorithm)

SCHEMA: dict[str, Option] = {
    # run
    "algorithm": Option("run", "gamcal", _choice(*_ALGOS), None, "cascade algorithm"),
    "batch_size": Option("run", 512, int, _in(1, None), "records per batch"),
    "sub_batch": Option("run", 64, int, _in(1, None), "oracle labels between threshold refreshes"),
    "workers": Option("run", 1, int, _in(1, None), "parallel workers W"),
    "seed": Option("run", 0, int, _in(0, None), "base run seed"),
    "seeds": Option("run", 1, int, _in(1, None), "number of consecutive seeds per grid point"),
    "rho": Option("run", 0.1, float, _in(0, 1, lo_open=True), "per-batch oracle budget fraction"),
    # data
    "dataset": Option("data", "", str, None, "CSV/JSONL dataset path; empty means synthetic"),
    "kind": Option("data", "bimodal", _choice(*(k.value for k in SyntheticKind)), None, "synthetic family"),
    "n": Option("data", 10000, int, _in(1, None), "synthetic record count"),
    "positive_rate": Option("data", 0.4, float, _in(0, 1, True, True), "synthetic positive rate"),
    "overlap": Option("data", 0.4, float, _in(0, 1), "bimodal class overlap"),
    "miscalibration_strength": Option("data", 1.5, float, _in(0, None), "S-shape distortion strength"),
    "data_seed": Option("data", 0, int, _in(0, None), "seed of the synthetic generator"),
    "data_format": Option("data", "csv", _choice("csv", "jsonl"), None, "format written by generate"),
    # supg
    "t_p": Option("supg", 0.8, float, _in(0, 1, lo_open=True), "precision target"),
    "t_r": Option("supg", 0.8, float, _in(0, 1, lo_open=True), "recall target"),
    "delta": Option("supg", 0.2, float, _in(0, 1, True, True), "failure probability"),
    "eta": Option("supg", 0.5, float, _in(0, 1), "importance-weight mixing"),
    "clip_delta": Option("supg", 0.05, float, _in(0, 1), "corrected recall target clip width"),
    "residual": Option("supg", "delegate_all", _choice(*(r.value for r in ResidualStrategy)), None,
                       "handling of unsampled uncertain records"),
    # gamcal
    "alpha": Option("gamcal", 0.5, float, _in(0, 1), "quality weight of the objective"),
    "beta": Option("gamcal", 1.0, float, _in(0, None, lo_open=True), "F-beta weight"),
    "lam": Option("gamcal", 0.1, float, _in(0, None, lo_open=True), "ridge strength of the calibration fit"),
    "n_min": Option("gamcal", 5, int, _in(1, None), "labels per class before the first fit"),
    "calibrator": Option("gamcal", "laplace", _choice("laplace", "bootstrap"), None, "posterior spread"),
    # sweep
    "algorithms": Option("sweep", "supg_it,gamcal", _str_list, None, "algorithms compared by sweep/parallel"),
    "sweep_param": Option("sweep", "native", str, None,
                          "swept parameter; 'native' means alpha for gamcal and target for SUPG"),
    "alpha_grid": Option("sweep", "0.1,0.2,0.35,0.5,0.65,0.8", _float_list, _in(0, 1), "alpha values"),
    "target_grid": Option("sweep", "0.6,0.7,0.8,0.9,0.95", _float_list, _in(0, 1, lo_open=True),
                          "symmetric target values"),
    "sweep_values": Option("sweep", "", str, None, "values for a non-native sweep_param"),
    "budget": Option("sweep", 0.2, float, _in(0, 1), "delegation budget of the fixed-budget table"),
    "f_target": Option("sweep", 0.9, float, _in(0, 1), "F-beta target of the min-delegation table"),
    # reliability
    "t_p_grid": Option("reliability", "0.5,0.6,0.7,0.8,0.9", _float_list, _in(0, 1, lo_open=True),
                       "precision targets"),
    "t_r_grid": Option("reliability", "0.5,0.6,0.7,0.8,0.9", _float_list, _in(0, 1, lo_open=True),
                       "recall targets"),
    # parallel
    "workers_grid": Option("parallel", "1,4,8", _int_list, _in(1, None), "worker counts"),
    # calibrate
    "calib_n": Option("calibrate", 3000, int, _in(2, None), "training records of calibrate-demo"),
    "calib_holdout": Option("calibrate", 10000, int, _in(1, None), "held-out records for ECE"),
    "calib_lam": Option("calibrate", 0.6, float, _in(0, None, lo_open=True), "ridge strength of calibrate-demo"),
    "calib_points": Option("calibrate", 101, int, _in(2, None), "curve grid size"),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def run_config(self) -> RunConfig:
        v = self.values
        return RunConfig(
            algorithm=v["algorithm"], batch_size=v["batch_size"], sub_batch=v["sub_batch"],
            workers=v["workers"], seed=v["seed"], t_p=v["t_p"], t_r=v["t_r"], delta=v["delta"],
            rho=v["rho"], eta=v["eta"], clip_delta=v["clip_delta"], residual=v["residual"],
            alpha=v["alpha"], beta=v["beta"], lam=v["lam"], n_min=v["n_min"], calibrator=v["calibrator"],
        )

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.values["seed"], self.values["seed"] + self.values["seeds"]))

    @property
    def synthetic_spec(self) -> SyntheticSpec:
        v = self.values
        return SyntheticSpec(
            kind=v["kind"], n=v["n"], positive_rate=v["positive_rate"], overlap=v["overlap"],
            miscalibration_strength=v["miscalibration_strength"], seed=v["data_seed"],
        )


def _set(values: dict, key: str, raw, origin: str) -> None:
    key = key.strip()
    if key not in SCHEMA:
        raise ConfigError(f"{key}: unknown key ({origin})")
    opt = SCHEMA[key]
    try:
        value = opt.parse(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc}) ({origin})") from None
    if opt.check is not None:
        problem = opt.check(value)
        if problem:
            raise ConfigError(f"{key}: {problem} ({origin})")
    values[key] = value


def parse_config(path=None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Defaults, then the INI file at ``path`` (if any), then ``key=value`` overrides."""
    values = {}
    for key, opt in SCHEMA.items():
        _set(values, key, opt.default, "default")
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"config: {exc}") from None
        seen: dict[str, str] = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                if key in seen:
                    raise ConfigError(f"{key}: set in both [{seen[key]}] and [{section}]")
                seen[key] = section
                _set(values, key, raw, f"{path} [{section}]")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"{item}: override must look like key=value")
        key, raw = item.split("=", 1)
        _set(values, key, raw, "--set")
    cfg = ExperimentConfig(values)
    try:
        cfg.run_config
        cfg.synthetic_spec
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def defaults_text() -> str:
    """INI text with every key at its default, grouped by section."""
    lines: list[str] = []
    section = None
    for key, opt in SCHEMA.items():
        if opt.section != section:
            section = opt.section
            lines.append(("\n" if lines else "") + f"[{section}]")
        default = opt.default
        if isinstance(default, tuple):
            default = ",".join(str(x) for x in default)
        lines.append(f"# {opt.help}")
        lines.append(f"{key} = {default}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def load_or_generate(cfg: ExperimentConfig) -> engine.Dataset:
    if cfg["dataset"]:
        return engine.load_dataset(cfg["dataset"], seed=cfg["seed"])
    return engine.generate(cfg.synthetic_spec)


def native_grid(cfg: ExperimentConfig, algorithm: str) -> tuple[Optional[str], tuple]:
    param = cfg["sweep_param"]
    if param == "native":
        if algorithm == Algorithm.GAMCAL.value:
            return "alpha", cfg["alpha_grid"]
        if algorithm in (Algorithm.PROXY_ONLY.value, Algorithm.ORACLE_ONLY.value):
            return None, ()
        return "target", cfg["target_grid"]
    if param != "target" and param not in RunConfig.__dataclass_fields__:
        raise ConfigError(f"sweep_param: unknown run parameter {param!r}")
    if not cfg["sweep_values"]:
        raise ConfigError("sweep_values: required when sweep_param is not 'native'")
    try:
        values = _float_list(cfg["sweep_values"])
    except ValueError as exc:
        raise ConfigError(f"sweep_values: {exc}") from None
    if param in ("batch_size", "sub_batch", "workers", "n_min"):
        values = tuple(int(v) for v in values)
    return param, values


def format_cell(f_beta: float, delegation: float) -> str:
    """Summary-table cell: ``F1 (delegation%)``."""
    return f"{f_beta:.3f} ({100 * delegation:.1f}%)"


def summary_table(dataset_name: str, rows: Sequence[engine.SweepRow]) -> str:
    best = engine.best_operating_points(rows)
    algos = [a for a in _ALGOS if a in best]
    header = ["dataset", *algos]
    body = [dataset_name, *(format_cell(*best[a]) for a in algos)]
    width = [max(len(h), len(b)) for h, b in zip(header, body)]
    fmt = "  ".join(f"{{:<{w}}}" for w in width)
    return fmt.format(*header) + "\n" + fmt.format(*body)


def _seed_runs(template: RunConfig, seeds, dataset, prefix, failures) -> list[engine.SweepRow]:
    """One run per seed with no swept parameter."""
    rows = []
    for k, seed in enumerate(seeds):
        cfg = replace(template, seed=seed)
        run_id = f"{prefix}-{k:05d}"
        try:
            report = engine.run_parallel(cfg, dataset)
        except Exception as exc:
            log.error("run %s failed: %s", run_id, exc)
            failures.append(run_id)
            continue
        rows.append(engine.SweepRow(run_id, cfg.algorithm.value, "none", 0.0, seed, cfg.workers, report))
    return rows


def _run_rows(cfg: ExperimentConfig, dataset, plan, failures) -> list[engine.SweepRow]:
    rows: list[engine.SweepRow] = []
    for prefix, template, grid in plan:
        if grid is None:
            rows += _seed_runs(template, cfg.seed_list, dataset, prefix, failures)
        else:
            rows += engine.sweep(template, grid, cfg.seed_list, dataset, prefix, failures)
    return rows


def cmd_run(cfg, dataset, out: Path, failures) -> list:
    rc = cfg.run_config
    plan = [(rc.algorithm.value, rc, None)]
    return _run_rows(cfg, dataset, plan, failures)


def cmd_sweep(cfg, dataset, out: Path, failures) -> list:
    plan = []
    for alg in cfg["algorithms"]:
        if alg not in _ALGOS:
            raise ConfigError(f"algorithms: unknown algorithm {alg!r}")
        template = replace(cfg.run_config, algorithm=alg)
        name, values = native_grid(cfg, alg)
        plan.append((alg, template, None if name is None else {name: values}))
    rows = _run_rows(cfg, dataset, plan, failures)
    _write_tables(rows, cfg, out)
    return rows


def cmd_parallel(cfg, dataset, out: Path, failures) -> list:
    plan = []
    for alg in cfg["algorithms"]:
        if alg not in _ALGOS:
            raise ConfigError(f"algorithms: unknown algorithm {alg!r}")
        template = replace(cfg.run_config, algorithm=alg)
        plan.append((f"{alg}-W", template, {"workers": cfg["workers_grid"]}))
    return _run_rows(cfg, dataset, plan, failures)


def _write_tables(rows, cfg, out: Path) -> None:
    budget = engine.fixed_budget_fbeta(rows, cfg["budget"])
    mind = engine.min_delegation_for(rows, cfg["f_target"])
    with (out / "tables.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["table", "algorithm", "value"])
        for alg, (f, d) in sorted(engine.best_operating_points(rows).items()):
            w.writerow(["best_f_beta", alg, repr(float(f))])
            w.writerow(["best_f_beta_delegation", alg, repr(float(d))])
        for alg, f in sorted(budget.items()):
            w.writerow([f"f_beta_at_delegation<={cfg['budget']}", alg, repr(float(f))])
        for alg, d in sorted(mind.items()):
            w.writerow([f"min_delegation_for_f_beta>={cfg['f_target']}", alg, repr(float(d))])


def cmd_reliability(cfg, dataset, out: Path) -> None:
    cells = engine.reliability_grid(cfg.run_config, dataset, cfg["t_p_grid"], cfg["t_r_grid"], cfg.seed_list)
    with (out / "reliability.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_p", "t_r", "runs", "satisfied", "satisfaction", "precision_failures",
                    "recall_failures", "both_failures", "mean_delegation"])
        for c in cells:
            w.writerow([c.t_p, c.t_r, c.runs, c.satisfied, repr(c.satisfaction), c.precision_failures,
                        c.recall_failures, c.both_failures, repr(c.mean_delegation)])
    worst = min(cells, key=lambda c: c.satisfaction)
    print(f"{len(cells)} cells x {len(cfg.seed_list)} seeds; lowest satisfaction "
          f"{worst.satisfaction:.2f} at t_p={worst.t_p}, t_r={worst.t_r}")


def calibration_curve(cfg: ExperimentConfig):
    """Training data, fitted spline and Platt models, and held-out ECEs."""
    spec = SyntheticSpec(
        kind=SyntheticKind.S_SHAPE_MISCALIBRATED, n=cfg["calib_n"] + cfg["calib_holdout"],
        miscalibration_strength=cfg["miscalibration_strength"], seed=cfg["data_seed"],
    )
    data = engine.generate(spec)
    train, test = data[: cfg["calib_n"]], data[cfg["calib_n"]:]
    model = fit_calibration(train.scores, train.labels, cfg["calib_lam"])
    platt = fit_platt(train.scores, train.labels)
    ece = {
        "raw": expected_calibration_error(test.scores, test.labels),
        "platt": expected_calibration_error(platt.predict_proba(test.scores), test.labels),
        "calibrated": expected_calibration_error(model.predict_proba(test.scores), test.labels),
    }
    return model, platt, ece


def cmd_calibrate_demo(cfg, out: Path) -> None:
    model, platt, ece = calibration_curve(cfg)
    k = cfg["calib_points"]
    s = np.linspace(0.5 / k, 1 - 0.5 / k, k)
    f_hat, se = model.predict_mean_se(s)
    with (out / "calibration.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "f_hat", "se", "platt", "raw"])
        for row in zip(s, f_hat, se, platt.predict_proba(s), s):
            w.writerow([repr(float(x)) for x in row])
    with (out / "ece.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "ece"])
        for name, value in ece.items():
            w.writerow([name, repr(float(value))])
    print("held-out ECE: " + ", ".join(f"{k} {v:.4f}" for k, v in ece.items()))


def cmd_generate(cfg, out: Path) -> None:
    data = engine.generate(cfg.synthetic_spec)
    path = out / f"dataset.{cfg['data_format']}"
    engine.save_dataset(data, path)
    print(f"wrote {len(data)} records ({data.positive_rate:.1%} positive) to {path}")


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cascade", description="Streaming proxy/oracle cascade experiments.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="INI configuration file")
    p.add_argument("--out", type=Path, default=Path("cascade-out"), help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=int, help="base run seed (overrides the config)")
    p.add_argument("--print-defaults", action="store_true", help="print the default configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true", help="log each run")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        sys.stdout.write(defaults_text())
        return 0
    if args.command is None:
        print("cascade: a command is required", file=sys.stderr)
        return 2
    try:
        overrides = list(args.overrides) + ([f"seed={args.seed}"] if args.seed is not None else [])
        cfg = parse_config(args.config, overrides)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "calibrate-demo":
            cmd_calibrate_demo(cfg, args.out)
            return 0
        if args.command == "generate":
            cmd_generate(cfg, args.out)
            return 0
        dataset = load_or_generate(cfg)
        if args.command == "reliability":
            cmd_reliability(cfg, dataset, args.out)
            return 0
        failures: list[str] = []
        handler = {"run": cmd_run, "sweep": cmd_sweep, "parallel": cmd_parallel}[args.command]
        rows = handler(cfg, dataset, args.out, failures)
    except (ConfigError, engine.DatasetFormatError, OSError) as exc:
        print(f"cascade: {exc}", file=sys.stderr)
        return 2
    engine.write_report_csv(rows, args.out / "report.csv")
    engine.write_trajectory_csv(rows, args.out / "trajectory.csv")
    if rows:
        print(summary_table(dataset.name, rows))
    if failures:
        print(f"cascade: {len(failures)} run(s) failed: {', '.join(failures)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
