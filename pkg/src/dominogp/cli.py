"""Command-line surface: generate data, train, forecast, run studies.

Configuration is a flat INI file (``key = value`` under per-module section
headers); any value can be overridden on the command line with
``--set section.key=value``. All randomness flows from the single
``[run] seed`` key. Exit codes: 0 success, 1 usage, 2 I/O, 3 parse,
4 contract violation, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from .domino import DominoConfig, forecast, load_bank, load_domino, save_bank, save_domino, train_domino
from .errors import CsvFormatError, DegenerateWeights, NumericalFailure
from .evalx import DEFAULT_ABLATION_GRIDS, StudyConfig, run_ablation, run_cv_study, run_length_study
from .gp import OptimizerConfig
from .magma import EmConfig, build_sample_bank, fit_magma, save_magma
from .seeding import derive_seed
from .series import (
    SyntheticSpec,
    TimeGrid,
    TimeSeries,
    generate_synthetic,
    make_grid,
    read_dataset_csv,
    write_dataset_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_PARSE = 3
EXIT_CONTRACT = 4
EXIT_NUMERICAL = 5


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    """Configuration file could not be parsed or is malformed."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we reserve that for I/O
        raise UsageError(message)


def load_config(path: str | None, overrides: list[str]) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            cfg.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        section, name = key.strip().split(".", 1)
        if not cfg.has_section(section):
            cfg.add_section(section)
        cfg.set(section, name.strip(), value.strip())
    return cfg


def _get(cfg, section, key, default, cast):
    try:
        raw = cfg.get(section, key, fallback=None)
        return default if raw is None else cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def _parse_components(text: str) -> tuple[tuple[float, float, float], ...]:
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ValueError(f"component must be amp:period:phase, got {chunk!r}")
        out.append(tuple(float(p) for p in parts))
    return tuple(out)


def _parse_list(text: str, cast):
    return tuple(cast(v) for v in text.replace(";", ",").split(",") if v.strip())


def _seed(cfg) -> int:
    return _get(cfg, "run", "seed", 0, int)


def _synth_spec(cfg) -> SyntheticSpec:
    defaults = StudyConfig().synth
    return SyntheticSpec(
        trend_slope=_get(cfg, "synthetic", "slope", defaults.trend_slope, float),
        trend_intercept=_get(cfg, "synthetic", "intercept", defaults.trend_intercept, float),
        periodic_components=_get(
            cfg, "synthetic", "components",
            defaults.periodic_components, _parse_components,
        ),
        noise_std=_get(cfg, "synthetic", "noise_std", defaults.noise_std, float),
        amp_jitter=_get(cfg, "synthetic", "amp_jitter", defaults.amp_jitter, float),
        phase_jitter=_get(cfg, "synthetic", "phase_jitter", defaults.phase_jitter, float),
        seed=derive_seed(_seed(cfg), "synthetic"),
    )


def _grid(cfg) -> TimeGrid:
    return make_grid(
        _get(cfg, "synthetic", "start", 0.0, float),
        _get(cfg, "synthetic", "step", 1.0, float),
        _get(cfg, "synthetic", "n", 50, int),
    )


def _em_config(cfg) -> EmConfig:
    base = EmConfig()
    period = _get(cfg, "em", "period", None, float)
    return EmConfig(
        max_iters=_get(cfg, "em", "max_iters", base.max_iters, int),
        tol=_get(cfg, "em", "tol", base.tol, float),
        optimizer=OptimizerConfig(
            restarts=_get(cfg, "em", "restarts", base.optimizer.restarts, int),
            max_iter=_get(cfg, "em", "opt_max_iter", base.optimizer.max_iter, int),
        ),
        period=period,
    )


def _domino_config(cfg) -> DominoConfig:
    base = DominoConfig()
    return DominoConfig(
        max_epochs=_get(cfg, "domino", "max_epochs", base.max_epochs, int),
        delta_fraction=_get(cfg, "domino", "delta_fraction", base.delta_fraction, float),
        outlier_fraction=_get(cfg, "domino", "outlier_fraction", base.outlier_fraction, float),
        lam=_get(cfg, "domino", "lambda", base.lam, float),
        visit_normalizer=_get(cfg, "domino", "visit_normalizer", base.visit_normalizer, str),
        forecast_repeats=_get(cfg, "domino", "forecast_repeats", base.forecast_repeats, int),
    )


def _study_config(cfg) -> StudyConfig:
    base = StudyConfig()
    return StudyConfig(
        lengths=_get(cfg, "study", "lengths", base.lengths, lambda s: _parse_list(s, int)),
        runs=_get(cfg, "study", "runs", base.runs, int),
        series_count=_get(cfg, "study", "series_count", base.series_count, int),
        prefix_fraction=_get(cfg, "study", "prefix_fraction", base.prefix_fraction, float),
        base_seed=_seed(cfg),
        grid_start=_get(cfg, "synthetic", "start", base.grid_start, float),
        grid_step=_get(cfg, "synthetic", "step", base.grid_step, float),
        synth=replace(_synth_spec(cfg), seed=0),
        em=_em_config(cfg) if cfg.has_section("em") else base.em,
        domino=_domino_config(cfg),
    )


def _path(cfg, key, default=None) -> str:
    value = _get(cfg, "paths", key, default, str)
    if not value:
        raise ValueError(f"[paths] {key} is required for this command")
    return value


def _outdir(cfg) -> str:
    out = _get(cfg, "run", "outdir", "out", str)
    os.makedirs(out, exist_ok=True)
    return out


def cmd_generate(cfg) -> int:
    spec = _synth_spec(cfg)
    grid = _grid(cfg)
    count = _get(cfg, "synthetic", "series_count", 10, int)
    dataset = generate_synthetic(spec, grid, count)
    path = _path(cfg, "dataset", "dataset.csv")
    n_rows = write_dataset_csv(dataset, path)
    print(f"wrote {n_rows} rows to {path}")
    return EXIT_OK


def cmd_train(cfg) -> int:
    dataset = read_dataset_csv(_path(cfg, "dataset", "dataset.csv"))
    seed = _seed(cfg)
    model = fit_magma(dataset, _em_config(cfg))
    bank = build_sample_bank(model, dataset, derive_seed(seed, "bank"))
    dmodel = train_domino(bank, _domino_config(cfg), derive_seed(seed, "walk"))
    out = _outdir(cfg)
    save_magma(model, os.path.join(out, "magma.json"))
    save_bank(bank, os.path.join(out, "bank.json"))
    save_domino(dmodel, os.path.join(out, "domino.json"))
    print(f"stop_reason={dmodel.stop_reason} epochs={len(dmodel.history)}")
    return EXIT_OK


def _read_observed_csv(path) -> tuple[np.ndarray, np.ndarray]:
    ts, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "y"]:
            raise CsvFormatError("expected header 't,y'", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise CsvFormatError(f"expected 2 fields, got {len(row)}", line=line_no)
            try:
                ts.append(float(row[0]))
                ys.append(float(row[1]))
            except ValueError as exc:
                raise CsvFormatError(str(exc), line=line_no) from exc
    if not ts:
        raise CsvFormatError("no data rows", line=2)
    return np.array(ts), np.array(ys)


def cmd_forecast(cfg) -> int:
    out = _outdir(cfg)
    bank = load_bank(_path(cfg, "bank", os.path.join(out, "bank.json")))
    dmodel = load_domino(_path(cfg, "domino_model", os.path.join(out, "domino.json")), bank)
    t_obs, y_obs = _read_observed_csv(_path(cfg, "observed"))
    m = len(t_obs)
    if m >= bank.grid.n:
        raise ValueError(f"observed has {m} rows but the model grid has {bank.grid.n} points")
    observed = TimeSeries(0, TimeGrid(float(t_obs[0]), bank.grid.step, m), y_obs)
    pred = forecast(dmodel, observed, derive_seed(_seed(cfg), "forecast"))
    path = _path(cfg, "forecast_out", os.path.join(out, "forecast.csv"))
    grid_t = bank.grid.points()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "y_pred"])
        for k in range(bank.grid.n):
            writer.writerow([repr(float(grid_t[k])), repr(float(pred[k]))])
    print(f"wrote {bank.grid.n} rows to {path} ({m} echoed)")
    return EXIT_OK


def _write_study_outputs(result, out: str, stem: str) -> None:
    with open(os.path.join(out, f"{stem}_runs.csv"), "w", encoding="utf-8") as fh:
        fh.write(result.to_csv())
    with open(os.path.join(out, f"{stem}_summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(result.summary_to_csv())
    table = result.to_markdown()
    with open(os.path.join(out, f"{stem}.md"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")


def cmd_study(cfg) -> int:
    kind = _get(cfg, "study", "kind", "length", str)
    config = _study_config(cfg)
    if kind == "length":
        result = run_length_study(config)
    elif kind == "cv":
        result = run_cv_study(config)
    else:
        raise ValueError(f"unknown study kind {kind!r}; expected 'length' or 'cv'")
    _write_study_outputs(result, _outdir(cfg), f"study_{kind}")
    return EXIT_OK


def cmd_ablate(cfg) -> int:
    hp = _get(cfg, "ablate", "hp", "lambda", str)
    if hp not in DEFAULT_ABLATION_GRIDS:
        raise ValueError(f"unknown hyperparameter {hp!r}; choose from {sorted(DEFAULT_ABLATION_GRIDS)}")
    values = _get(
        cfg, "ablate", "values", DEFAULT_ABLATION_GRIDS[hp],
        lambda s: _parse_list(s, float if hp != "max_epochs" else int),
    )
    result = run_ablation(hp, values, _study_config(cfg))
    _write_study_outputs(result, _outdir(cfg), f"ablate_{hp}")
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "study": cmd_study,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dominogp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[],
            metavar="SECTION.KEY=VALUE", help="override a config value",
        )
        p.add_argument("--seed", type=int, default=None, help="shortcut for --set run.seed=...")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (currently informational; execution is single-process)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"run.seed={args.seed}")
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, CsvFormatError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, DegenerateWeights) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
