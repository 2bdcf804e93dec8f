"""Command-line interface: fit, test, simulate, kernels.

Options resolve in the order command-line flag, config-file value,
built-in default.  The config file is YAML; the ``libraries`` table maps
names to kernel lists so a library can be picked by name with
``--library``.  Results go to ``--out`` (or stdout) as CSV or JSON lines;
progress goes to stderr.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import simulation
from .errors import DataError, NumericalError, UsageError
from .estimator import fit_null
from .hypothesis import TEST_KINDS, additive_null_grams, run_test
from .kernels import FAMILIES, FAMILY_PARAMS, MATERN_ORDERS, KernelSpec, spec_from_dict
from .tuning import CRITERIA, check_lambda_grid, default_lambda_grid

DEFAULTS = {
    "criterion": "loocv",
    "strategy": "stack",
    "test": "boot",
    "B": 100,
    "beta": 1.0,
    "seed": 0,
    "reps": 200,
    "response": "y",
    "library": "rbf",
    "format": "csv",
    "noise_sd": simulation.DEFAULT_NOISE_SD,
    "n": 100,
    "p1": 2,
    "p2": 2,
}


@dataclass
class RunConfig:
    """Resolved settings for the fit and test commands."""

    command: str
    data_path: str
    response: str
    group1: list[str]
    group2: list[str]
    library: list[KernelSpec]
    library_name: str
    criterion: str
    strategy: str
    test_kind: str
    b: int
    seed: int
    beta: float
    lambda_grid: np.ndarray
    output_path: str | None
    fmt: str
    boot_correction: bool
    interaction_spec: KernelSpec | None


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems must exit 1, not argparse's 2
        raise UsageError(message)


def _split_names(value) -> list[str]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [str(v) for v in value]


def parse_lambda_grid(value) -> np.ndarray:
    """Grid spec: ``exp:LO:HI:STEP`` (log-spaced), a comma list, or a YAML list."""
    if value is None:
        return default_lambda_grid()
    if isinstance(value, str):
        if value.startswith("exp:"):
            try:
                lo, hi, step = (float(v) for v in value[4:].split(":"))
            except ValueError:
                raise UsageError(f"bad lambda grid spec {value!r}; expected exp:LO:HI:STEP") from None
            return check_lambda_grid(np.exp(np.arange(lo, hi + 1e-9, step)))
        parts = [float(v) for v in value.split(",") if v.strip()]
        return check_lambda_grid(parts)
    return check_lambda_grid([float(v) for v in value])


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"malformed config file {path}: {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must contain a mapping at the top level")
    return cfg


def _resolve(args, cfg: dict, key: str, attr: str | None = None):
    """Flag value if given, else config value, else built-in default."""
    value = getattr(args, attr or key, None)
    if value is None:
        value = cfg.get(key)
    if value is None:
        value = DEFAULTS.get(key)
    return value


def _resolve_library(name: str | None, cfg: dict) -> tuple[str, list[KernelSpec]]:
    name = name if name is not None else cfg.get("library", DEFAULTS["library"])
    custom = cfg.get("libraries", {}) or {}
    if not isinstance(custom, dict):
        raise UsageError("config key 'libraries' must map names to kernel lists")
    if name in custom:
        entries = custom[name]
        if not isinstance(entries, list) or not entries:
            raise UsageError(f"library {name!r} in the config must be a nonempty list of kernels")
        try:
            return name, [spec_from_dict(e) for e in entries]
        except ValueError as exc:
            raise UsageError(f"library {name!r}: {exc}") from exc
    if name in simulation.LIBRARIES:
        return name, list(simulation.LIBRARIES[name])
    known = sorted(set(simulation.LIBRARIES) | set(custom))
    raise UsageError(f"unknown kernel library {name!r}; available: {', '.join(known)}")


def parse_config(args, cfg: dict) -> RunConfig:
    """Merge flags, config, and defaults into a validated RunConfig."""
    data_path = getattr(args, "data", None) or cfg.get("data")
    if data_path is None:
        raise UsageError(f"the {args.command} command requires --data (or 'data' in the config)")
    group1 = getattr(args, "group1", None) or cfg.get("group1")
    group2 = getattr(args, "group2", None) or cfg.get("group2")
    if not group1 or not group2:
        raise UsageError("both --group1 and --group2 column lists are required")
    group1 = _split_names(group1)
    group2 = _split_names(group2)
    overlap = sorted(set(group1) & set(group2))
    if overlap:
        raise UsageError(f"feature groups overlap on column(s): {', '.join(overlap)}")

    criterion = str(_resolve(args, cfg, "criterion")).lower()
    if criterion not in CRITERIA:
        raise UsageError(f"unknown criterion {criterion!r}; choose from {', '.join(CRITERIA)}")
    test_kind = str(_resolve(args, cfg, "test", attr="test_kind")).lower()
    if test_kind not in TEST_KINDS:
        raise UsageError(f"unknown test kind {test_kind!r}; choose from {', '.join(TEST_KINDS)}")

    library_name, library = _resolve_library(getattr(args, "library", None), cfg)

    interaction_spec = None
    if cfg.get("interaction_kernel") is not None:
        try:
            interaction_spec = spec_from_dict(cfg["interaction_kernel"])
        except ValueError as exc:
            raise UsageError(f"interaction_kernel: {exc}") from exc

    boot_correction = getattr(args, "boot_correction", None)
    if boot_correction is None:
        boot_correction = bool(cfg.get("boot_correction", False))

    return RunConfig(
        command=args.command,
        data_path=str(data_path),
        response=str(_resolve(args, cfg, "response")),
        group1=group1,
        group2=group2,
        library=library,
        library_name=library_name,
        criterion=criterion,
        strategy=str(_resolve(args, cfg, "strategy")).lower(),
        test_kind=test_kind,
        b=int(_resolve(args, cfg, "B", attr="b")),
        seed=int(_resolve(args, cfg, "seed")),
        beta=float(_resolve(args, cfg, "beta")),
        lambda_grid=parse_lambda_grid(
            getattr(args, "lambda_grid", None) or cfg.get("lambda_grid")
        ),
        output_path=getattr(args, "out", None) or cfg.get("out"),
        fmt=str(_resolve(args, cfg, "format", attr="fmt")),
        boot_correction=bool(boot_correction),
        interaction_spec=interaction_spec,
    )


def load_dataset(path, group1, group2, response):
    """Read a delimited text file and split the named columns.

    The delimiter is sniffed among comma, semicolon, and tab.  Any empty
    or non-numeric cell in a used column aborts with its 1-based data-row
    index and column name.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            sample = fh.read(4096)
            fh.seek(0)
            if not sample.strip():
                raise DataError(f"data file {path} is empty")
            try:
                dialect = csv.Sniffer().sniff(sample, delimiters=",;\t")
            except csv.Error:
                dialect = csv.excel
            rows = list(csv.reader(fh, dialect))
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc
    header = [h.strip() for h in rows[0]]
    index = {name: j for j, name in enumerate(header)}
    wanted = [response] + list(group1) + list(group2)
    missing = [name for name in wanted if name not in index]
    if missing:
        raise DataError(
            f"column(s) {', '.join(missing)} not found; available: {', '.join(header)}"
        )
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise DataError(f"data file {path} has a header but no rows")

    def column(name):
        j = index[name]
        values = np.empty(len(body))
        for i, row in enumerate(body):
            cell = row[j].strip() if j < len(row) else ""
            if not cell:
                raise DataError(f"missing value at row {i + 1}, column {name}")
            try:
                values[i] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric value {cell!r} at row {i + 1}, column {name}") from None
        return values

    y = column(response)
    x1 = np.column_stack([column(name) for name in group1])
    x2 = np.column_stack([column(name) for name in group2])
    return y, x1, x2


# ---------------------------------------------------------------------------
# result emission


def _open_out(path):
    if path is None:
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _write_kv(records: dict, path, fmt: str) -> None:
    """One fit/test result as key,value CSV rows or a single JSON line."""
    out, close = _open_out(path)
    try:
        if fmt == "json-lines":
            out.write(json.dumps(records, sort_keys=True) + "\n")
        else:
            writer = csv.writer(out)
            writer.writerow(["key", "value"])
            for key, value in records.items():
                if isinstance(value, (list, tuple)):
                    value = ";".join(str(v) for v in value)
                writer.writerow([key, value])
    finally:
        if close:
            out.close()


DETAIL_COLUMNS = ("scenario_id", "data_kernel", "delta", "library", "criterion", "strategy", "test", "rep", "pvalue")
SUMMARY_COLUMNS = ("scenario_id", "data_kernel", "delta", "library", "criterion", "strategy", "test", "rejection_rate", "reps")


def _detail_rows(results):
    for res in results:
        s = res.scenario
        for rep, pvalue in enumerate(res.pvalues):
            yield (s.scenario_id, s.data_label, s.delta, s.library_label, s.criterion, s.strategy, s.test_kind, rep, pvalue)


def _summary_rows(results):
    for res in results:
        s = res.scenario
        yield (s.scenario_id, s.data_label, s.delta, s.library_label, s.criterion, s.strategy, s.test_kind, res.rejection_rate, s.reps)


def summary_path(path: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + ".summary" + (p.suffix or ".csv")))


def emit_results(results, path, fmt: str = "csv") -> None:
    """Write the per-replicate table and the per-scenario aggregate.

    Rows are ordered by scenario id, then replicate.  CSV output splits
    into ``<out>`` and ``<out stem>.summary<ext>``; JSON lines tag each
    record with its kind and share one stream.  Without a path both
    tables go to stdout.
    """
    if not results:
        raise ValueError("no results to emit")
    results = sorted(results, key=lambda r: r.scenario.scenario_id)
    if fmt == "json-lines":
        out, close = _open_out(path)
        try:
            for row in _detail_rows(results):
                rec = {"record": "replicate", **dict(zip(DETAIL_COLUMNS, row))}
                out.write(json.dumps(rec, sort_keys=True) + "\n")
            for row in _summary_rows(results):
                rec = {"record": "scenario", **dict(zip(SUMMARY_COLUMNS, row))}
                out.write(json.dumps(rec, sort_keys=True) + "\n")
        finally:
            if close:
                out.close()
        return

    if path is None:
        writer = csv.writer(sys.stdout)
        writer.writerow(DETAIL_COLUMNS)
        writer.writerows(_detail_rows(results))
        sys.stdout.write("\n")
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(_summary_rows(results))
        return

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DETAIL_COLUMNS)
        writer.writerows(_detail_rows(results))
    with open(summary_path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(_summary_rows(results))


# ---------------------------------------------------------------------------
# commands


def _fit_records(fit, run: RunConfig) -> dict:
    records = {
        "library": run.library_name,
        "criterion": run.criterion,
        "strategy": run.strategy,
        "kernels": [f.spec.label() if f.spec else "?" for f in fit.base_fits],
        "lambda_hat": [f.lambda_hat for f in fit.base_fits],
        "u_hat": list(fit.u_hat),
        "lambda_k": fit.lambda_k,
        "lambda_ens": fit.lambda_ens,
        "intercept": fit.intercept,
        "sigma2_hat": fit.sigma2_hat,
        "tau_hat": fit.tau_hat,
    }
    return records


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    run = parse_config(args, cfg)
    y, x1, x2 = load_dataset(run.data_path, run.group1, run.group2, run.response)
    base, _ = additive_null_grams(x1, x2, run.library)
    fit = fit_null(
        y, base, criterion=run.criterion, strategy=run.strategy, beta=run.beta, grid=run.lambda_grid
    )
    _write_kv(_fit_records(fit, run), run.output_path, run.fmt)
    return 0


def cmd_test(args) -> int:
    cfg = load_config(args.config)
    run = parse_config(args, cfg)
    y, x1, x2 = load_dataset(run.data_path, run.group1, run.group2, run.response)
    result = run_test(
        y,
        x1,
        x2,
        run.library,
        criterion=run.criterion,
        strategy=run.strategy,
        test_kind=run.test_kind,
        b=run.b,
        seed=run.seed,
        grid=run.lambda_grid,
        beta=run.beta,
        interaction_spec=run.interaction_spec,
        boot_correction=run.boot_correction,
    )
    records = {
        "statistic": result.statistic,
        "pvalue": result.pvalue,
        "method": result.method,
        "B": result.b,
        "kappa_hat": result.kappa_hat,
        "nu_hat": result.nu_hat,
        "seed": result.seed,
    }
    records.update(_fit_records(result.fit, run))
    _write_kv(records, run.output_path, run.fmt)
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)

    def pick(key, attr=None):
        return _resolve(args, cfg, key, attr=attr)

    names = lambda v: _split_names(v) if v is not None else None  # noqa: E731
    deltas = pick("delta_grid")
    if isinstance(deltas, str):
        deltas = [float(v) for v in _split_names(deltas)]

    custom = {}
    for name, entries in (cfg.get("libraries") or {}).items():
        try:
            custom[name] = tuple(spec_from_dict(e) for e in entries)
        except ValueError as exc:
            raise UsageError(f"library {name!r}: {exc}") from exc

    sweep = getattr(args, "libraries_to_run", None)
    if sweep is None:
        sweep = cfg.get("sweep_libraries")

    scenarios = simulation.scenario_grid(
        mechanisms=names(pick("mechanisms")),
        libraries=names(sweep),
        criteria=names(pick("criteria")),
        strategies=names(pick("strategies")),
        tests=names(pick("tests")),
        deltas=deltas,
        n=int(pick("n")),
        p1=int(pick("p1")),
        p2=int(pick("p2")),
        b=int(pick("B", attr="b")),
        reps=int(pick("reps")),
        noise_sd=float(pick("noise_sd")),
        seed=int(pick("seed")),
        extra_libraries=custom or None,
    )
    jobs = getattr(args, "jobs", None) or cfg.get("jobs") or os.cpu_count() or 1
    fmt = str(pick("format", attr="fmt"))
    out = getattr(args, "out", None) or cfg.get("out")

    results = []
    for i, scenario in enumerate(scenarios, start=1):
        res = simulation.run_scenario(scenario, jobs=int(jobs), skip_errors=args.skip_errors)
        results.append(res)
        print(
            f"[{i}/{len(scenarios)}] {scenario.scenario_id} "
            f"rate={res.rejection_rate:.3f} ({res.wall_time:.1f}s)",
            file=sys.stderr,
        )
        for rep, msg in res.failures:
            print(f"    replicate {rep} failed: {msg}", file=sys.stderr)
    emit_results(results, out, fmt)
    return 0


def cmd_kernels(args) -> int:
    out = io.StringIO()
    for family in FAMILIES:
        params = FAMILY_PARAMS[family]
        detail = ", ".join(params) if params else "(none)"
        if family == "matern":
            orders = ", ".join(f"{v:g}" for v in MATERN_ORDERS)
            detail += f"  [nu in {{{orders}}}]"
        out.write(f"{family:<12} {detail}\n")
    sys.stdout.write(out.getvalue())
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file; flags override its values")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", dest="fmt", choices=["csv", "json-lines"], help="output format")
    p.add_argument("--seed", type=int, help="master random seed")


def _add_model_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="delimited text file with a header row")
    p.add_argument("--response", help="response column name (default: y)")
    p.add_argument("--group1", help="comma-separated column names of the first group")
    p.add_argument("--group2", help="comma-separated column names of the second group")
    p.add_argument("--library", help="kernel library name (built-in or from the config)")
    p.add_argument("--criterion", help=f"tuning criterion: {', '.join(CRITERIA)}")
    p.add_argument("--strategy", help="ensemble strategy: avg, exp, stack (alias erm)")
    p.add_argument("--beta", type=float, help="temperature for the exp strategy")
    p.add_argument("--lambda-grid", dest="lambda_grid", help="exp:LO:HI:STEP or a comma list")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvek", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the additive null ensemble to a dataset")
    _add_model_options(p_fit)
    _add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="test for interaction between the two groups")
    _add_model_options(p_test)
    p_test.add_argument("--test", dest="test_kind", choices=list(TEST_KINDS), help="null approximation")
    p_test.add_argument("--B", dest="b", type=int, help="bootstrap replicates")
    p_test.add_argument(
        "--boot-correction",
        dest="boot_correction",
        action="store_const",
        const=True,
        help="report (1+count)/(1+B) instead of the raw bootstrap proportion",
    )
    _add_common(p_test)
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="rejection-rate study over a scenario grid")
    p_sim.add_argument("--mechanisms", help=f"data mechanisms: {', '.join(simulation.DATA_KERNELS)}")
    p_sim.add_argument(
        "--libraries", dest="libraries_to_run", help=f"model libraries: {', '.join(simulation.LIBRARIES)}"
    )
    p_sim.add_argument("--criteria", help="tuning criteria to sweep")
    p_sim.add_argument("--strategies", help="ensemble strategies to sweep")
    p_sim.add_argument("--tests", help="test kinds to sweep (asym, boot)")
    p_sim.add_argument("--delta-grid", dest="delta_grid", help="comma list of interaction strengths")
    p_sim.add_argument("--n", type=int, help="sample size per replicate")
    p_sim.add_argument("--p1", type=int, help="columns in the first group")
    p_sim.add_argument("--p2", type=int, help="columns in the second group")
    p_sim.add_argument("--reps", type=int, help="replicates per scenario")
    p_sim.add_argument("--B", dest="b", type=int, help="bootstrap replicates per test")
    p_sim.add_argument("--noise-sd", dest="noise_sd", type=float, help="noise standard deviation")
    p_sim.add_argument("--jobs", type=int, help="parallel workers (default: all cores)")
    p_sim.add_argument("--skip-errors", action="store_true", help="record replicate failures instead of aborting")
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_kernels = sub.add_parser("kernels", help="list kernel families and their hyperparameters")
    p_kernels.set_defaults(func=cmd_kernels)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
