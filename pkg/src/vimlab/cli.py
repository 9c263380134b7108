"""Command-line driver for the simulation experiments.

Every run writes one CSV whose leading ``# key = value`` lines hold the fully
resolved configuration, followed by a ``.meta.json`` sidecar with wall-clock
time and library versions. The CSV depends only on the configuration (worker
count excluded), so a run can be repeated from its own header with
``--config <archive.csv>``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
3 input/output error. Failures print one JSON record on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, cate, dgp
from .data import read_csv, schema_text, to_csv_text
from .decomposition import CONDITIONAL, DESK_GRID, MARGINAL, StudyConfig, run_study
from .importance import (
    AMVIM, CVIM, LOCO, MVIM, EstimatorConfig, estimate_amvim, estimate_cvim, estimate_loco,
    estimate_mvim_many,
)
from .models import AdditiveSplineSpec, ExactSpec, GradientBoostingSpec, OracleSpec, default_gbt_schedule
from .rng import RngStream

OUTPUT_DIR_ENV = "VIMLAB_OUTPUT_DIR"
COMMANDS = ("simulate", "truth", "importance", "bias-variance", "cate-check", "reproduce-table")
TABLE1_PREDICTORS = ("X1", "X2", "X3", "X4", "X5", "C1", "C2", "U1", "U2", "X6")
MODELS = ("gbt", "oracle", "spline", "exact")
PAPER_GRID = (100, 500, 1000, 5000, 10000, 20000, 50000)

SCALES = {
    "desk": dict(npop=100_000, reps=50, n_eval=100_000, grid=DESK_GRID, n_mc=1_000_000, max_ntrain=10_000),
    "paper": dict(npop=1_000_000, reps=100, n_eval=100_000, grid=PAPER_GRID, n_mc=1_000_000, max_ntrain=None),
}

# (table number) -> (scenario, switch mode, predictors)
TABLES = {
    2: ("independent", MARGINAL, ("X1", "X5", "X6")),
    3: ("simple", MARGINAL, ("X1", "X5", "X6")),
    4: ("multivariate", MARGINAL, ("X1", "X5", "X6")),
    5: ("weak", CONDITIONAL, ("X1",)),
    6: ("moderate", CONDITIONAL, ("X1",)),
    7: ("strong", CONDITIONAL, ("X1",)),
}


class UsageError(Exception):
    exit_code = 2


class OutputError(Exception):
    exit_code = 3


# -- configuration -------------------------------------------------------------------------

def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    return float(s)


def _grid(s: str) -> tuple[int, ...]:
    vals = sorted({int(v) for v in s.split(",") if v.strip()})
    if not vals:
        raise ValueError("empty list")
    return tuple(vals)


def _names(s: str) -> tuple[str, ...]:
    vals = tuple(v.strip() for v in s.split(",") if v.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _str(s: str) -> str:
    return s.strip()


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str
    in_header: bool = True


KEYS: dict[str, Key] = {
    "scenario": Key(_str, "independent", "simulation scenario"),
    "predictor": Key(_names, None, "comma-separated predictors ('all' for the full table)"),
    "model": Key(_str, "gbt", "model family: gbt, oracle, spline or exact"),
    "ntrain": Key(_grid, None, "comma-separated training sizes (rows for simulate)"),
    "seed": Key(_int, 1, "master seed"),
    "workers": Key(_int, 1, "worker processes", in_header=False),
    "scale": Key(_str, "desk", "size preset: desk or paper"),
    "out": Key(_str, None, "output CSV path ('-' for stdout)", in_header=False),
    "data": Key(_str, None, "CSV dataset (with .schema sidecar) for importance"),
    "kind": Key(lambda s: s.strip().upper(), MVIM, "importance kind: mvim, cvim, amvim or loco"),
    "cond_model": Key(_str, None, "conditional-model family: gbt, spline or linear (default: gbt for gbt, else linear)"),
    "switch_mode": Key(_str, MARGINAL, "bias-variance switch: marginal or conditional"),
    "splits": Key(_int, 10, "train/validation splits per replicate"),
    "permutations": Key(_int, 5, "switches per split"),
    "outer_reps": Key(_int, 1, "outer subsampling replicates"),
    "reps": Key(_int, None, "bias-variance training sets per size"),
    "n_eval": Key(_int, None, "bias-variance evaluation rows"),
    "npop": Key(_int, None, "population size for Monte-Carlo truths"),
    "n_mc": Key(_int, None, "Monte-Carlo draws for cate-check"),
    "table": Key(_int, None, "table number for reproduce-table (1-7)"),
    "n_trees": Key(_int, None, "boosting: number of trees"),
    "max_depth": Key(_int, None, "boosting: tree depth"),
    "learning_rate": Key(_float, None, "boosting: shrinkage"),
    "subsample": Key(_float, None, "boosting: row subsampling fraction"),
    "min_leaf": Key(_int, None, "boosting: minimum rows per leaf"),
    "basis_per_var": Key(_int, None, "spline: basis functions per continuous predictor"),
    "ridge": Key(_float, None, "spline: ridge penalty"),
}
GBT_OVERRIDES = ("n_trees", "max_depth", "learning_rate", "subsample", "min_leaf")
SPLINE_OVERRIDES = ("basis_per_var", "ridge")


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse flat ``key = value`` text.

    ``# key = value`` lines are read as well, so the header of a previous
    output CSV works as a config file; reading stops at its CSV payload.
    """
    out: dict[str, Any] = {}
    archive = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            line = line.lstrip("#").strip()
            if "=" not in line:
                continue
            archive = True
        elif not line:
            continue
        elif "=" not in line:
            if archive:
                break
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "vimlab_version":
            continue
        out[key] = value if key == "command" else _parse_value(key, value)
    return out


def _parse_value(key: str, value: str):
    if key not in KEYS:
        raise UsageError(f"unknown config key {key!r}; valid keys: {', '.join(sorted(KEYS))}")
    if value in ("", "none", "None"):
        return None
    try:
        return KEYS[key].parse(value)
    except ValueError as exc:
        raise UsageError(f"config key {key!r}: cannot parse {value!r} ({exc})") from None


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenario: str
    predictor: tuple[str, ...]
    model: str
    ntrain: tuple[int, ...]
    seed: int
    workers: int
    scale: str
    out: str | None
    data: str | None
    kind: str
    cond_model: str | None
    switch_mode: str
    splits: int
    permutations: int
    outer_reps: int
    reps: int
    n_eval: int
    npop: int
    n_mc: int
    table: int | None
    n_trees: int | None
    max_depth: int | None
    learning_rate: float | None
    subsample: float | None
    min_leaf: int | None
    basis_per_var: int | None
    ridge: float | None

    def header_items(self) -> list[tuple[str, str]]:
        items = [("command", self.command), ("vimlab_version", __version__)]
        for f in fields(self):
            if f.name != "command" and KEYS[f.name].in_header:
                items.append((f.name, _format_value(getattr(self, f.name))))
        return items

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def resolve_config(command: str, file_values: dict[str, Any], flag_values: dict[str, Any]) -> RunConfig:
    """Defaults < config file < flags; scale presets fill what is still unset."""
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    file_cmd = file_values.pop("command", None)
    if file_cmd is not None and file_cmd != command:
        raise UsageError(f"config file is for {file_cmd!r}, not {command!r}")
    vals = {k: key.default for k, key in KEYS.items()}
    vals.update({k: v for k, v in file_values.items() if v is not None})
    vals.update({k: v for k, v in flag_values.items() if v is not None})

    if vals["scale"] not in SCALES:
        raise UsageError(f"unknown scale {vals['scale']!r}; choose from {sorted(SCALES)}")
    preset = SCALES[vals["scale"]]
    for key, pkey in (("reps", "reps"), ("n_eval", "n_eval"), ("npop", "npop"), ("n_mc", "n_mc")):
        if vals[key] is None:
            vals[key] = preset[pkey]
    if vals["ntrain"] is None:
        vals["ntrain"] = preset["grid"] if command in ("bias-variance", "reproduce-table") else (1000,)
    if vals["cond_model"] is None:
        vals["cond_model"] = "gbt" if vals["model"] == "gbt" else "linear"
    if vals["predictor"] is None:
        vals["predictor"] = TABLE1_PREDICTORS if command == "truth" else ("X1", "X5", "X6")
    if vals["predictor"] == ("all",):
        vals["predictor"] = TABLE1_PREDICTORS
    cfg = RunConfig(command=command, **vals)
    _validate(cfg, preset)
    return cfg


def _validate(cfg: RunConfig, preset: dict) -> None:
    if cfg.command != "cate-check" and cfg.command != "reproduce-table" and cfg.data is None:
        if cfg.scenario not in dgp.SCENARIOS:
            raise UsageError(f"unknown scenario {cfg.scenario!r}; choose from {sorted(dgp.SCENARIOS)}")
        unknown = set(cfg.predictor) - set(dgp.SCENARIOS[cfg.scenario].predictors)
        if unknown:
            raise UsageError(f"unknown predictors {sorted(unknown)}")
    if cfg.model not in MODELS:
        raise UsageError(f"unknown model {cfg.model!r}; choose from {list(MODELS)}")
    if cfg.cond_model not in ("gbt", "spline", "linear"):
        raise UsageError(f"cond_model must be gbt, spline or linear, got {cfg.cond_model!r}")
    if cfg.kind not in (MVIM, CVIM, AMVIM, LOCO):
        raise UsageError(f"unknown importance kind {cfg.kind!r}")
    if cfg.switch_mode not in (MARGINAL, CONDITIONAL):
        raise UsageError(f"unknown switch_mode {cfg.switch_mode!r}")
    if cfg.workers < 1:
        raise UsageError("workers must be >= 1")
    if min(cfg.ntrain) < 1:
        raise UsageError("ntrain values must be positive")
    cap = preset["max_ntrain"]
    if cap is not None and max(cfg.ntrain) > cap:
        raise UsageError(f"scale {cfg.scale!r} caps ntrain at {cap}; use --scale paper")
    if cfg.command == "reproduce-table" and cfg.table not in range(1, 8):
        raise UsageError("reproduce-table needs --table between 1 and 7")
    if cfg.model != "gbt" and any(getattr(cfg, k) is not None for k in GBT_OVERRIDES):
        raise UsageError("boosting overrides require --model gbt")
    if cfg.model != "spline" and any(getattr(cfg, k) is not None for k in SPLINE_OVERRIDES):
        raise UsageError("spline overrides require --model spline")


def _model_spec(cfg: RunConfig, family: str, n_fit: int):
    """Model spec for ``family``; None selects the size-dependent boosting schedule."""
    if family == "oracle":
        return OracleSpec()
    if family == "exact":
        return ExactSpec()
    if family == "linear":
        return AdditiveSplineSpec(basis_per_var=1)
    if family == "spline":
        over = {k: getattr(cfg, k) for k in SPLINE_OVERRIDES if getattr(cfg, k) is not None}
        return AdditiveSplineSpec(**over)
    over = {k: getattr(cfg, k) for k in GBT_OVERRIDES if getattr(cfg, k) is not None}
    if not over:
        return None
    try:
        return replace(default_gbt_schedule(max(n_fit, 10)), **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- output -----------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "fail"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(cfg: RunConfig, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    for k, v in cfg.header_items():
        buf.write(f"# {k} = {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


def _default_name(cfg: RunConfig) -> str:
    if cfg.command == "reproduce-table":
        return f"table{cfg.table}.csv"
    return f"{cfg.command}.csv"


def output_path(cfg: RunConfig) -> Path | None:
    if cfg.out == "-":
        return None
    if cfg.out is not None:
        return Path(cfg.out)
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / _default_name(cfg)


def _versions() -> dict[str, str]:
    import numba

    return {"vimlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "numba": numba.__version__}


# -- subcommands ----------------------------------------------------------------------------

@dataclass
class Payload:
    columns: list[str]
    rows: list[list[Any]]
    extra_files: dict[str, str] | None = None  # suffix -> text written next to the CSV


def cmd_simulate(cfg: RunConfig, rng: RngStream) -> Payload:
    if len(cfg.ntrain) != 1:
        raise UsageError("simulate takes a single --ntrain value")
    data = dgp.generate(cfg.ntrain[0], dgp.get_scenario(cfg.scenario), rng.child("simulate"))
    body = list(csv.reader(io.StringIO(to_csv_text(data))))
    return Payload(body[0], body[1:], {".schema": schema_text(data)})


def cmd_truth(cfg: RunConfig, rng: RngStream) -> Payload:
    sc = dgp.get_scenario(cfg.scenario)
    rows = []
    for p in cfg.predictor:
        t = dgp.true_mvim(p, sc, cfg.npop, rng.child("truth", p, "marginal"))
        c = dgp.true_cvim(p, sc, cfg.npop, rng.child("truth", p, "conditional"))
        rows.append([sc.name, p, t.method, t.e_orig_true, t.e_switch_true, t.mi_true, c.ci_true, t.mc_se, cfg.npop])
    cols = ["scenario", "predictor", "method", "e_orig", "e_switch", "mi_true", "ci_true", "mc_se", "n_pop"]
    return Payload(cols, rows)


def _estimator(cfg: RunConfig) -> EstimatorConfig:
    try:
        return EstimatorConfig(outer_reps=cfg.outer_reps, splits_per_rep=cfg.splits,
                               permutations=cfg.permutations, workers=cfg.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_importance(cfg: RunConfig, rng: RngStream) -> Payload:
    est_cfg = _estimator(cfg)
    if cfg.data is not None:
        try:
            datasets = [("data", read_csv(cfg.data))]
        except OSError as exc:
            raise OutputError(f"cannot read {cfg.data}: {exc}") from None
    else:
        sc = dgp.get_scenario(cfg.scenario)
        datasets = [(sc.name, dgp.generate(n, sc, rng.child("data", n))) for n in cfg.ntrain]
    rows = []
    for label, data in datasets:
        n_fit = int(round(data.n_rows * est_cfg.train_fraction))
        spec = _model_spec(cfg, cfg.model, n_fit)
        cond_spec = _model_spec(cfg, cfg.cond_model, n_fit)
        stream = rng.child("importance", data.n_rows)
        if cfg.kind == MVIM:
            results = estimate_mvim_many(data, list(cfg.predictor), spec, est_cfg, stream)
        elif cfg.kind == LOCO:
            results = [estimate_loco(data, p, spec, est_cfg, stream.child(p)) for p in cfg.predictor]
        else:
            results = []
            for p in cfg.predictor:
                ci = estimate_cvim(data, p, spec, cond_spec, est_cfg, stream.child(p))
                if cfg.kind == AMVIM:
                    if ci.r_squared is None:
                        raise UsageError(f"AMVIM needs a continuous predictor; {p!r} is categorical")
                    ci = estimate_amvim(ci, ci.r_squared)
                results.append(ci)
        for r in results:
            rows.append([label, r.predictor, r.kind, r.model_family, r.n_train, r.point, r.spread,
                         r.e_orig_hat, r.e_switch_hat, r.B, r.k, r.m, cfg.seed])
    cols = ["scenario", "predictor", "kind", "model_family", "n_train", "point", "spread", "e_orig_hat",
            "e_switch_or_cond_hat", "B", "k", "m", "seed"]
    return Payload(cols, rows)


def _study(cfg: RunConfig, rng: RngStream, scenario: str, mode: str, predictors) -> list:
    try:
        configs = [
            StudyConfig(
                dgp.get_scenario(scenario), predictors=tuple(predictors), model_spec=_model_spec(cfg, cfg.model, n),
                switch_mode=mode, n_train_grid=(n,), n_reps=cfg.reps, n_eval=cfg.n_eval, n_pop=cfg.npop,
                workers=cfg.workers,
            )
            for n in cfg.ntrain
        ]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if len({c.model_spec for c in configs}) == 1:
        # one study over the whole grid shares the evaluation set and truths
        return run_study(replace(configs[0], n_train_grid=tuple(cfg.ntrain)), rng.child("study"))
    return [r for c in configs for r in run_study(c, rng.child("study"))]


def cmd_bias_variance(cfg: RunConfig, rng: RngStream) -> Payload:
    reports = _study(cfg, rng, cfg.scenario, cfg.switch_mode, cfg.predictor)
    cols = ["scenario", "predictor", "switch_mode", "n_train", "bias2_switch", "bias2_orig", "var_switch",
            "var_orig", "delta", "mi_hat", "mi_c", "mi_true", "R", "n_eval", "seed"]
    rows = [[cfg.scenario, r.predictor, r.switch_mode, r.n_train, r.bias2_switch, r.bias2_orig, r.var_switch,
             r.var_orig, r.delta, r.mi_hat, r.mi_c, r.mi_true, r.n_reps, r.n_eval, cfg.seed] for r in reports]
    return Payload(cols, rows)


def cate_rows(n_mc: int, rng: RngStream) -> list[list[Any]]:
    """Rows (model_id, identity, switch_based, cate_based, mc_se, pass) over the corpus."""
    rows = []
    for m in cate.corpus():
        s = rng.child("cate", m.name)
        for fn in (cate.mvim_via_cate, cate.cvim_via_cate):
            r = fn(m, n_mc, s.child(fn.__name__))
            rows.append([m.name, r.identity, r.switch_based, r.cate_based, r.mc_se, r.passes(3.0)])
        if m.exact:
            for name, a, b in (("mvim_exact", cate.exact_switch(m, False), cate.exact_mvim_cate(m)),
                               ("cvim_exact", cate.exact_switch(m, True), cate.exact_cvim_cate(m))):
                rows.append([m.name, name, float(a), float(b), 0.0, a == b])
        if m.kind == cate.BINARY:
            d = cate.causal_variance_decomposition(m, n_mc, s.child("decomposition"))
            rows.append([m.name, "variance_decomposition", d.total, d.sum, d.mc_se,
                         abs(d.total - d.sum) <= 3 * d.mc_se])
            c = cate.cvim_via_cate(m, n_mc, s.child("cvim_for_decomposition"))
            rows.append([m.name, "causal_term_half_cvim", c.cate_based / 2, d.causal, c.mc_se / 2,
                         abs(c.cate_based / 2 - d.causal) <= 3 * c.mc_se / 2 + 1e-12])
    return rows


def cmd_cate_check(cfg: RunConfig, rng: RngStream) -> Payload:
    return Payload(["model_id", "identity", "switch_based", "cate_based", "mc_se", "pass"], cate_rows(cfg.n_mc, rng))


def cmd_reproduce_table(cfg: RunConfig, rng: RngStream) -> Payload:
    if cfg.table == 1:
        sc = dgp.INDEPENDENT
        rows = []
        for p in TABLE1_PREDICTORS:
            t = dgp.true_mvim(p, sc, cfg.npop, rng.child("truth", p, "marginal"))
            rows.append([p, t.mi_true])
        return Payload(["predictor", "mvim"], rows)
    scenario, mode, predictors = TABLES[cfg.table]
    reports = _study(cfg, rng, scenario, mode, predictors)
    if mode == MARGINAL:
        cols = ["predictor", "n_train", "bias2_switch", "bias2_orig", "var_switch", "var_orig", "delta",
                "mi_hat", "mi_c", "mi_true"]
        rows = [[r.predictor, r.n_train, r.bias2_switch, r.bias2_orig, r.var_switch, r.var_orig, r.delta,
                 r.mi_hat, r.mi_c, r.mi_true] for r in reports]
    else:
        cols = ["n_train", "bias2_cond", "bias2_orig", "var_cond", "var_orig", "delta", "ci_hat", "ci_c", "ci_true"]
        rows = [[r.n_train, r.bias2_switch, r.bias2_orig, r.var_switch, r.var_orig, r.delta, r.mi_hat, r.mi_c,
                 r.mi_true] for r in reports]
    return Payload(cols, rows)


HANDLERS = {
    "simulate": cmd_simulate,
    "truth": cmd_truth,
    "importance": cmd_importance,
    "bias-variance": cmd_bias_variance,
    "cate-check": cmd_cate_check,
    "reproduce-table": cmd_reproduce_table,
}


def run(cfg: RunConfig) -> str:
    """Execute ``cfg``, write the archive and return the CSV text."""
    start = time.perf_counter()
    payload = HANDLERS[cfg.command](cfg, RngStream(cfg.seed))
    text = render_csv(cfg, payload.columns, payload.rows)
    path = output_path(cfg)
    if path is None:
        sys.stdout.write(text)
        return text
    _atomic_write(path, text)
    for suffix, extra in (payload.extra_files or {}).items():
        _atomic_write(path.with_name(path.name + suffix), extra)
    meta = {
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.as_dict().items()},
        "wall_clock_seconds": round(time.perf_counter() - start, 3),
        "versions": _versions(),
    }
    _atomic_write(path.with_name(path.name + ".meta.json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return text


# -- entry point --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vimlab", description="Variable-importance simulation experiments.")
    parser.add_argument("--version", action="version", version=f"vimlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value file, or a previous output CSV")
        for key, spec in KEYS.items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None, help=spec.help)
    return parser


def parse_args(argv: Sequence[str]) -> RunConfig:
    ns = build_parser().parse_args(list(argv))
    file_values: dict[str, Any] = {}
    if ns.config:
        try:
            text = Path(ns.config).read_text()
        except OSError as exc:
            raise OutputError(f"cannot read config {ns.config}: {exc}") from None
        file_values = parse_config_text(text)
    flags = {k: _parse_value(k, getattr(ns, k)) for k in KEYS if getattr(ns, k) is not None}
    return resolve_config(ns.command, file_values, flags)


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
        run(cfg)
        return 0
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, OutputError) as exc:
        code = exc.exit_code
        err, msg = type(exc).__name__, str(exc)
    except OSError as exc:
        code, err, msg = 3, type(exc).__name__, str(exc)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable record
        code, err, msg = 1, type(exc).__name__, str(exc)
    sys.stderr.write(json.dumps({"error": err, "message": msg, "exit_code": code}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
