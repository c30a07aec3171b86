"""Batch command line front end.

Every command reads CSV inputs, writes CSV series and one JSON report into
``--out``, and is a pure function of its inputs, the resolved configuration
and the seed. Parameters come from built-in defaults, then the section of
the YAML ``--config`` file named after the command, then explicit flags.

Exit codes: 0 success, 1 I/O or parse failure, 2 statistical precondition
violated (or bad usage), 3 no convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .changepoint import find_tipping_point, format_scan_csv, split_regression
from .errors import ParseError, VaxSignalError
from .nowcast.forest import ForestModel, ForestParams, forest_fit, forest_predict
from .nowcast.gp import GPModel, gp_fit, gp_predict
from .nowcast.linear import ExogPanel, LinearNowcastModel, Regularization, fit_ar_exog, fit_linear_simple
from .nowcast.selection import select_queries
from .registry import (STANCES, article_percentage, read_articles_csv, read_cohorts_csv,
                       read_vaccinations_csv, stance_series, uptake_by_cohort, vaccination_activity,
                       write_articles_csv, write_cohorts_csv, write_vaccinations_csv)
from .seasonal import acf, cross_correlation, fit_ar, format_ccf_csv
from .timeseries import (MonthlyTimeSeries, SeriesWindow, YearMonth, align_many, format_series_csv,
                         read_series_csv, slice_series)

EXIT = {"io": 1, "stats": 2, "convergence": 3}

DEFAULTS = {
    "derive": {"window": None, "vaccine": None,
               "schedule": [{"dose": 1, "target_age_months": 144}]},
    "tipping": {"window": None, "min_segment": 12, "candidates": None, "one_sided": False,
                "split_starts_after": True, "delta_x": None},
    "ccf": {"window": None, "max_lag": 12, "df_offset": 1},
    "deseason": {"window": None, "p": 12},
    "fit": {"window": None, "p": 12, "trend": False, "reg": "none", "lam": 0.0, "eta": 0.0,
            "max_iter": 100_000, "kernels": 1, "n_starts": 8, "noise_variance": None, "n_trees": 100, "max_depth": None,
            "min_leaf": 2, "feature_subsample": None, "bootstrap": False, "seed": None},
    "predict": {"window": None},
    "select-queries": {"train": None, "validate": None, "mode": "separate", "max_queries": None,
                       "min_rel_improvement": 0.05},
    "synth": {"seed": None, "n_records": 1000},
}
STOCHASTIC = {("fit", "gp"), ("fit", "forest"), ("synth", None)}


class UsageError(VaxSignalError):
    kind = "stats"


# -- plumbing ------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (YearMonth, SeriesWindow)):
        return str(obj)
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class Run:
    """One command invocation: resolved config, input provenance and outputs."""

    def __init__(self, command: str, config: dict, out: Path):
        self.command = command
        self.config = config
        self.out = out
        self.inputs = {}
        self.written = []

    def input(self, role: str, path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise ParseError("no such file", path)
        self.inputs[role] = {"path": str(path), "sha256": _sha256(path)}
        return path

    def series(self, role: str, path) -> MonthlyTimeSeries:
        return read_series_csv(self.input(role, path))

    def write(self, name: str, text: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / name, "w", newline="") as fh:
            fh.write(text)
        self.written.append(name)

    def report(self, name: str, result) -> None:
        body = {"command": self.command, "version": __version__, "config": self.config,
                "inputs": self.inputs, "result": result}
        self.write(name, _dump_json(body))


def _window(text):
    return SeriesWindow.parse(text) if text else None


def _restrict(s: MonthlyTimeSeries, w: SeriesWindow | None) -> MonthlyTimeSeries:
    return slice_series(s, w.intersect(s.window)) if w is not None else s


def _exog_panel(run: Run, specs, window) -> ExogPanel | None:
    if not specs:
        return None
    data = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name:
            raise UsageError(f"--exog expects NAME=PATH, got {spec!r}")
        if name in data:
            raise UsageError(f"query name {name!r} given twice")
        data[name] = _restrict(run.series(f"exog:{name}", path), window)
    return ExogPanel.from_dict(data)


def _features(panel: ExogPanel, months: SeriesWindow) -> np.ndarray:
    return np.column_stack([slice_series(s, months).values for s in panel.series])


def _time_index(months: SeriesWindow, origin: YearMonth) -> np.ndarray:
    return np.array([float(m - origin) for m in months.months()])


# -- commands ------------------------------------------------------------------

def cmd_derive(args, cfg, run: Run):
    records = read_vaccinations_csv(run.input("vaccinations", args.vaccinations))
    cohorts = read_cohorts_csv(run.input("cohorts", args.cohorts))
    window = _window(cfg["window"])
    result = {"activity": {}, "uptake_by_cohort": {}}
    if records:
        months = sorted(r.vaccination_month for r in records)
        w = window or SeriesWindow(months[0], months[-1])
        for entry in cfg["schedule"]:
            dose, age = int(entry["dose"]), int(entry["target_age_months"])
            s = vaccination_activity(records, cohorts, dose, age, w, vaccine=cfg["vaccine"])
            run.write(f"activity_dose{dose}.csv", format_series_csv(s))
            up = uptake_by_cohort(records, cohorts, dose, vaccine=cfg["vaccine"])
            run.write(f"uptake_dose{dose}.csv",
                      "birth_year,uptake\n" + "".join(f"{y},{float(v)!r}\n" for y, v in sorted(up.items())))
            result["activity"][f"dose{dose}"] = {"window": str(w), "mean": float(s.values.mean())}
            result["uptake_by_cohort"][f"dose{dose}"] = up
    if args.articles:
        counts = read_articles_csv(run.input("articles", args.articles))
        months = sorted(c.month for c in counts)
        w = window or SeriesWindow(months[0], months[-1])
        pct = article_percentage(counts, w)
        run.write("article_percentage.csv", format_series_csv(pct))
        result["article_percentage"] = {"window": str(w), "mean": float(pct.values.mean())}
        present = sorted({c.stance for c in counts if c.stance}, key=STANCES.index)
        for stance in present:
            run.write(f"stance_{stance}.csv", format_series_csv(stance_series(counts, stance, w)))
        result["stances"] = present
    result["outputs"] = list(run.written)
    run.report("derive.json", result)


def cmd_tipping(args, cfg, run: Run):
    w = _window(cfg["window"])
    x = _restrict(run.series("x", args.x), w)
    y = _restrict(run.series("y", args.y), w)
    res = find_tipping_point(x, y, _window(cfg["candidates"]), int(cfg["min_segment"]),
                             split_starts_after=bool(cfg["split_starts_after"]),
                             one_sided=bool(cfg["one_sided"]))
    rep = split_regression(x, y, res.split, split_starts_after=bool(cfg["split_starts_after"]))
    dx = cfg["delta_x"]
    run.write("tipping_scan.csv", format_scan_csv(res))
    run.report("tipping.json", {**res.to_dict(), "regression": rep.to_dict(dx)})
    print(f"tipping point {res.split} (|dr| = {res.delta:.3f})")
    print(rep.format(dx))


def cmd_ccf(args, cfg, run: Run):
    w = _window(cfg["window"])
    x = _restrict(run.series("x", args.x), w)
    y = _restrict(run.series("y", args.y), w)
    cc = cross_correlation(x, y, int(cfg["max_lag"]), df_offset=int(cfg["df_offset"]))
    lag, r = cc.peak()
    run.write("ccf.csv", format_ccf_csv(cc))
    run.report("ccf.json", {**cc.to_dict(), "peak": {"lag": lag, "r": r}})


def cmd_deseason(args, cfg, run: Run):
    s = _restrict(run.series("series", args.series), _window(cfg["window"]))
    p = int(cfg["p"])
    model = fit_ar(s, p)
    resid = model.residuals
    run.write("deseasonalized.csv", format_series_csv(resid))
    before = acf(s, p)[p - 1] if len(s) - 2 > p else None
    after = acf(resid, p)[p - 1] if len(resid) - 2 > p else None
    run.report("deseason.json", {"model": model.to_dict(), f"acf{p}_before": before,
                                 f"acf{p}_after": after})


def cmd_fit(args, cfg, run: Run):
    family = args.family
    w = _window(cfg["window"])
    y = _restrict(run.series("y", args.y), w)
    panel = _exog_panel(run, args.exog, w)
    if family == "linear-simple":
        if panel is None or panel.k != 1:
            raise UsageError("linear-simple needs exactly one --exog NAME=PATH")
        model = fit_linear_simple(y, panel.series[0], bool(cfg["trend"]), panel.names[0])
        extra = {}
    elif family == "ar-exog":
        reg = {"none": Regularization(), "lasso": Regularization.lasso(float(cfg["lam"])),
               "elastic_net": Regularization.elastic_net(float(cfg["lam"]), float(cfg["eta"]))}
        if cfg["reg"] not in reg:
            raise UsageError(f"unknown regularization {cfg['reg']!r}")
        model = fit_ar_exog(y, panel, int(cfg["p"]), reg[cfg["reg"]], max_iter=int(cfg["max_iter"]))
        extra = {}
    elif family == "gp":
        if panel is not None:
            y, *rest = align_many([y, *panel.series])
            panel = ExogPanel(panel.names, tuple(rest))
            X = _features(panel, y.window)
            extra = {"inputs": "exog", "exog_names": list(panel.names)}
        else:
            X = _time_index(y.window, y.start)
            extra = {"inputs": "time", "origin": str(y.start)}
        model = gp_fit(X, y.values, int(cfg["kernels"]), seed=int(cfg["seed"]), n_starts=int(cfg["n_starts"]),
                       noise_variance=cfg["noise_variance"])
        extra["train_window"] = str(y.window)
    else:  # forest
        if panel is None:
            raise UsageError("forest needs at least one --exog NAME=PATH")
        y, *rest = align_many([y, *panel.series])
        panel = ExogPanel(panel.names, tuple(rest))
        params = ForestParams(int(cfg["n_trees"]), cfg["max_depth"], int(cfg["min_leaf"]),
                              cfg["feature_subsample"], bool(cfg["bootstrap"]), int(cfg["seed"]))
        model = forest_fit(_features(panel, y.window), y.values, params, panel.names)
        extra = {"train_window": str(y.window)}
    run.report("model.json", {"model": model.to_dict(), **extra})


def _load_model(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"not a model file ({e.msg})", path, e.lineno) from None
    if doc.get("command") != "fit" or "model" not in doc.get("result", {}):
        raise ParseError("not a model file written by 'fit'", path)
    return doc["result"]


def cmd_predict(args, cfg, run: Run):
    doc = _load_model(run.input("model", args.model))
    family = doc["model"]["family"]
    w = _window(cfg["window"])
    if family == "linear":
        model = LinearNowcastModel.from_dict(doc["model"])
        # full history: the lags of the first requested month precede the window
        y = run.series("y", args.y) if args.y else None
        panel = _exog_panel(run, args.exog, None)
        if panel is not None and panel.names != model.exog_names:
            panel = panel.subset(model.exog_names)
        if model.p and y is None:
            raise UsageError("this model has AR terms; pass --y with the observed history")
        pred = model.predict(y, panel)
        run.write("predictions.csv", format_series_csv(_restrict(pred, w)))
        return run.report("predict.json", {"family": family, "months": len(_restrict(pred, w))})
    if family == "gp":
        model = GPModel.from_dict(doc["model"])
        if doc.get("inputs") == "exog":
            panel = _exog_panel(run, args.exog, w).subset(doc["exog_names"])
            months = panel.window
            X = _features(panel, months)
        else:
            if w is None:
                raise UsageError("a time-input GP needs --window FROM..TO for the months to predict")
            months = w
            X = _time_index(months, YearMonth.parse(doc["origin"]))
        mean, var = gp_predict(model, X)
        run.write("predictions.csv", format_series_csv(MonthlyTimeSeries(months.start, mean)))
        run.write("predictive_sd.csv", format_series_csv(MonthlyTimeSeries(months.start, np.sqrt(var))))
        return run.report("predict.json", {"family": family, "months": len(months)})
    if family == "forest":
        model = ForestModel.from_dict(doc["model"])
        panel = _exog_panel(run, args.exog, w).subset(model.feature_names)
        pred = forest_predict(model, _features(panel, panel.window))
        run.write("predictions.csv", format_series_csv(MonthlyTimeSeries(panel.window.start, pred)))
        return run.report("predict.json", {"family": family, "months": len(panel.window)})
    raise ParseError(f"unknown model family {family!r}", args.model)


def cmd_select_queries(args, cfg, run: Run):
    if not cfg["train"] or not cfg["validate"]:
        raise UsageError("select-queries needs --train and --validate windows")
    y = run.series("y", args.y)
    panel = _exog_panel(run, args.exog, None)
    if panel is None:
        raise UsageError("select-queries needs at least one --exog NAME=PATH")
    res = select_queries(y, panel, _window(cfg["train"]), _window(cfg["validate"]), mode=cfg["mode"],
                         max_queries=cfg["max_queries"], min_rel_improvement=float(cfg["min_rel_improvement"]))
    run.report("selection.json", res.to_dict())
    print("chosen: " + (", ".join(res.chosen) if res.chosen else "(none)"))


def cmd_synth(args, cfg, run: Run):
    from .synth import demo_registry, media_shock_scenario

    seed = int(cfg["seed"])
    if args.scenario == "media-shock":
        sc = media_shock_scenario(seed)
        records, cohorts, articles = sc.records, sc.cohorts, sc.articles
        result = {"shock": str(sc.shock), "window": str(sc.window), "noise_floor": sc.noise_floor}
        run.write("planted_rate.csv", format_series_csv(sc.rate))
    else:
        demo = demo_registry(seed, int(cfg["n_records"]))
        records, cohorts, articles = demo.records, demo.cohorts, ()
        result = {"window": str(demo.window),
                  "doses_per_month": {str(m): v for m, v in demo.doses_per_month.items()}}
    run.out.mkdir(parents=True, exist_ok=True)
    write_vaccinations_csv(records, run.out / "vaccinations.csv")
    write_cohorts_csv(cohorts, run.out / "cohorts.csv")
    if articles:
        write_articles_csv(articles, run.out / "articles.csv")
    run.report("synth.json", result)


# -- argument parsing ----------------------------------------------------------

def _common(p: argparse.ArgumentParser, window=True):
    p.add_argument("--config", help="YAML file; the section named after the command is used")
    p.add_argument("--out", required=True, help="output directory")
    if window:
        p.add_argument("--window", help="restrict inputs to FROM..TO (YYYY-MM..YYYY-MM)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vaxsignal", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"vaxsignal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("derive", help="registry and article CSVs -> monthly signal CSVs")
    _common(p)
    p.add_argument("--vaccinations", required=True)
    p.add_argument("--cohorts", required=True)
    p.add_argument("--articles")
    p.add_argument("--vaccine", default=S)
    p.add_argument("--dose", type=int, default=S, help="single dose (overrides the config schedule)")
    p.add_argument("--target-age", type=int, default=S, dest="target_age_months")

    p = sub.add_parser("tipping", help="correlation tipping point and split regressions")
    _common(p)
    p.add_argument("--x", required=True, help="explanatory series CSV (e.g. article percentage)")
    p.add_argument("--y", required=True, help="response series CSV (e.g. vaccination activity)")
    p.add_argument("--min-segment", type=int, default=S)
    p.add_argument("--candidates", default=S, help="FROM..TO range of split months to scan")
    p.add_argument("--one-sided", action="store_true", default=S)
    p.add_argument("--split-in-before", action="store_false", dest="split_starts_after", default=S,
                   help="count the split month in the before segment")
    p.add_argument("--delta-x", type=float, default=S, help="report the response change for this change in x")

    p = sub.add_parser("ccf", help="cross-correlation of x_t with y_{t+k}")
    _common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--max-lag", type=int, default=S)
    p.add_argument("--df-offset", type=int, default=S)

    p = sub.add_parser("deseason", help="AR(p) residuals of a series")
    _common(p)
    p.add_argument("--series", required=True)
    p.add_argument("--p", type=int, default=S)

    p = sub.add_parser("fit", help="fit a nowcasting model")
    _common(p)
    p.add_argument("family", choices=("linear-simple", "ar-exog", "gp", "forest"))
    p.add_argument("--y", required=True)
    p.add_argument("--exog", action="append", metavar="NAME=PATH")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--p", type=int, default=S)
    p.add_argument("--trend", action="store_true", default=S)
    p.add_argument("--reg", choices=("none", "lasso", "elastic_net"), default=S)
    p.add_argument("--lam", type=float, default=S)
    p.add_argument("--eta", type=float, default=S)
    p.add_argument("--max-iter", type=int, default=S, help="coordinate-descent sweep limit")
    p.add_argument("--kernels", type=int, default=S)
    p.add_argument("--n-starts", type=int, default=S)
    p.add_argument("--noise-variance", type=float, default=S)
    p.add_argument("--n-trees", type=int, default=S)
    p.add_argument("--max-depth", type=int, default=S)
    p.add_argument("--min-leaf", type=int, default=S)
    p.add_argument("--feature-subsample", type=int, default=S)
    p.add_argument("--bootstrap", action="store_true", default=S)

    p = sub.add_parser("predict", help="predictions from a saved model")
    _common(p)
    p.add_argument("--model", required=True, help="model.json written by 'fit'")
    p.add_argument("--y", help="observed history (AR models)")
    p.add_argument("--exog", action="append", metavar="NAME=PATH")

    p = sub.add_parser("select-queries", help="correlation-ranked forward selection of queries")
    _common(p, window=False)
    p.add_argument("--y", required=True)
    p.add_argument("--exog", action="append", metavar="NAME=PATH", required=True)
    p.add_argument("--train", default=S)
    p.add_argument("--validate", default=S)
    p.add_argument("--mode", choices=("separate", "aggregate"), default=S)
    p.add_argument("--max-queries", type=int, default=S)
    p.add_argument("--min-rel-improvement", type=float, default=S)

    p = sub.add_parser("synth", help="write a seeded synthetic registry")
    _common(p, window=False)
    p.add_argument("scenario", choices=("media-shock", "demo-registry"))
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--n-records", type=int, default=S)
    return parser


_NOT_CONFIG = {"command", "config", "out", "family", "scenario", "x", "y", "series", "vaccinations",
               "cohorts", "articles", "exog", "model"}


def resolve_config(args) -> dict:
    """Defaults, then the command's section of the config file, then flags."""
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        try:
            with open(args.config) as fh:
                doc = yaml.safe_load(fh) or {}
        except yaml.YAMLError as e:
            raise ParseError(f"invalid YAML: {e}", args.config) from None
        section = doc.get(args.command, {}) if isinstance(doc, dict) else None
        if not isinstance(section, dict):
            raise ParseError(f"section {args.command!r} must be a mapping", args.config)
        unknown = set(section) - set(cfg)
        if unknown:
            raise ParseError(f"unknown keys in {args.command!r}: {', '.join(sorted(unknown))}", args.config)
        cfg.update(section)
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    dose = flags.pop("dose", None)
    age = flags.pop("target_age_months", None)
    if dose is not None or age is not None:
        cfg["schedule"] = [{"dose": dose if dose is not None else 1,
                            "target_age_months": age if age is not None else 144}]
    cfg.update(flags)
    family = getattr(args, "family", None) if args.command == "fit" else None
    if (args.command, family) in STOCHASTIC and cfg.get("seed") is None:
        raise UsageError(f"{args.command} {family or args.scenario} is stochastic; pass --seed")
    if args.command == "fit":
        cfg["family"] = family
    return cfg


COMMANDS = {"derive": cmd_derive, "tipping": cmd_tipping, "ccf": cmd_ccf, "deseason": cmd_deseason,
            "fit": cmd_fit, "predict": cmd_predict, "select-queries": cmd_select_queries, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg, Run(args.command, cfg, Path(args.out)))
    except VaxSignalError as e:
        print(f"vaxsignal {args.command}: error: {e}", file=sys.stderr)
        return EXIT.get(e.kind, 2)
    except OSError as e:
        print(f"vaxsignal {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
