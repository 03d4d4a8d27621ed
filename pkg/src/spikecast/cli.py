"""Batch command line: generate, featurize, train, explain, stage1, backtest, sweep."""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from . import __version__, learners
from .evaluate import (
    ModelFactory,
    default_thresholds,
    read_report_csv,
    sweep_csv_text,
    stage1,
    stage2_backtest,
    threshold_sweep,
    write_report_csv,
)
from .features import LagSpec, build_examples, read_dataset, write_dataset
from .resample import SmoteConfig
from .syngen import GenConfig, generate, write_truth
from .telemetry import Topology, ingest_csv, windowize, write_csv
from .tuner import DEConfig, oversample, tune_learner

log = logging.getLogger("spikecast")


@dataclasses.dataclass
class RunConfig:
    telemetry: str = ""
    topology: str = ""
    model: str = ""
    reports_dir: str = "."
    spike_threshold_ms: float = 470.0
    horizon_min: int = 30
    window_min: int = 10
    L_hours: float = 24.0
    lags: str = "5,10,15,30,60,90,120,150,180,300,1440"
    smote_k: int = 5
    smote_percent: int = 50
    de_np: int = 20
    de_f: float = 0.75
    de_cr: float = 0.3
    de_gen: int = 10
    learner: str = "cart"
    min_samples_split: float = 2
    max_depth: int = 0  # 0: unlimited
    n_estimators: int = 10
    seed: int = 0

    def lag_spec(self) -> LagSpec:
        return LagSpec(tuple(int(v) for v in str(self.lags).split(",") if v.strip()))

    def smote_cfg(self) -> SmoteConfig:
        return SmoteConfig(self.smote_k, self.smote_percent, self.spike_threshold_ms, self.seed)

    def de_cfg(self) -> DEConfig:
        return DEConfig(self.de_np, self.de_f, self.de_cr, self.de_gen, self.seed)

    def learner_values(self) -> dict:
        split = self.min_samples_split
        values = {"min_samples_split": int(split) if split >= 2 and float(split).is_integer() else split,
                  "max_depth": self.max_depth or None}
        if self.learner == "forest":
            values["n_estimators"] = self.n_estimators
        if self.learner == "logistic":
            values = {}
        return values


class CliError(Exception):
    pass


def read_config(path: str | Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split(sep, 1))
        if key not in fields:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        typ = type(fields[key].default)
        try:
            out[key] = typ(float(val)) if typ in (int, float) else val
        except ValueError:
            raise CliError(f"{path}:{lineno}: bad value {val!r} for {key}") from None
    return out


def resolve(args: argparse.Namespace) -> RunConfig:
    """Flags override the config file, which overrides built-in defaults."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        for k, v in read_config(args.config).items():
            setattr(cfg, k, v)
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    return cfg


@contextlib.contextmanager
def outputs(*paths: str | Path):
    """Yield temp paths; move them into place only if the block succeeds."""
    finals = [Path(p) for p in paths]
    temps = [p.with_name(f".{p.stem}.part{p.suffix}") for p in finals]
    try:
        for p in finals:
            p.parent.mkdir(parents=True, exist_ok=True)
        yield temps
        for t, p in zip(temps, finals):
            if t.exists():
                os.replace(t, p)
    finally:
        for t in temps:
            t.unlink(missing_ok=True)


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not str(path) or not p.is_file():
        raise CliError(f"cannot read {what} {str(path)!r}")
    return p


def load_topology(path: str | Path) -> Topology:
    try:
        return Topology.from_dict(json.loads(_require(path, "topology").read_text(encoding="utf-8")))
    except (KeyError, json.JSONDecodeError) as e:
        raise CliError(f"bad topology file {path}: {e}") from None


def _topology_for(telemetry: Path, given: str) -> Topology:
    return load_topology(given or telemetry.with_name("topology.json"))


def _header(cfg: RunConfig, **extra) -> list[str]:
    items = {"spikecast": __version__, "seed": cfg.seed, **extra}
    return [" ".join(f"{k}={v}" for k, v in items.items())]


# ---------------------------------------------------------------- commands


def cmd_generate(args, cfg: RunConfig) -> int:
    gen = GenConfig(
        days=args.days, seed=cfg.seed, n_upstream=args.n_upstream, spike_rate=args.spike_rate,
        buildup_fraction=args.buildup_fraction, spike_threshold_ms=cfg.spike_threshold_ms,
    )
    out = Path(args.out)
    truth = out.with_name("spikes_truth.csv")
    topo = out.with_name("topology.json")
    syn = generate(gen)
    with outputs(out, truth, topo) as (t_out, t_truth, t_topo):
        write_csv(syn.store, t_out, _header(cfg, days=gen.days, buildup_fraction=gen.buildup_fraction))
        write_truth(syn.truth, t_truth, _header(cfg))
        topo_doc = {**syn.topology.to_dict(), "seed": cfg.seed}
        t_topo.write_text(json.dumps(topo_doc, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out} ({syn.store.n_minutes} minutes x {len(syn.store.nodes)} nodes), {truth}, {topo}")
    return 0


def cmd_featurize(args, cfg: RunConfig) -> int:
    src = _require(args.input or cfg.telemetry, "telemetry file")
    topo = _topology_for(src, args.topology or cfg.topology)
    ds = build_examples(ingest_csv(src, topo), topo, cfg.lag_spec(), cfg.horizon_min)
    with outputs(args.out) as (tmp,):
        write_dataset(ds, tmp, _header(cfg, horizon_min=cfg.horizon_min, lags=cfg.lags))
    print(f"wrote {args.out} ({len(ds)} examples x {len(ds.layout)} features)")
    return 0


def _dataset(args, cfg):
    return read_dataset(_require(args.data, "dataset"))


def cmd_train(args, cfg: RunConfig) -> int:
    ds = _dataset(args, cfg)
    values = cfg.learner_values()
    report = None
    if args.tune:
        report = tune_learner(ds, None, cfg.learner, cfg.de_cfg(), cfg.spike_threshold_ms,
                              cfg.smote_cfg() if args.smote else None, fixed=values)
        values.update(report.params)
    params = learners.make_params(cfg.learner, values, seed=cfg.seed)
    train = oversample(ds, cfg.smote_cfg() if args.smote else None)
    model = learners.fit(cfg.learner, train, params, cfg.spike_threshold_ms)
    model_out = Path(args.model_out)
    tuning_out = model_out.with_suffix(".tuning.json")
    paths = [model_out] + ([tuning_out] if report else [])
    with outputs(*paths) as tmps:
        learners.save_model(model, tmps[0], seed=cfg.seed, smote=bool(args.smote), tuned=bool(args.tune))
        if report:
            report.write_report(tmps[1], learner=cfg.learner, seed=cfg.seed)
    print(f"wrote {model_out}" + (f", {tuning_out}" if report else ""))
    return 0


def cmd_explain(args, cfg: RunConfig) -> int:
    model = learners.load_model(_require(args.model or cfg.model, "model"))
    if isinstance(model, learners.RegressionTree):
        sys.stdout.write(learners.export_tree(model, cfg.spike_threshold_ms))
    elif isinstance(model, learners.ForestModel):
        for k, t in enumerate(model.trees):
            sys.stdout.write(f"# tree {k}\n" + learners.export_tree(t, cfg.spike_threshold_ms))
    else:
        raise CliError("explain needs a cart or forest model")
    return 0


def cmd_stage1(args, cfg: RunConfig) -> int:
    ds = _dataset(args, cfg)
    res = stage1(ds, cfg.learner, cfg.learner_values(), cfg.smote_cfg() if args.smote else None,
                 cfg.de_cfg() if args.tune else None, cfg.spike_threshold_ms, cfg.seed)
    row = res.row()
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
    w.writeheader()
    w.writerow(row)
    sys.stdout.write(buf.getvalue())
    if args.out:
        with outputs(args.out) as (tmp,):
            tmp.write_text("".join(f"# {c}\n" for c in _header(cfg)) + buf.getvalue(), encoding="utf-8")
    return 0


def cmd_backtest(args, cfg: RunConfig) -> int:
    src = _require(args.input or cfg.telemetry, "telemetry file")
    topo = _topology_for(src, args.topology or cfg.topology)
    ws = windowize(ingest_csv(src, topo), cfg.window_min)
    if args.params_from:
        doc = json.loads(_require(args.params_from, "model").read_text(encoding="utf-8"))
        if args.learner is None:
            cfg.learner = doc["kind"]
        values = {k: v for k, v in doc["params"].items() if k != "seed"}
    else:
        values = cfg.learner_values()
    factory = ModelFactory.of(cfg.learner, values, cfg.smote_cfg() if args.smote else None,
                              spike_threshold_ms=cfg.spike_threshold_ms)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # per-pair smote k clamping
        rep = stage2_backtest(ws, topo, cfg.lag_spec(), factory, cfg.L_hours, cfg.horizon_min, cfg.seed,
                              n_jobs=args.jobs)
    out = Path(args.report)
    paths = [out] + ([Path(args.plot)] if args.plot else [])
    with outputs(*paths) as tmps:
        write_report_csv(rep, tmps[0], _header(cfg, learner=cfg.learner, smote=int(bool(args.smote))))
        if args.plot:
            from .plotting import plot_backtest

            plot_backtest(rep, tmps[1], cfg.spike_threshold_ms)
    print(f"wrote {out} ({len(rep.pairs)} pairs)")
    return 0


def _recorded_seed(path: Path, default: int) -> int:
    """The seed a report was produced with, taken from its header comments."""
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for tok in line[1:].split():
                if tok.startswith("seed="):
                    return int(tok[5:])
    return default


def cmd_sweep(args, cfg: RunConfig) -> int:
    path = _require(args.report, "report")
    _, pred, act = read_report_csv(path)
    if args.seed is None:
        cfg.seed = _recorded_seed(path, cfg.seed)
    if not args.step > 0:
        raise CliError("--step must be positive")
    curve = threshold_sweep((pred, act), default_thresholds(args.start, args.stop, args.step), cfg.spike_threshold_ms)
    text = sweep_csv_text(curve, _header(cfg, report=path.name))
    paths = ([Path(args.out)] if args.out else []) + ([Path(args.plot)] if args.plot else [])
    with outputs(*paths) as tmps:
        if args.out:
            tmps[0].write_text(text, encoding="utf-8")
        if args.plot:
            from .plotting import plot_sweep

            plot_sweep(curve, tmps[-1])
    if not args.out:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spikecast", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, learner=False):
        sp.add_argument("--config", help="flat key = value file (RunConfig field names)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--spike-threshold", dest="spike_threshold_ms", type=float)
        if learner:
            sp.add_argument("--learner", choices=learners.LEARNERS)
            sp.add_argument("--smote", action="store_true")
            sp.add_argument("--min-samples-split", type=float)
            sp.add_argument("--max-depth", type=int, help="0 means unlimited")
            sp.add_argument("--n-estimators", type=int)
            sp.add_argument("--smote-k", type=int)
            sp.add_argument("--smote-percent", type=int)

    sp = sub.add_parser("generate", help="synthetic telemetry + spikes_truth.csv + topology.json")
    common(sp)
    sp.add_argument("--days", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-upstream", type=int, default=13)
    sp.add_argument("--spike-rate", type=float, default=0.034)
    sp.add_argument("--buildup-fraction", type=float, default=0.5)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("featurize", help="telemetry CSV -> labelled dataset CSV")
    common(sp)
    sp.add_argument("--in", dest="input")
    sp.add_argument("--topology")
    sp.add_argument("--out", required=True)
    sp.add_argument("--lags")
    sp.add_argument("--horizon", dest="horizon_min", type=int)
    sp.set_defaults(func=cmd_featurize)

    sp = sub.add_parser("train", help="fit a model on a dataset CSV")
    common(sp, learner=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--tune", action="store_true")
    sp.add_argument("--model-out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("explain", help="print a tree model as indented text")
    common(sp)
    sp.add_argument("--model")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("stage1", help="80/20 time-ordered evaluation row")
    common(sp, learner=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--tune", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_stage1)

    sp = sub.add_parser("backtest", help="rolling retrain/predict backtest -> report CSV")
    common(sp, learner=True)
    sp.add_argument("--in", dest="input")
    sp.add_argument("--topology")
    sp.add_argument("--L", dest="L_hours", type=float)
    sp.add_argument("--window", dest="window_min", type=int)
    sp.add_argument("--lags")
    sp.add_argument("--params-from", help="reuse hyperparameters stored in a model JSON")
    sp.add_argument("--report", required=True)
    sp.add_argument("--plot", help="also render the backtest as an image")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_backtest)

    sp = sub.add_parser("sweep", help="recall/precision across alarm thresholds")
    common(sp)
    sp.add_argument("--report", required=True)
    sp.add_argument("--from", dest="start", type=float, default=370.0)
    sp.add_argument("--to", dest="stop", type=float, default=490.0)
    sp.add_argument("--step", type=float, default=5.0)
    sp.add_argument("--out")
    sp.add_argument("--plot", help="also render the curve as an image")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, resolve(args))
    except (CliError, ValueError, KeyError, OSError, IndexError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"spikecast {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
