"""Experiment command line: datasets, training, evaluation, and timing.

Verbs: gen-data, train, finetune, evaluate, bench, oracle. A --config
file of key=value lines supplies defaults for the chosen verb; explicit
flags win. Tables land under --out as results.csv, summary.json,
training_log.csv, or bench.json.

Result rows carry one (method, channel, budget) triple each. Methods
that solve a whole budget grid in one call (the warm-started solvers
and the batched network forwards) report an equal per-row share of the
wall time; per-budget methods are timed individually.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gcnmodel as gm
from . import netgen as ng
from . import oracle as oc
from . import scacore as sc
from . import trainloop as tl
from .metrics import wsee_total

RESULTS_SCHEMA = "wsee-results v1"
SUMMARY_SCHEMA_VERSION = 1
# "stationary" summary statistic: rows with 5 < Pm <= 10 dBW
STATIONARY_RANGE_DBW = (5.0, 10.0)
EVAL_METHODS = ("sca", "tr-sca", "usca", "mlp-usca", "gcn", "max-pow", "oracle")
CHECKPOINT_METHODS = {"usca": gm.VARIANT_USCA, "mlp-usca": gm.VARIANT_MLP,
                      "gcn": gm.VARIANT_GCN}
TRAIN_LOG_COLUMNS = ("epoch", "phase", "block", "train_loss", "val_wsee", "lrs")


@dataclass
class ResultRow:
    method: str
    channel: int
    pm_dbw: float
    wsee: float
    time_s: float
    powers: np.ndarray


# ---------------------------------------------------------------------------
# Files

def write_results(path, rows) -> None:
    if not rows:
        raise ValueError("no result rows to write")
    L = rows[0].powers.size
    with open(path, "w", newline="") as fh:
        fh.write(f"# {RESULTS_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["method", "channel", "pm_dbw", "wsee", "time_s"]
                        + [f"p_{i}" for i in range(L)])
        for r in rows:
            writer.writerow([r.method, r.channel, float(r.pm_dbw), float(r.wsee),
                             float(r.time_s)] + [float(p) for p in r.powers])


def read_results(path):
    """Parse a results table back into ResultRow objects."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {RESULTS_SCHEMA}":
            raise ValueError(f"unsupported results file, expected '# {RESULTS_SCHEMA}'")
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["method", "channel", "pm_dbw", "wsee", "time_s"]:
            raise ValueError("unexpected results columns")
        rows = []
        for rec in reader:
            rows.append(ResultRow(
                method=rec[0], channel=int(rec[1]), pm_dbw=float(rec[2]),
                wsee=float(rec[3]), time_s=float(rec[4]),
                powers=np.array([float(x) for x in rec[5:]])))
    return rows


def summarize(rows, pm_grid_dbw) -> dict:
    grid = [float(x) for x in pm_grid_dbw]
    lo, hi = STATIONARY_RANGE_DBW
    methods = {}
    for method in sorted({r.method for r in rows}):
        sub = [r for r in rows if r.method == method]
        channels = sorted({r.channel for r in sub})
        curve = []
        for pm in grid:
            vals = [r.wsee for r in sub if r.pm_dbw == pm]
            curve.append(float(np.mean(vals)) if vals else None)
        per_channel = [float(np.mean([r.wsee for r in sub if r.channel == c]))
                       for c in channels]
        stationary = [r.wsee for r in sub if lo < r.pm_dbw <= hi]
        methods[method] = {
            "mean_wsee": float(np.mean([r.wsee for r in sub])),
            "curve": curve,
            "channels": channels,
            "per_channel_mean": per_channel,
            "peak_wsee": float(max(v for v in curve if v is not None)),
            "stationary_wsee": float(np.mean(stationary)) if stationary else None,
            "total_time_s": float(np.sum([r.time_s for r in sub])),
        }
    return {"schema_version": SUMMARY_SCHEMA_VERSION, "pm_grid_dbw": grid,
            "methods": methods}


def write_training_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAIN_LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in TRAIN_LOG_COLUMNS})


def load_labels(path, num_channels, pm_grid_dbw, method="sca"):
    """Reference allocations for supervision, keyed on (channel, budget)."""
    rows = [r for r in read_results(path) if r.method == method]
    if not rows:
        raise ValueError(f"no '{method}' rows in {path}")
    L = rows[0].powers.size
    table = {(r.channel, round(r.pm_dbw, 6)): r.powers for r in rows}
    K = len(pm_grid_dbw)
    labels = np.empty((num_channels, K, L))
    for c in range(num_channels):
        for k, pm in enumerate(pm_grid_dbw):
            key = (c, round(float(pm), 6))
            if key not in table:
                raise ValueError(
                    f"supervision table lacks channel {c} at {pm:g} dBW")
            labels[c, k] = table[key]
    return labels


# ---------------------------------------------------------------------------
# Evaluation

def apply_envelope(rows) -> None:
    """Keep the previous allocation whenever raising the budget would
    lower the objective; per method and channel, in budget order."""
    groups = {}
    for r in rows:
        groups.setdefault((r.method, r.channel), []).append(r)
    for group in groups.values():
        group.sort(key=lambda r: r.pm_dbw)
        for prev, cur in zip(group, group[1:]):
            if cur.wsee < prev.wsee:
                cur.wsee = prev.wsee
                cur.powers = prev.powers.copy()


def _evaluate_method(method, H, cfg, grid_dbw, models, oracle_grid):
    pm_w = 10.0 ** (np.asarray(grid_dbw, dtype=float) / 10.0)
    K = pm_w.size
    L = H.shape[0]
    if method == "sca":
        t0 = time.perf_counter()
        P, _ = sc.sca(H, cfg, grid_dbw)
        times = np.full(K, (time.perf_counter() - t0) / K)
    elif method == "tr-sca":
        t0 = time.perf_counter()
        P, _ = sc.tr_sca(H, cfg, grid_dbw)
        times = np.full(K, (time.perf_counter() - t0) / K)
    elif method == "usca":
        t0 = time.perf_counter()
        P = gm.usca_forward(pm_w, H, models["usca"])
        times = np.full(K, (time.perf_counter() - t0) / K)
    elif method == "gcn":
        t0 = time.perf_counter()
        P = gm.plain_gcn_forward(pm_w, H, models["gcn"])
        times = np.full(K, (time.perf_counter() - t0) / K)
    elif method == "mlp-usca":
        P = np.empty((K, L))
        times = np.empty(K)
        for k in range(K):
            t0 = time.perf_counter()
            P[k] = gm.mlp_usca_forward(float(pm_w[k]), H, models["mlp-usca"])
            times[k] = time.perf_counter() - t0
    elif method == "max-pow":
        P = np.empty((K, L))
        times = np.empty(K)
        for k in range(K):
            t0 = time.perf_counter()
            P[k] = gm.max_pow(float(pm_w[k]), L)
            times[k] = time.perf_counter() - t0
    elif method == "oracle":
        P = np.empty((K, L))
        times = np.empty(K)
        for k in range(K):
            t0 = time.perf_counter()
            P[k], _ = oc.grid_search_wsee(H, float(pm_w[k]), cfg, oracle_grid)
            times[k] = time.perf_counter() - t0
    else:
        raise ValueError(f"unknown method {method!r}")
    return P, times


def run_evaluation(channels, cfg, grid_dbw, methods, models, oracle_grid=None,
                   envelope=False):
    pm_w = 10.0 ** (np.asarray(grid_dbw, dtype=float) / 10.0)
    rows = []
    for ci, H in enumerate(channels):
        for method in methods:
            P, times = _evaluate_method(method, H, cfg, grid_dbw, models,
                                        oracle_grid)
            for k in range(pm_w.size):
                if np.any(P[k] < 0) or np.any(P[k] > pm_w[k] * (1 + 1e-12)):
                    raise AssertionError(
                        f"infeasible allocation from {method} at {grid_dbw[k]} dBW")
                rows.append(ResultRow(method=method, channel=ci,
                                      pm_dbw=float(grid_dbw[k]),
                                      wsee=wsee_total(P[k], H, cfg),
                                      time_s=float(times[k]), powers=P[k].copy()))
    if envelope:
        apply_envelope(rows)
    return rows


# ---------------------------------------------------------------------------
# Benchmarks

def power_fit_residual(sizes, times, exponent) -> float:
    """Least-squares residual of fitting time = a + b * size**exponent."""
    x = np.asarray(sizes, dtype=float) ** exponent
    A = np.stack([np.ones_like(x), x], axis=1)
    t = np.asarray(times, dtype=float)
    coef, *_ = np.linalg.lstsq(A, t, rcond=None)
    r = A @ coef - t
    return float(r @ r)


def _median_time(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def run_bench(H, cfg, grid_dbw, methods, models, repeats, scaling_sizes, seed):
    pm_w = 10.0 ** (np.asarray(grid_dbw, dtype=float) / 10.0)
    runners = {
        "sca": lambda: sc.sca(H, cfg, grid_dbw),
        "tr-sca": lambda: sc.tr_sca(H, cfg, grid_dbw),
        "usca": lambda: gm.usca_forward(pm_w, H, models["usca"]),
        "gcn": lambda: gm.plain_gcn_forward(pm_w, H, models["gcn"]),
        "mlp-usca": lambda: [gm.mlp_usca_forward(float(p), H, models["mlp-usca"])
                             for p in pm_w],
        "max-pow": lambda: [gm.max_pow(float(p), H.shape[0]) for p in pm_w],
    }
    timings = {m: _median_time(runners[m], repeats) for m in methods}

    scaling = {"sizes": [], "median_forward_s": []}
    if scaling_sizes:
        params = models.get("usca") or gm.init_usca(3, np.random.default_rng(seed))
        model = ng.path_loss_preset("wbs")
        for L in scaling_sizes:
            cfg_l = ng.SystemConfig(num_users=int(L), rng_seed=seed)
            Hl = ng.generate_channels(cfg_l, model, 1, seed=seed)[0]
            scaling["sizes"].append(int(L))
            scaling["median_forward_s"].append(
                _median_time(lambda: gm.usca_forward(pm_w, Hl, params), repeats))
        scaling["quadratic_residual"] = power_fit_residual(
            scaling["sizes"], scaling["median_forward_s"], 2)
        scaling["cubic_residual"] = power_fit_residual(
            scaling["sizes"], scaling["median_forward_s"], 3)
    return {"schema_version": SUMMARY_SCHEMA_VERSION, "repeats": repeats,
            "users": int(H.shape[0]), "pm_grid_size": int(pm_w.size),
            "timings_s": timings, "scaling": scaling}


# ---------------------------------------------------------------------------
# CLI plumbing

def _pm_grid(args):
    if args.pm_step <= 0:
        raise ValueError("--pm-step must be positive")
    if args.pm_max < args.pm_min:
        raise ValueError("--pm-max must not be below --pm-min")
    grid = np.arange(args.pm_min, args.pm_max + args.pm_step / 2, args.pm_step)
    return np.round(grid, 9)

def _parse_methods(text):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    if not methods:
        raise ValueError("need at least one method")
    for m in methods:
        if m not in EVAL_METHODS:
            raise ValueError(f"unknown method {m!r}, expected one of {EVAL_METHODS}")
    return methods


def _parse_checkpoints(pairs):
    table = {}
    for item in pairs or []:
        if "=" not in item:
            raise ValueError("--checkpoint expects method=path")
        method, path = item.split("=", 1)
        if method not in CHECKPOINT_METHODS:
            raise ValueError(f"no checkpoint slot for method {method!r}")
        table[method] = path
    return table


def _load_models(methods, checkpoint_table):
    models = {}
    for method in methods:
        if method not in CHECKPOINT_METHODS:
            continue
        if method not in checkpoint_table:
            raise ValueError(
                f"method '{method}' needs a model file: pass --checkpoint {method}=PATH")
        params, meta = gm.load_model(checkpoint_table[method])
        want = CHECKPOINT_METHODS[method]
        if meta.get("variant") != want:
            raise ValueError(
                f"checkpoint for '{method}' holds a '{meta.get('variant')}' model")
        models[method] = params
    return models


def _load_channels(args):
    channels, meta = ng.load_dataset(args.data)
    cfg = ng.system_from_meta(meta)
    if getattr(args, "max_channels", None):
        channels = channels[:args.max_channels]
    return channels, cfg


def apply_config_defaults(parser, path) -> None:
    actions = {a.dest: a for a in parser._actions}
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        dest = key.replace("-", "_")
        if dest not in actions:
            raise ValueError(f"{path}:{lineno}: unknown option {key!r}")
        action = actions[dest]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            overrides[dest] = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            overrides[dest] = [v for v in value.split() if v]
        elif action.type is not None:
            overrides[dest] = action.type(value)
        else:
            overrides[dest] = value
    parser.set_defaults(**overrides)


def _add_common(sub):
    sub.add_argument("--config", help="key=value defaults file; flags override")
    sub.add_argument("--seed", type=int, default=0)


def _add_grid(sub):
    sub.add_argument("--pm-min", type=float, default=-40.0)
    sub.add_argument("--pm-max", type=float, default=10.0)
    sub.add_argument("--pm-step", type=float, default=1.0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wsee", description="Power allocation experiment workbench.")
    subs = parser.add_subparsers(dest="verb", required=True)
    registry = {}

    g = subs.add_parser("gen-data", help="draw channel realizations")
    _add_common(g)
    g.add_argument("--out", required=True, help="output .npz path")
    g.add_argument("--num-channels", type=int, default=1000)
    g.add_argument("--users", type=int, default=8)
    g.add_argument("--bs", type=int, default=4)
    g.add_argument("--antennas", type=int, default=1)
    g.add_argument("--pl", default="wbs", choices=sorted(("wbs", "urb", "urb-sf",
                                                          "sub", "sub-sf")))
    g.add_argument("--cell-side", type=float, default=1.0)
    g.add_argument("--bandwidth", type=float, default=180e3)
    g.add_argument("--noise-figure", type=float, default=3.0)
    g.add_argument("--noise-density", type=float, default=-174.0)
    g.add_argument("--static-power", type=float, default=1.0)
    g.add_argument("--amp-inefficiency", type=float, default=4.0)
    g.set_defaults(func=cmd_gen_data)
    registry["gen-data"] = g

    t = subs.add_parser("train", help="train a model from scratch")
    _add_common(t)
    _add_grid(t)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--arch", default="usca", choices=sorted(gm.MODEL_VARIANTS))
    t.add_argument("--blocks", type=int, default=7)
    t.add_argument("--eta-m", type=float, default=0.0)
    t.add_argument("--eta-s", type=float, default=None)
    t.add_argument("--lambda-s", type=float, default=1e3)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--epochs", type=int, default=1000)
    t.add_argument("--patience1", type=int, default=50)
    t.add_argument("--patience2", type=int, default=100)
    t.add_argument("--minibatches", type=int, default=50)
    t.add_argument("--chunk-size", type=int, default=64)
    t.add_argument("--max-channels", type=int, default=None)
    t.add_argument("--supervise-from", default=None,
                   help="results.csv with reference rows for the supervised term")
    t.set_defaults(func=cmd_train)
    registry["train"] = t

    f = subs.add_parser("finetune", help="adapt a checkpoint to new data")
    _add_common(f)
    _add_grid(f)
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--model", required=True, help="checkpoint to start from")
    f.add_argument("--lr", type=float, default=5e-5)
    f.add_argument("--epochs", type=int, default=100)
    f.add_argument("--patience", type=int, default=100)
    f.add_argument("--pm-stride", type=float, default=1.0)
    f.add_argument("--eta-m", type=float, default=0.0)
    f.add_argument("--eta-s", type=float, default=None)
    f.add_argument("--lambda-s", type=float, default=1e3)
    f.add_argument("--max-channels", type=int, default=None)
    f.add_argument("--supervise-from", default=None)
    f.set_defaults(func=cmd_finetune)
    registry["finetune"] = f

    e = subs.add_parser("evaluate", help="tabulate methods over a dataset")
    _add_common(e)
    _add_grid(e)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--methods", default="sca,max-pow")
    e.add_argument("--checkpoint", action="append", metavar="METHOD=PATH")
    e.add_argument("--envelope", action="store_true",
                   help="never let reported efficiency drop as the budget grows")
    e.add_argument("--max-channels", type=int, default=None)
    e.add_argument("--oracle-points", type=int, default=401)
    e.set_defaults(func=cmd_evaluate)
    registry["evaluate"] = e

    b = subs.add_parser("bench", help="wall-clock comparison on one channel")
    _add_common(b)
    _add_grid(b)
    b.add_argument("--data", default=None, help="dataset; first channel is used")
    b.add_argument("--out", required=True)
    b.add_argument("--methods", default="sca,tr-sca,usca")
    b.add_argument("--checkpoint", action="append", metavar="METHOD=PATH")
    b.add_argument("--blocks", type=int, default=7,
                   help="block count for randomly initialized timing models")
    b.add_argument("--users", type=int, default=8)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--scaling-sizes", default="8,16,32,64,100")
    b.set_defaults(func=cmd_bench)
    registry["bench"] = b

    o = subs.add_parser("oracle", help="grid-search reference for tiny networks")
    _add_common(o)
    _add_grid(o)
    o.add_argument("--data", required=True)
    o.add_argument("--out", required=True)
    o.add_argument("--points", type=int, default=401)
    o.add_argument("--budget", type=float, default=1e8)
    o.add_argument("--max-channels", type=int, default=None)
    o.set_defaults(func=cmd_oracle)
    registry["oracle"] = o

    return parser, registry


# ---------------------------------------------------------------------------
# Verbs

def cmd_gen_data(args):
    cfg = ng.SystemConfig(
        num_bs=args.bs, num_users=args.users, antennas_per_bs=args.antennas,
        bandwidth=args.bandwidth, noise_figure=args.noise_figure,
        noise_density=args.noise_density, static_power=args.static_power,
        amp_inefficiency=args.amp_inefficiency, cell_side=args.cell_side,
        rng_seed=args.seed)
    model = ng.path_loss_preset(args.pl)
    channels = ng.generate_channels(cfg, model, args.num_channels, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ng.save_dataset(args.out, channels, cfg, model, args.seed)
    print(f"wrote {args.out}: {channels.shape[0]} channels, L={channels.shape[1]}")


def _train_data(args, channels, cfg, grid):
    labels = None
    eta_s = args.eta_s
    if args.supervise_from:
        labels = load_labels(args.supervise_from, channels.shape[0], grid)
        if eta_s is None:
            eta_s = 1.0
    if eta_s is None:
        eta_s = 0.0
    data = tl.TrainData(channels=channels, pm_grid_dbw=grid, cfg=cfg, labels=labels)
    return data, eta_s


def cmd_train(args):
    channels, cfg = _load_channels(args)
    grid = _pm_grid(args)
    data, eta_s = _train_data(args, channels, cfg, grid)
    loss_cfg = tl.LossConfig(eta_m=args.eta_m, eta_s=eta_s, lambda_s=args.lambda_s)
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_rows = []

    if args.arch == gm.VARIANT_GCN:
        params0 = gm.init_plain_gcn(rng)
        options = tl.FineTuneOptions(lr=args.lr, max_epochs=args.epochs,
                                     patience=args.patience1, loss=loss_cfg)
        params = tl.fine_tune(params0, data, options, rng, log_fn=log_rows.append)
    else:
        schedule = tl.TrainSchedule(
            num_blocks=args.blocks, l0=args.lr, max_epochs=args.epochs,
            patience_step1=args.patience1, patience_step2=args.patience2,
            minibatches_per_epoch=args.minibatches, chunk_size=args.chunk_size)
        params, milestones = tl.progressive_train(
            data, args.arch, schedule, loss_cfg, rng, log_fn=log_rows.append)
        for m in milestones:
            snap = gm.structure_params(m.params, args.arch,
                                       num_blocks=schedule.num_blocks,
                                       num_users=data.num_users)
            # drop blocks past the milestone so the file runs at its own depth
            if args.arch == gm.VARIANT_USCA:
                snap = gm.UscaParams(theta_emb=snap.theta_emb,
                                     theta_p=snap.theta_p[:m.block],
                                     theta_s=snap.theta_s[:m.block])
            else:
                snap = gm.MlpUscaParams(num_users=snap.num_users,
                                        emb_net=snap.emb_net,
                                        p_nets=snap.p_nets[:m.block],
                                        s_nets=snap.s_nets[:m.block])
            gm.save_model(out / f"milestone_{m.block}.npz", snap,
                          extra_meta={"milestone": m.block, "val_wsee": m.val_wsee})
    gm.save_model(out / "checkpoint.npz", params, extra_meta={"seed": args.seed})
    write_training_log(out / "training_log.csv", log_rows)
    print(f"wrote {out / 'checkpoint.npz'}")


def cmd_finetune(args):
    channels, cfg = _load_channels(args)
    grid = _pm_grid(args)
    data, eta_s = _train_data(args, channels, cfg, grid)
    params, _ = gm.load_model(args.model)
    loss_cfg = tl.LossConfig(eta_m=args.eta_m, eta_s=eta_s,
                             lambda_s=args.lambda_s,
                             selective_supervision=eta_s > 0)
    options = tl.FineTuneOptions(lr=args.lr, max_epochs=args.epochs,
                                 patience=args.patience,
                                 pm_stride_db=args.pm_stride, loss=loss_cfg)
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_rows = []
    tuned = tl.fine_tune(params, data, options, rng, log_fn=log_rows.append)
    gm.save_model(out / "checkpoint.npz", tuned, extra_meta={"seed": args.seed})
    write_training_log(out / "training_log.csv", log_rows)
    print(f"wrote {out / 'checkpoint.npz'}")


def cmd_evaluate(args):
    channels, cfg = _load_channels(args)
    grid = _pm_grid(args)
    methods = _parse_methods(args.methods)
    models = _load_models(methods, _parse_checkpoints(args.checkpoint))
    oracle_grid = oc.GridSpec(points_per_dim=args.oracle_points)
    rows = run_evaluation(channels, cfg, grid, methods, models,
                          oracle_grid=oracle_grid, envelope=args.envelope)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results(out / "results.csv", rows)
    with open(out / "summary.json", "w") as fh:
        json.dump(summarize(rows, grid), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out / 'results.csv'} ({len(rows)} rows)")


def cmd_oracle(args):
    channels, cfg = _load_channels(args)
    grid = _pm_grid(args)
    spec = oc.GridSpec(points_per_dim=args.points, budget=int(args.budget))
    rows = run_evaluation(channels, cfg, grid, ["oracle"], {}, oracle_grid=spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results(out / "results.csv", rows)
    with open(out / "summary.json", "w") as fh:
        json.dump(summarize(rows, grid), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out / 'results.csv'} ({len(rows)} rows)")


def cmd_bench(args):
    grid = _pm_grid(args)
    rng = np.random.default_rng(args.seed)
    if args.data:
        channels, cfg = _load_channels(args)
        H = channels[0]
    else:
        cfg = ng.SystemConfig(num_users=args.users, rng_seed=args.seed)
        H = ng.generate_channels(cfg, ng.path_loss_preset("wbs"), 1,
                                 seed=args.seed)[0]
    methods = _parse_methods(args.methods)
    table = _parse_checkpoints(args.checkpoint)
    models = _load_models([m for m in methods if m in table], table)
    # timing does not need trained weights; fill gaps with random models
    for method in methods:
        if method in CHECKPOINT_METHODS and method not in models:
            if method == "usca":
                models[method] = gm.init_usca(args.blocks, rng)
            elif method == "gcn":
                models[method] = gm.init_plain_gcn(rng)
            else:
                models[method] = gm.init_mlp_usca(H.shape[0], args.blocks, rng)
    sizes = [int(s) for s in args.scaling_sizes.split(",") if s.strip()]
    report = run_bench(H, cfg, grid, methods, models, args.repeats, sizes,
                       args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out / 'bench.json'}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, registry = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None):
            apply_config_defaults(registry[args.verb], args.config)
            args = parser.parse_args(argv)
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
