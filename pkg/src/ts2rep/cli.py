"""Command-line entry point: ``ts2rep train|encode|eval|diag``.

stdout carries one JSON document per invocation; logs go to stderr.
Exit codes: 0 success, 2 bad flags, 3 data or protocol error, 4 non-finite loss.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly import AnomalyConfig, delay_adjusted_prf, resolve_delay, run_detection
from .classification import fit_eval_classifier, instance_repr
from .data_io import (DataError, Dataset, add_time_features, fingerprint, infer_freq,
                      load_classification_tsv, load_forecast_csv, parse_timestamps,
                      read_timeseries_csv, zscore_normalize)
from .diagnostics import collapse_report, export_heatmap
from .encoder import ALL_ONES, EncoderConfig, config_from_params, encode_numpy, load_params
from .forecasting import evaluate_forecasting
from .trainer import NonFiniteLossError, TrainConfig, default_iters, fit, save_checkpoint

log = logging.getLogger("ts2rep")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONFINITE = 0, 2, 3, 4


def _iters(value: str):
    if value == "auto":
        return "auto"
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError("iters must be >= 0")
    return n


def _delay(value: str):
    return "auto" if value == "auto" else int(value)


def _int_list(value: str) -> list[int]:
    try:
        out = [int(v) for v in value.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("horizons must be positive integers")
    return out


def _ratios(value: str) -> tuple[float, float, float]:
    parts = tuple(float(v) for v in value.split(","))
    if len(parts) != 3 or min(parts) < 0 or sum(parts) <= 0:
        raise argparse.ArgumentTypeError("split must be three non-negative numbers, e.g. 0.6,0.2,0.2")
    return parts


def _frac(value: str) -> float:
    f = float(value)
    if not 0 < f < 1:
        raise argparse.ArgumentTypeError("fraction must lie in (0, 1)")
    return f


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ts2rep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ts2rep {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp, required=True):
        sp.add_argument("--data", required=required, help="TSV (classification) or CSV (time-indexed) file")
        sp.add_argument("--format", choices=["tsv", "csv"], help="default: from the file extension")
        sp.add_argument("--target", help="CSV: forecast only this column (univariate mode)")
        sp.add_argument("--split", type=_ratios, default=(0.6, 0.2, 0.2), help="CSV train/val/test ratios")
        sp.add_argument("--train-frac", type=_frac, help="CSV: use the first fraction as the training split")
        sp.add_argument("--time-features", action="store_true", help="CSV: append calendar channels")

    t = sub.add_parser("train", help="train an encoder on unlabeled series")
    data_flags(t)
    t.add_argument("--repr-dims", type=int, default=320)
    t.add_argument("--hidden-dims", type=int, default=64)
    t.add_argument("--depth", type=int, default=10)
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--iters", type=_iters, default="auto")
    t.add_argument("--max-len", type=int, default=3000)
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--out", required=True, help="checkpoint path")
    for flag in ("no-temporal", "no-instance", "no-hierarchical", "no-crop", "no-mask"):
        t.add_argument(f"--{flag}", action="store_true", help="ablation switch")

    e = sub.add_parser("encode", help="write representations as CSV")
    e.add_argument("--ckpt", required=True)
    data_flags(e)
    e.add_argument("--level", choices=["timestamp", "instance"], default="timestamp")
    e.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="downstream evaluation protocols")
    evs = ev.add_subparsers(dest="task", required=True)
    c = evs.add_parser("cls", help="kernel classifier on max-pooled representations")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--train", required=True, help="labeled TSV")
    c.add_argument("--test", required=True, help="labeled TSV")
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--out", help="also write the report here")
    f = evs.add_parser("forecast", help="ridge head on last-step representations")
    f.add_argument("--ckpt", required=True)
    data_flags(f)
    f.add_argument("--horizons", type=_int_list, default=[24])
    f.add_argument("--context", type=int, help="encoder window length (default: receptive field, <= 3000)")
    f.add_argument("--seed", type=int, default=42)
    f.add_argument("--out")
    a = evs.add_parser("anomaly", help="streaming masked-vs-unmasked scoring")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--data", required=True, help="CSV with timestamp, value[, label]")
    a.add_argument("--train-frac", type=_frac, default=0.5)
    a.add_argument("--delay", type=_delay, default="auto")
    a.add_argument("--beta", type=float, default=4.0)
    a.add_argument("--window", type=int, default=21)
    a.add_argument("--diff-order", type=int, default=0)
    a.add_argument("--cold-start", action="store_true", help="threshold statistics accumulate online")
    a.add_argument("--context", type=int)
    a.add_argument("--seed", type=int, default=42)
    a.add_argument("--scores", help="write per-point JSON lines {t, alpha, alpha_adj, is_anomaly}")
    a.add_argument("--out")

    d = sub.add_parser("diag", help="representation diagnostics")
    ds = d.add_subparsers(dest="what", required=True)
    col = ds.add_parser("collapse", help="alpha/beta positional-collapse metrics")
    col.add_argument("--ckpt", required=True)
    data_flags(col)
    hm = ds.add_parser("heatmap", help="top-variance dimensions of one series as CSV")
    hm.add_argument("--ckpt", required=True)
    data_flags(hm)
    hm.add_argument("--index", type=int, default=0, help="series index")
    hm.add_argument("--k", type=int, default=16)
    hm.add_argument("--out", required=True)
    return p


def _format(args) -> str:
    if args.format:
        return args.format
    return "tsv" if str(args.data).lower().endswith((".tsv", ".txt")) else "csv"


def load_data(args) -> Dataset:
    """Load and z-score ``--data`` according to the shared data flags."""
    if _format(args) == "tsv":
        ds = load_classification_tsv(args.data)
    else:
        ratios = args.split
        if args.train_frac is not None:
            ratios = (args.train_frac, 0.0, 1 - args.train_frac)
        ds = load_forecast_csv(args.data, args.target, ratios)
        if args.time_features:
            ds = add_time_features(ds)
    return zscore_normalize(ds)


def _all_series(ds: Dataset) -> np.ndarray:
    if ds.kind == "classification":
        return ds.train
    return np.concatenate([v for v in ds.splits().values() if v.shape[1]], axis=1)


def manifest(args, **extra) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    paths = [getattr(args, k) for k in ("data", "train", "test") if getattr(args, k, None)]
    m = {"subcommand": " ".join(filter(None, [args.command, getattr(args, "task", None),
                                                getattr(args, "what", None)])),
         "flags": flags, "seed": getattr(args, "seed", None),
         "checkpoint": getattr(args, "ckpt", None) or getattr(args, "out", None),
         "dataset_fingerprint": fingerprint(*paths) if paths else None,
         "version": __version__}
    m.update(extra)
    return m


def _load_ckpt(path: str, n_features: int):
    params = load_params(path)
    expected = params["proj.W"].shape[1]
    if expected != n_features:
        raise DataError(f"data has F={n_features} features but checkpoint {path} expects F={expected}")
    return params


def _emit(report: dict, out: str | None = None) -> None:
    text = json.dumps(report, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    sys.stdout.write(text + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.ndarray, tuple)):
        return list(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def cmd_train(args) -> dict:
    ds = load_data(args)
    train = ds.train
    n_points = int(np.prod(train.shape))
    iters = default_iters(n_points) if args.iters == "auto" else args.iters
    enc_cfg = EncoderConfig(input_dims=train.shape[-1], hidden_dims=args.hidden_dims,
                            output_dims=args.repr_dims, depth=args.depth)
    cfg = TrainConfig(batch_size=args.batch, learning_rate=args.lr, iters=iters,
                      max_train_length=args.max_len, seed=args.seed,
                      temporal=not args.no_temporal, instance=not args.no_instance,
                      hierarchical=not args.no_hierarchical, random_crop=not args.no_crop,
                      timestamp_mask=not args.no_mask)
    log.info("training %d iterations on %d points", iters, n_points)
    log_path = f"{args.out}.log.jsonl"
    state = fit(train, enc_cfg, cfg, log_path=log_path)
    save_checkpoint(state, args.out)
    m = manifest(args, resolved_iters=iters, optimizer="adam(0.9, 0.999, 1e-8)")
    Path(f"{args.out}.manifest.json").write_text(json.dumps(m, indent=2, default=_json_default) + "\n")
    return {"checkpoint": args.out, "log": log_path, "iters": iters,
            "final_loss": state.loss_history[-1] if state.loss_history else None, "manifest": m}


def cmd_encode(args) -> dict:
    ds = load_data(args)
    x = _all_series(ds)
    params = _load_ckpt(args.ckpt, x.shape[-1])
    K = config_from_params(params).output_dims
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        if args.level == "instance":
            reprs = instance_repr(params, x)
            w.writerow(["series_id"] + [f"dim_{k}" for k in range(K)])
            for i, row in enumerate(reprs):
                w.writerow([i] + [repr(float(v)) for v in row])
            rows = len(reprs)
        else:
            reprs = encode_numpy(params, x, ALL_ONES)
            w.writerow(["series_id", "t"] + [f"dim_{k}" for k in range(K)])
            rows = 0
            for i, series in enumerate(reprs):
                # padding at the end of shorter series is not part of the data
                valid = ~np.isnan(x[i]).all(axis=-1)
                last = int(np.nonzero(valid)[0].max()) + 1 if valid.any() else 0
                for t in range(last):
                    w.writerow([i, t] + [repr(float(v)) for v in series[t]])
                    rows += 1
    return {"out": args.out, "rows": rows, "dims": K, "manifest": manifest(args)}


def cmd_eval_cls(args) -> dict:
    ds = zscore_normalize(load_classification_tsv(args.train, args.test))
    params = _load_ckpt(args.ckpt, ds.train.shape[-1])
    res = fit_eval_classifier(instance_repr(params, ds.train), ds.train_labels,
                              instance_repr(params, ds.test), ds.test_labels, seed=args.seed)
    return {"dataset": Path(args.train).stem, **res, "seed": args.seed, "manifest": manifest(args)}


def cmd_eval_forecast(args) -> dict:
    ds = load_data(args)
    if ds.kind != "timeseries":
        raise DataError("forecasting needs a time-indexed CSV")
    params = _load_ckpt(args.ckpt, ds.train.shape[-1])
    n_targets = len(ds.columns) - (7 if args.time_features else 0)
    results = evaluate_forecasting(params, ds.splits(), args.horizons, n_targets, args.context)
    mode = "uni" if n_targets == 1 else "multi"
    return {"dataset": Path(args.data).stem, "mode": mode, "horizons": results, "manifest": manifest(args)}


def cmd_eval_anomaly(args) -> dict:
    df, labels, ts_col = read_timeseries_csv(args.data)
    value_cols = [c for c in df.columns if c != ts_col]
    if len(value_cols) != 1:
        raise DataError(f"anomaly detection expects one value column, found {value_cols}")
    values = df[value_cols[0]].to_numpy(dtype=np.float64)
    n_train = int(round(args.train_frac * len(values)))
    if n_train <= args.window + args.diff_order + 1:
        raise DataError(f"training part ({n_train} points) is shorter than the score window")
    freq = "other"
    try:
        freq = infer_freq(parse_timestamps(df[ts_col]))
    except (ValueError, TypeError):
        log.warning("could not parse timestamps; delay defaults to 7")
    delay = resolve_delay(freq) if args.delay == "auto" else args.delay
    mean, std = np.nanmean(values[:n_train]), np.nanstd(values[:n_train])
    x = (values - mean) / (std if std > 0 else 1.0)
    params = _load_ckpt(args.ckpt, 1)
    cfg = AnomalyConfig(beta=args.beta, window=args.window, delay=delay, diff_order=args.diff_order)
    out = run_detection(params, x, n_train, cfg, context=args.context, cold_start=args.cold_start)
    if args.scores:
        with open(args.scores, "w") as fh:
            for t in range(len(x)):
                a, adj = out["alpha"][t], out["alpha_adj"][t]
                fh.write(json.dumps({"t": t, "alpha": None if np.isnan(a) else float(a),
                                     "alpha_adj": None if not np.isfinite(adj) else float(adj),
                                     "is_anomaly": bool(out["is_anomaly"][t])}) + "\n")
    report = {"dataset": Path(args.data).stem, "freq": freq, "delay": delay,
              "n_flagged": int(out["is_anomaly"][n_train:].sum()),
              "manifest": manifest(args, resolved_delay=delay)}
    if labels is not None:
        # warm-up points have no adjusted score and are left out of the metrics
        ready = ~np.isnan(out["alpha_adj"])
        ready[:n_train] = False
        p, r, f1 = delay_adjusted_prf(out["is_anomaly"][ready], labels[ready].astype(bool), delay)
        report.update(precision=p, recall=r, f1=f1)
    return report


def cmd_diag(args) -> dict:
    ds = load_data(args)
    x = _all_series(ds)
    params = _load_ckpt(args.ckpt, x.shape[-1])
    if args.what == "collapse":
        return {**collapse_report(params, x).to_dict(), "manifest": manifest(args)}
    if not 0 <= args.index < len(x):
        raise DataError(f"series index {args.index} out of range for {len(x)} series")
    mat = export_heatmap(params, x[args.index], args.out, args.k)
    return {"out": args.out, "rows": int(mat.shape[0]), "columns": int(mat.shape[1]),
            "manifest": manifest(args)}


def _thread_limit():
    n = os.environ.get("TS2REP_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "eval":
        handler = {"cls": cmd_eval_cls, "forecast": cmd_eval_forecast,
                   "anomaly": cmd_eval_anomaly}[args.task]
    else:
        handler = {"train": cmd_train, "encode": cmd_encode, "diag": cmd_diag}[args.command]
    try:
        with _thread_limit():
            report = handler(args)
    except NonFiniteLossError as exc:
        log.error("%s", exc)
        return EXIT_NONFINITE
    except (DataError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    _emit(report, getattr(args, "out", None) if args.command == "eval" else None)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
