"""Operator-facing command surface.

Subcommands: gen-data, solve, train, eval, diagnose, param-count.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  --seed is universal, falling back to the CG_INVERT_SEED
environment variable when unset.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as cfgmod
from .data_metrics import (
    Dataset,
    gen_dataset,
    load_dataset,
    psnr,
    save_dataset,
    ssim,
)
from .drcgnet import (
    evaluate_mae,
    forward,
    load_checkpoint,
    param_count,
    save_checkpoint,
    train,
)
from .drcgnet.params import init_params
from .errors import CgInvertError, ConfigError, DataError, NumericalError
from .gcgls import diagnostics, solve
from .imageio import write_pgm


def _fmt(x):
    if isinstance(x, float):
        if np.isinf(x):
            return "inf"
        return repr(float(x))
    return str(x)


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CG_INVERT_SEED")
    return int(env) if env else None


def _load_cfg(args):
    sets = list(args.set or [])
    seed = _resolve_seed(args)
    cfg = cfgmod.RunConfig.load(args.config, overrides=sets)
    if seed is not None:
        cfg.values["train.seed"] = seed
        cfg.values["data.seed"] = seed
    return cfg


def _check_fingerprint(model, ds):
    from .data_metrics import fingerprint

    fp = fingerprint(model.fingerprint_config())
    if fp != ds.model_fingerprint:
        raise DataError(
            f"dataset fingerprint {ds.model_fingerprint} does not match the "
            f"configured sensing model {fp}")


def _image_domain(model, c):
    return model.phi @ c if model.phi is not None else c


# -- subcommands -----------------------------------------------------------------

def cmd_gen_data(args):
    cfg = _load_cfg(args)
    model = cfgmod.build_model(cfg)
    ds = gen_dataset(cfg.get("data.source"), model, cfg.get("data.snr_db"),
                     cfg.get("data.samples"), cfg.get("data.seed"))
    save_dataset(ds, args.out)
    print(f"dataset {ds.dataset_fingerprint} ({len(ds)} samples) -> {args.out}")
    return 0


def _solve_one(i, pair, model, p, r, scfg, out_dir, repro):
    y, c_true = pair
    t0 = time.perf_counter()
    rep = solve(model, y, p, r, scfg)
    seconds = 0.0 if repro else time.perf_counter() - t0
    s_hat = _image_domain(model, rep.c_star)
    s_true = _image_domain(model, c_true)
    side = model.side
    write_pgm(os.path.join(out_dir, f"c_{i}.pgm"),
              np.clip(s_hat, 0.0, 1.0).reshape(side, side))
    rep.c_star.astype("<f8").tofile(os.path.join(out_dir, f"c_{i}.f64"))
    with open(os.path.join(out_dir, f"trace_{i}.csv"), "w") as fh:
        fh.write("iter,block,F,step_norm,eta\n")
        for t in rep.state.trace:
            fh.write(f"{t.index},{t.block},{_fmt(t.f_value)},"
                     f"{_fmt(t.step_norm)},{_fmt(t.eta)}\n")
    return {
        "id": i,
        "psnr": psnr(s_hat, s_true),
        "ssim": ssim(s_hat, s_true),
        "F_final": rep.f_final,
        "stationarity_u": rep.stationarity_u,
        "stationarity_z": rep.stationarity_z.absolute,
        "iters": rep.iterations,
        "seconds": seconds,
    }


def cmd_solve(args):
    cfg = _load_cfg(args)
    model = cfgmod.build_model(cfg)
    ds = load_dataset(args.dataset)
    _check_fingerprint(model, ds)
    p = cfgmod.build_covariance(cfg, model.n)
    r = cfgmod.build_regularizer(cfg)
    scfg = cfgmod.build_solver_config(cfg)
    os.makedirs(args.out, exist_ok=True)

    worker = lambda i: _solve_one(i, ds.pairs[i], model, p, r, scfg,
                                  args.out, args.repro)
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(worker, range(len(ds))))
    else:
        rows = [worker(i) for i in range(len(ds))]

    cols = ["id", "psnr", "ssim", "F_final", "stationarity_u",
            "stationarity_z", "iters", "seconds"]
    with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in sorted(rows, key=lambda r: r["id"]):
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")
    print(f"solved {len(ds)} samples -> {args.out}/metrics.csv")
    return 0


def _split_validation(ds, fraction):
    if fraction <= 0.0 or len(ds) < 2:
        return ds.pairs, None
    n_val = max(1, int(round(fraction * len(ds))))
    return ds.pairs[:-n_val], ds.pairs[-n_val:]


def cmd_train(args):
    cfg = _load_cfg(args)
    model = cfgmod.build_model(cfg)
    ds = load_dataset(args.dataset)
    _check_fingerprint(model, ds)
    net_cfg = cfgmod.build_net_config(cfg)
    train_cfg = cfgmod.build_train_config(cfg)
    cov_init = cfgmod.default_cov_init(cfg)
    train_pairs, val_pairs = _split_validation(ds, cfg.get("train.val_fraction"))
    if train_cfg.patience is not None and val_pairs is None:
        raise ConfigError("train.patience needs train.val_fraction > 0")

    params, history = train(train_pairs, model, net_cfg, train_cfg,
                            val_pairs=val_pairs, cov_init=cov_init)
    losses = {"train_mae": history["train_mae"], "val_mae": history["val_mae"]}
    save_checkpoint(args.out, params, train_cfg=train_cfg,
                    epoch=len(history["train_mae"]), losses=losses,
                    extra={"model_fingerprint": ds.model_fingerprint})
    with open(os.path.join(args.out, "loss_history.csv"), "w") as fh:
        fh.write("epoch,train_mae,val_mae\n")
        for e, tm in enumerate(history["train_mae"]):
            vm = history["val_mae"][e] if e < len(history["val_mae"]) else ""
            fh.write(f"{e},{_fmt(tm)},{_fmt(vm) if vm != '' else ''}\n")
    print(f"trained {len(history['train_mae'])} epochs; final train MAE "
          f"{history['train_mae'][-1]:.6g} -> {args.out}")
    return 0


def cmd_eval(args):
    cfg = _load_cfg(args)
    model = cfgmod.build_model(cfg)
    ds = load_dataset(args.dataset)
    _check_fingerprint(model, ds)
    params, manifest = load_checkpoint(args.checkpoint)
    net_cfg = cfgmod.build_net_config(cfg)
    if manifest["net"] != net_cfg.to_dict():
        mismatched = [k for k, v in net_cfg.to_dict().items()
                      if manifest["net"].get(k) != v]
        raise ConfigError(
            f"checkpoint network config does not match: {', '.join(mismatched)}")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i, (y, c_true) in enumerate(ds.pairs):
        c_hat, _ = forward(y, model, params, want_tape=False)
        s_hat = _image_domain(model, c_hat)
        s_true = _image_domain(model, c_true)
        rows.append({
            "id": i,
            "psnr": psnr(s_hat, s_true),
            "ssim": ssim(s_hat, s_true),
            "mae": float(np.abs(c_hat - c_true).sum()) / model.n,
        })
    with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
        fh.write("id,psnr,ssim,mae\n")
        for row in rows:
            fh.write(f"{row['id']},{_fmt(row['psnr'])},{_fmt(row['ssim'])},"
                     f"{_fmt(row['mae'])}\n")
    avg_mae = float(np.mean([r["mae"] for r in rows]))
    print(f"eval MAE {avg_mae!r} over {len(rows)} samples -> {args.out}/metrics.csv")
    return 0


def cmd_diagnose(args):
    cfg = _load_cfg(args)
    model = cfgmod.build_model(cfg)
    ds = load_dataset(args.dataset)
    _check_fingerprint(model, ds)
    p = cfgmod.build_covariance(cfg, model.n)
    r = cfgmod.build_regularizer(cfg)
    scfg = cfgmod.build_solver_config(cfg)
    y, _ = ds.pairs[args.index]
    rep = solve(model, y, p, r, scfg)
    summ = diagnostics(rep)
    out = {
        "f_init": rep.f_init,
        "f_final": rep.f_final,
        "iterations": rep.iterations,
        "final_grad_u_norm": summ.final_grad_u_norm,
        "final_z_residual_abs": summ.final_z_residual.absolute,
        "final_z_residual_rel": summ.final_z_residual.relative,
        "telescoping_lhs": summ.telescoping_lhs,
        "telescoping_rhs": summ.telescoping_rhs,
        "telescoping_holds": summ.telescoping_holds,
        "worst_margin": min(summ.margins) if summ.margins else None,
        "z_steps": len(summ.z_records),
        "u_steps": len(summ.u_records),
    }
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_param_count(args):
    cfg = _load_cfg(args)
    side = cfg.get("sensing.side")
    net_cfg = cfgmod.build_net_config(cfg)
    print(param_count(net_cfg, side * side))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cginvert",
        description="Compound-Gaussian solvers for linear inverse problems")
    parser.add_argument("--seed", type=int, default=None,
                        help="universal seed (fallback: CG_INVERT_SEED)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", required=False, default=None)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a configuration value")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("gen-data", help="synthesize a measurement dataset")
    add_common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("solve", help="run the iterative solver over a dataset")
    add_common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--repro", action="store_true",
                    help="write zero seconds for byte-stable outputs")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("train", help="train the unrolled network")
    add_common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint over a dataset")
    add_common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("diagnose", help="convergence diagnostics for one sample")
    add_common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("param-count", help="print the learnable parameter count")
    add_common(sp)
    sp.set_defaults(func=cmd_param_count)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except CgInvertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
