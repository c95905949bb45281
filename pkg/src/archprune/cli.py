"""Command-line harness.

    python -m archprune <command> [--config PATH] [--out DIR] [--seed N]
                                  [--jobs N] [--scale F] [--set key=value ...]

Commands: ap-train, baseline, transfer-grid, reshuffle-eval,
convergence-demo, bound-check, fetch-data.  Settings come from the
command's defaults (shrunk by ``--scale``), then the ``--config`` file
(key=value lines), then ``--set`` overrides; explicit values are never
rescaled.  Keys are either :class:`TwoTempConfig` fields or
:class:`Protocol` fields; anything else is rejected.  ``APDATA`` overrides
the dataset root (default ``./data``).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as datamod
from .baselines import imp_prune, layerwise_density, layerwise_reshuffle, random_prune, save_mask
from .gnuplot import write_dat, write_line_script
from .models import MaskedLogistic, MaskedMLP, save_checkpoint
from .optimizer import (
    ConvexInstance,
    TwoTempConfig,
    apply_overrides,
    dump_config,
    empirical_bound_check,
    reference_minimum,
    run_ap,
    run_ap_to_target,
    write_history_csv,
)
from .transfer import (
    TransferConfig,
    evaluate_accuracy,
    fine_tune,
    transfer_experiment,
    write_results_csv,
    write_summary_csv,
)

log = logging.getLogger("archprune")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
RESHUFFLE_HEADER = ["sparsity", "reshuffle_ours_mean", "reshuffle_ours_std", "reshuffle_imp_mean", "reshuffle_imp_std"]


@dataclass
class Protocol:
    dataset: str = "mnist"
    model: str = "mlp"
    train_classes: str = "0,1,2,3,4"
    new_classes: str = "5,6,7,8,9"
    hidden: int = 32
    sparsity: float = 0.9
    sparsities: str = "0.1,0.3,0.5,0.9,0.95,0.99"
    sizes: str = "5000,1000,500,100,50"
    sources: str = "ours,rnd,imp"
    method: str = "rnd"
    n_seeds: int = 5
    imp_rounds: int = 5
    retrain_iters: int = 500
    retrain_beta: float = 0.1
    retrain_batch: int = 32
    test_fraction: float = 0.2
    reshuffle_size: int = 500
    t_s_grid: str = "1000,10,1"
    gamma_retries: int = 3
    gamma_factor: float = 3.0
    train_fraction: float = 1.0
    synthetic_n: int = 4000
    synthetic_features: int = 64
    bound_dim: int = 5
    bound_T: str = "100,1000"
    bound_seeds: int = 20
    bound_steps: int = 100000


def _floats(text):
    return [float(s) for s in text.split(",") if s.strip()]


def _ints(text):
    return [int(float(s)) for s in text.split(",") if s.strip()]


AP_DEFAULTS = TwoTempConfig(t_l=100.0, t_s=10.0, gamma=0.01, target_sparsity=0.9, T=3000, c=0.01, beta=0.1,
                            batch_size=32, eps_theta=0.1, eps_w=0.01)

DEFAULTS = {
    "ap-train": (AP_DEFAULTS, Protocol()),
    "baseline": (AP_DEFAULTS, Protocol()),
    "transfer-grid": (AP_DEFAULTS, Protocol()),
    "reshuffle-eval": (AP_DEFAULTS, Protocol(sparsities="0.1,0.3,0.5,0.7,0.9,0.95,0.99")),
    "convergence-demo": (
        TwoTempConfig(t_l=1000.0, t_s=1000.0, gamma=0.03, target_sparsity=0.0, T=3000, c=0.02, beta=0.05,
                      batch_size=32, eps_theta=0.1, eps_w=0.01, full_loss=True),
        Protocol(model="logistic", train_classes="0,1", n_seeds=3),
    ),
    "bound-check": (TwoTempConfig(t_l=10.0, t_s=5.0, T=1000, c=0.5, eps_w=0.1), Protocol()),
    "fetch-data": (AP_DEFAULTS, Protocol()),
}


class UsageError(Exception):
    pass


def build_settings(command, config_path=None, overrides=(), seed=None, scale=1.0):
    ap, proto = DEFAULTS[command]
    if scale != 1.0:
        ap, proto = apply_scale(ap, proto, scale)
    pairs = []
    if config_path:
        for line in Path(config_path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                pairs.append(line)
    pairs.extend(overrides)
    ap_keys = {f.name for f in dataclasses.fields(TwoTempConfig)}
    proto_keys = {f.name for f in dataclasses.fields(Protocol)}
    ap_pairs, proto_pairs = [], []
    for pair in pairs:
        key = pair.split("=", 1)[0].strip()
        if key in ap_keys:
            ap_pairs.append(pair)
        elif key in proto_keys:
            proto_pairs.append(pair)
        else:
            raise UsageError(f"unknown key {key!r}")
    try:
        ap = apply_overrides(ap, ap_pairs)
        proto = apply_overrides(proto, proto_pairs)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if seed is not None:
        ap = ap.replace(seed=seed)
    return ap, proto


def apply_scale(ap, proto, scale):
    """Shrink iteration counts, hidden width and data sizes by ``scale``."""
    k = len(_ints(proto.new_classes)) or 1
    sizes = ",".join(str(max(k, int(round(s * scale)))) for s in _ints(proto.sizes))
    ap = ap.replace(T=max(1, int(round(ap.T * scale))))
    proto = dataclasses.replace(
        proto,
        hidden=max(4, int(round(proto.hidden * scale))),
        retrain_iters=max(1, int(round(proto.retrain_iters * scale))),
        sizes=sizes,
        reshuffle_size=max(k, int(round(proto.reshuffle_size * scale))),
        train_fraction=min(1.0, proto.train_fraction * scale),
        synthetic_n=max(10 * k, int(round(proto.synthetic_n * scale))),
        bound_steps=max(1000, int(round(proto.bound_steps * scale))),
    )
    return ap, proto


# -- data and models -------------------------------------------------------


def load_source(proto):
    if proto.dataset == "mnist":
        root = datamod.data_root()
        if not datamod.mnist_available(root):
            raise FileNotFoundError(
                f"MNIST IDX files not found under {root.resolve()}.\n"
                "Run `python -m archprune fetch-data` (uses the public mirrors, or the "
                "5000-image subset bundled with mlxtend when offline), or set APDATA."
            )
        return datamod.load_mnist(root)
    if proto.dataset == "synthetic":
        classes = set(_ints(proto.train_classes)) | set(_ints(proto.new_classes))
        n_classes = max(classes) + 1
        return datamod.synthetic(proto.synthetic_n, proto.synthetic_features, n_classes, seed=0,
                                 informative=max(2, proto.synthetic_features // 4))
    raise UsageError(f"unknown dataset {proto.dataset!r}")


def _shrink(ds, fraction, seed=0):
    if fraction >= 1.0:
        return ds
    classes = sorted(np.unique(ds.labels).tolist())
    per_class = min(int(np.sum(ds.labels == c)) for c in classes)
    return datamod.balanced_subsample(ds, classes, max(1, int(per_class * fraction)), seed)


def tasks(proto):
    """(train-task dataset, new-task retrain pool, new-task test set)."""
    full = load_source(proto)
    train = _shrink(datamod.class_task(full, _ints(proto.train_classes)), proto.train_fraction)
    new = datamod.class_task(full, _ints(proto.new_classes))
    pool, test = datamod.split(new, proto.test_fraction, seed=0)
    return train, pool, _shrink(test, proto.train_fraction)


def parent_model(proto, n_features, n_classes):
    if proto.model == "logistic":
        return MaskedLogistic(n_features)
    if proto.model == "mlp":
        return MaskedMLP.from_widths([n_features, proto.hidden, n_classes])
    raise UsageError(f"unknown model {proto.model!r}")


def transfer_config(proto):
    return TransferConfig(retrain_iters=proto.retrain_iters, beta=proto.retrain_beta,
                          batch_size=proto.retrain_batch, n_seeds=proto.n_seeds)


# -- mask generation -------------------------------------------------------


def _make_mask(args):
    source, parent, train, sparsity, seed, ap, proto = args
    if source == "ours":
        cfg = ap.replace(target_sparsity=sparsity, seed=seed)
        mask, state, _ = run_ap_to_target(parent, train, cfg, proto.gamma_retries, proto.gamma_factor)
        if not state.mask_frozen:
            log.warning("AP run (sparsity %s, seed %d) ended at sparsity %.4f", sparsity, seed, state.sparsity)
        return mask
    if source == "rnd":
        return random_prune(parent.D, sparsity, seed)
    if source == "imp":
        return imp_prune(parent, train, sparsity, proto.imp_rounds, ap.replace(seed=seed))
    raise UsageError(f"unknown mask source {source!r}")


def pmap(fn, items, jobs):
    """Order-preserving map, in worker processes when ``jobs > 1``."""
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def generate_masks(sources, parent, train, sparsities, ap, proto, jobs):
    """``{source: {sparsity: [mask per seed]}}``; AP and IMP runs use seeds ``ap.seed + k``."""
    keys = [(src, s, ap.seed + k) for src in sources for s in sparsities for k in range(proto.n_seeds)]
    masks = pmap(_make_mask, [(src, parent, train, s, seed, ap, proto) for src, s, seed in keys], jobs)
    out = {}
    for (src, s, _), m in zip(keys, masks):
        out.setdefault(src, {}).setdefault(s, []).append(m)
    return out


def _mask_name(source, sparsity, seed):
    return f"{source}_s{sparsity:g}_seed{seed}.txt"


# -- commands --------------------------------------------------------------


def cmd_fetch_data(ap, proto, out, jobs):
    root = datamod.data_root()
    how = datamod.fetch_mnist(root)
    print(f"MNIST available under {root} ({how})")
    return EXIT_OK


def cmd_ap_train(ap, proto, out, jobs):
    train, _, _ = tasks(proto)
    parent = parent_model(proto, train.features.shape[1], train.class_count)
    mask, state, bound = run_ap_to_target(parent, train, ap, proto.gamma_retries, proto.gamma_factor)
    write_history_csv(state.history, out / "history.csv")
    save_mask(mask, out / "mask.txt")
    save_checkpoint(state.model, out / "checkpoint.npz")
    (out / "config.txt").write_text(dump_config(ap))
    dens = layerwise_density(mask, parent.partition)
    print(f"surviving {int(mask.sum())}/{parent.D} (sparsity {1 - mask.mean():.4f}), frozen at {state.frozen_at}")
    print("layer densities: " + " ".join(f"{d:.4f}" for d in dens))
    print(f"max |w| over trajectory M={bound.M:.4g}, C={bound.C:.4g}")
    return EXIT_OK


def cmd_baseline(ap, proto, out, jobs):
    train, _, _ = tasks(proto)
    parent = parent_model(proto, train.features.shape[1], train.class_count)
    mask = _make_mask((proto.method, parent, train, proto.sparsity, ap.seed, ap, proto))
    path = out / _mask_name(proto.method, proto.sparsity, ap.seed)
    save_mask(mask, path)
    dens = layerwise_density(mask, parent.partition)
    print(f"{proto.method}: {int(mask.sum())}/{parent.D} surviving -> {path}")
    print("layer densities: " + " ".join(f"{d:.4f}" for d in dens))
    return EXIT_OK


def cmd_convergence_demo(ap, proto, out, jobs):
    classes = _ints(proto.train_classes)
    full = load_source(proto)
    train = _shrink(datamod.binary_task(full, classes[0], classes[1]), proto.train_fraction)
    parent = MaskedLogistic(train.features.shape[1])
    grid = _floats(proto.t_s_grid)
    runs = [(ap.replace(t_s=t_s, seed=ap.seed + k), t_s, k) for t_s in grid for k in range(proto.n_seeds)]
    results = pmap(_convergence_run, [(parent, train, cfg) for cfg, _, _ in runs], jobs)

    summary = []
    curves = {}
    for (cfg, t_s, k), (history, surviving) in zip(runs, results):
        write_history_csv(history, out / f"convergence_ts{t_s:g}_seed{k}.csv")
        summary.append((t_s, k, history[-1][1] if history else float("nan"), surviving))
        curves.setdefault(t_s, []).append([h[1] for h in history])
    with open(out / "convergence_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "seed", "final_loss", "surviving"])
        for t_s, k, loss, surv in summary:
            w.writerow([repr(t_s), k, repr(loss), surv])

    T = ap.T
    rows = [[i + 1] + [float(np.mean([c[i] for c in curves[t_s]])) for t_s in grid] for i in range(T)]
    write_dat(out / "convergence.dat", ["iter"] + [f"ts={t:g}" for t in grid], rows)
    legends = []
    for j, t_s in enumerate(grid):
        m = [s[3] for s in summary if s[0] == t_s]
        legends.append((j + 2, f"t_s={t_s:g}, |m|={int(np.round(np.mean(m)))}"))
    write_line_script(out / "convergence.gp", "convergence.dat", f"t_l={ap.t_l:g}", "iteration",
                      "objective", legends, logy=True)
    for t_s in grid:
        m = [s[3] for s in summary if s[0] == t_s]
        losses = [s[2] for s in summary if s[0] == t_s]
        print(f"t_s={t_s:g}: final objective {np.mean(losses):.4f}, |m| per seed {m}")
    return EXIT_OK


def _convergence_run(args):
    parent, train, cfg = args
    mask, state, _ = run_ap(parent, train, cfg)
    return state.history, int(mask.sum())


def cmd_transfer_grid(ap, proto, out, jobs):
    train, pool, test = tasks(proto)
    parent = parent_model(proto, train.features.shape[1], train.class_count)
    sparsities = _floats(proto.sparsities)
    sources = [s.strip() for s in proto.sources.split(",") if s.strip()]
    ok = True
    try:
        masks = generate_masks(sources, parent, train, sparsities, ap, proto, jobs)
    except Exception:
        log.exception("mask generation failed")
        return EXIT_PARTIAL
    (out / "masks").mkdir(exist_ok=True)
    for src, by_s in masks.items():
        for s, ms in by_s.items():
            for k, m in enumerate(ms):
                save_mask(m, out / "masks" / _mask_name(src, s, ap.seed + k))

    sizes = _ints(proto.sizes)
    reports = transfer_experiment(parent, masks, pool, test, sizes, transfer_config(proto), seed=ap.seed, jobs=jobs)
    done = {(r.source, r.sparsity, r.new_size) for r in reports}
    missing = [(src, s, n) for n in sizes for src in sources for s in sparsities if (src, s, n) not in done]
    if missing:
        ok = False
        log.warning("%d grid cells did not complete", len(missing))
    write_results_csv(reports, out / "transfer_results.csv", seed=ap.seed)
    write_summary_csv(reports, out / "transfer_summary.csv")

    for n in sorted({r.new_size for r in reports}, reverse=True):
        rows = []
        for s in sparsities:
            row = [s]
            for src in sources:
                rep = next((r for r in reports if r.source == src and r.sparsity == s and r.new_size == n), None)
                row += [rep.mean, rep.std] if rep else [None, None]
            rows.append(row)
        cols = ["sparsity"] + [f"{src}_{stat}" for src in sources for stat in ("mean", "std")]
        write_dat(out / f"transfer_size{n}.dat", cols, rows)
        write_line_script(out / f"transfer_size{n}.gp", f"transfer_size{n}.dat", f"|D_new| = {n}", "sparsity",
                          "test accuracy", [(2 + 2 * j, src) for j, src in enumerate(sources)], errorbars=True)
    for r in reports:
        print(f"{r.source:>5} sparsity={r.sparsity:<5g} size={r.new_size:<5d} acc={r.mean:.3f} ± {r.std:.3f}")
    return EXIT_OK if ok else EXIT_PARTIAL


def _reshuffle_cell(args):
    parent, masks, pool, test, config, seed0, shuffle_seed0 = args
    accs, checks = [], []
    for k in range(config.n_seeds):
        mask = masks[k % len(masks)]
        shuffled = layerwise_reshuffle(mask, parent.partition, shuffle_seed0 + k)
        before = layerwise_density(mask, parent.partition)
        after = layerwise_density(shuffled, parent.partition)
        checks.append((before, after))
        if not np.array_equal(before, after):
            raise AssertionError("layer-wise density changed under reshuffling")
        model = fine_tune(parent, shuffled, pool, config, seed0 + k)
        accs.append(evaluate_accuracy(model, shuffled, test))
    return accs, checks


def cmd_reshuffle_eval(ap, proto, out, jobs):
    train, pool, test = tasks(proto)
    parent = parent_model(proto, train.features.shape[1], train.class_count)
    sparsities = _floats(proto.sparsities)
    masks = generate_masks(["ours", "imp"], parent, train, sparsities, ap, proto, jobs)
    classes = sorted(np.unique(pool.labels).tolist())
    retrain = datamod.balanced_subsample(pool, classes, proto.reshuffle_size // len(classes), 0)
    config = transfer_config(proto)

    cells = [(src, s) for s in sparsities for src in ("ours", "imp")]
    args = [(parent, masks[src][s], retrain, test, config, ap.seed, 7919 + ap.seed) for src, s in cells]
    results = {}
    ok = True
    for cell, res in zip(cells, _safe_pmap(_reshuffle_cell, args, jobs)):
        if res is None:
            ok = False
        else:
            results[cell] = res

    with open(out / "reshuffle.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESHUFFLE_HEADER)
        for s in sparsities:
            row = [repr(s)]
            for src in ("ours", "imp"):
                accs = results.get((src, s), (None,))[0]
                row += [repr(float(np.mean(accs))), repr(float(np.std(accs)))] if accs else ["", ""]
            w.writerow(row)
    with open(out / "reshuffle_densities.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "sparsity", "seed", "layer", "density_before", "density_after", "preserved"])
        for (src, s), (_, checks) in sorted(results.items()):
            for k, (before, after) in enumerate(checks):
                for layer, (b, a) in enumerate(zip(before, after)):
                    w.writerow([src, repr(s), ap.seed + k, layer, repr(float(b)), repr(float(a)), int(b == a)])
    for s in sparsities:
        parts = []
        for src in ("ours", "imp"):
            accs = results.get((src, s), (None,))[0]
            parts.append(f"{src} {np.mean(accs):.3f} ± {np.std(accs):.3f}" if accs else f"{src} failed")
        print(f"sparsity {s:<5g} " + " | ".join(parts))
    return EXIT_OK if ok else EXIT_PARTIAL


def _safe_call(fn_args):
    fn, args = fn_args
    try:
        return fn(args)
    except Exception:
        log.exception("grid cell failed")
        return None


def _safe_pmap(fn, items, jobs):
    return pmap(_safe_call, [(fn, it) for it in items], jobs)


def cmd_bound_check(ap, proto, out, jobs):
    instance = ConvexInstance.random(dim=proto.bound_dim, seed=ap.seed)
    loss_star, _ = reference_minimum(instance, proto.bound_steps)
    rows = []
    ok = True
    for T in _ints(proto.bound_T):
        rep = empirical_bound_check(instance, ap.replace(T=T), proto.bound_seeds, loss_star=loss_star)
        rows.append(rep)
        ok &= rep.satisfied
        print(f"T={T}: gap {rep.gap:.6f} <= bound {rep.bound:.6f}: {rep.satisfied} (G={rep.G:.4f} M={rep.M:.4f} C={rep.C:.4f})")
    with open(out / "bound_check.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "gap", "bound", "G", "M", "C", "c", "loss_star", "satisfied"])
        for r in rows:
            w.writerow([r.T, repr(r.gap), repr(r.bound), repr(r.G), repr(r.M), repr(r.C), repr(r.c),
                        repr(r.loss_star), int(r.satisfied)])
    return EXIT_OK if ok else EXIT_PARTIAL


COMMANDS = {
    "ap-train": cmd_ap_train,
    "baseline": cmd_baseline,
    "transfer-grid": cmd_transfer_grid,
    "reshuffle-eval": cmd_reshuffle_eval,
    "convergence-demo": cmd_convergence_demo,
    "bound-check": cmd_bound_check,
    "fetch-data": cmd_fetch_data,
}


def make_parser():
    p = argparse.ArgumentParser(prog="archprune", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--scale", type=float, default=1.0, help="shrink iterations and data sizes")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        ap, proto = build_settings(args.command, args.config, args.overrides, args.seed, args.scale)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](ap, proto, out, max(1, args.jobs))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
