"""Command-line entry point: ``yinyang <command> ...``.

Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence,
5 check failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

log = logging.getLogger("yinyang")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_CHECK = 0, 2, 3, 4, 5
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _load_run(args):
    from . import config

    cfg = config.load(args.config, args.set or ())
    for key in cfg.defaulted:
        log.info("default %s=%s", key, config._fmt(cfg.values[key]))
    return cfg


def _load_data(cfg):
    from .config import validate_paths
    from .graph import FeatureMatrix, load_edge_list, load_features, load_split, split_edges, with_eval_pools

    validate_paths(cfg)
    g = load_edge_list(cfg.edges, cfg.num_nodes or None)
    if cfg.features:
        X = load_features(cfg.features)
        if X.rows != g.num_nodes:
            if cfg.num_nodes or X.rows < g.num_nodes:
                from .config import DataError
                raise DataError(f"{cfg.features}: {X.rows} feature rows but the graph has {g.num_nodes} nodes")
            g = load_edge_list(cfg.edges, X.rows)
    else:
        import numpy as np
        log.info("no data.features given: using one-hot identity features")
        X = FeatureMatrix(np.eye(g.num_nodes))
    if cfg.split_file:
        split = load_split(cfg.split_file)
        if split.num_nodes != g.num_nodes:
            from .config import DataError
            raise DataError(f"{cfg.split_file}: split has {split.num_nodes} nodes, graph has {g.num_nodes}")
    else:
        split = split_edges(g, cfg.split_ratios, cfg.split_seed)
    if not split.neg_pools:
        split = with_eval_pools(split, cfg.pool_size, cfg.pool_seed)
    return g, X, split


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---- commands ----

def cmd_prepare(args) -> int:
    from .datasets import prepare

    ep, fp, n, m = prepare(args.raw_dir, args.out, args.name)
    print(f"wrote {ep} and {fp}: {n} nodes, {m} edges")
    return EXIT_OK


def cmd_split(args) -> int:
    from .graph import save_split

    cfg = _load_run(args)
    _, _, split = _load_data(cfg)
    out = Path(args.output) if args.output else _out_dir(args, cfg) / "split.txt"
    save_split(out, split)
    print(f"wrote {out}: train {len(split.train_edges)}, valid {len(split.valid_edges)}, "
          f"test {len(split.test_edges)}, pool {len(split.neg_pools.get('test', []))}")
    return EXIT_OK


def cmd_train(args) -> int:
    from . import config
    from .graph import save_split
    from .model import encode, save_checkpoint, train
    from .report import energy_trace, training_curves

    cfg = _load_run(args)
    g, X, split = _load_data(cfg)
    out = _out_dir(args, cfg)
    tc = cfg.train
    if args.seed is not None:
        from dataclasses import replace
        tc = replace(tc, seed=args.seed)
        cfg.values["train.seeds"] = (args.seed,)  # so the snapshot reruns this exact model
    (out / "config.snapshot.cfg").write_text(config.snapshot(cfg), encoding="utf-8")
    save_split(out / "split.txt", split)
    log_path = out / "train_log.tsv"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch\tloss\tval_hits\tQ_first\tQ_last\tseconds\n")

        def progress(rec):
            fh.write(f"{rec['epoch']}\t{rec['loss']!r}\t{rec.get('val', '')}\t{rec['Q_first']}\t"
                     f"{rec['Q_last']}\t{rec['seconds']:.4f}\n")
            fh.flush()
            if not args.quiet:
                val = f"  val HR@{tc.k} {rec['val']:.4f}" if "val" in rec else ""
                print(f"epoch {rec['epoch']:4d}  loss {rec['loss']:.6g}{val}", file=sys.stderr)

        ckpt = train(g, X, split, cfg.prop, tc, progress)
    ckpt_path = out / "model.yyg"
    save_checkpoint(ckpt_path, ckpt)
    written = [ckpt_path, log_path, out / "config.snapshot.cfg", out / "split.txt"]
    if not args.no_plots:
        written.append(training_curves(ckpt.history, out / "training.png"))
    if args.diagnostics:
        rows = []
        encode(ckpt, split.train_graph(), X, tc.eval_seed, diagnostics=rows)
        with open(out / "energy.tsv", "w", encoding="utf-8") as fh:
            fh.write("t\tenergy\tQ\tsigma_Q\n")
            for t, e, q, s in rows:
                fh.write(f"{t}\t{e!r}\t{q!r}\t{s!r}\n")
        written.append(out / "energy.tsv")
        if rows and not args.no_plots:
            written.append(energy_trace(rows, out / "energy.png"))
    print(f"best valid HR@{tc.k}: {ckpt.meta['best_val']:.4f}")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _eval_rows(cfg, g, X, split, ckpt_path=None, sweep=False):
    from .evaluation import evaluate, heuristic_results, seed_sweep, variant
    from .model import load_checkpoint

    g_train = split.train_graph()
    results = []
    if ckpt_path is not None:
        ckpt = load_checkpoint(ckpt_path)
        results += evaluate(ckpt, g_train, X, split, cfg.protocol, cfg.eval_seeds, name=Path(ckpt_path).stem)
    if sweep:
        for v in cfg.variants:
            prop, tc = variant(v, cfg.prop, cfg.train, cfg.random_feature_scale)

            def progress(seed, vals, v=v):
                print(f"{v} seed {seed}: " + ", ".join(f"{k}={x:.4f}" for k, x in vals.items()), file=sys.stderr)

            results += seed_sweep(g, X, split, prop, tc, cfg.train_seeds, cfg.protocol, name=v, progress=progress)
    if cfg.baselines:
        results += heuristic_results(g_train, split, cfg.protocol, cfg.baselines, cfg.eval_seeds)
    return results


def _emit_results(args, cfg, results) -> None:
    from .evaluation import RESULTS_HEADER, write_results
    from .report import result_bars

    path = Path(args.output) if args.output else _out_dir(args, cfg) / "results.tsv"
    write_results(path, results)
    print(RESULTS_HEADER)
    for r in results:
        print(f"{r.row()}\t# {r.formatted()}")
    print(f"wrote {path}")
    if not args.no_plots and results:
        print(f"wrote {result_bars(results, path.with_suffix('.png'))}")


def cmd_eval(args) -> int:
    from .graph import load_split

    cfg = _load_run(args)
    if args.baselines is not None:
        from dataclasses import replace
        cfg = replace(cfg, baselines=tuple(b.strip().upper() for b in args.baselines.split(",") if b.strip()))
        bad = [b for b in cfg.baselines if b not in ("CN", "AA", "RA")]
        if bad:
            from .config import ConfigError
            raise ConfigError(f"--baselines: unknown heuristics {bad}")
    g, X, split = _load_data(cfg)
    if args.split:
        split = load_split(args.split)
    results = _eval_rows(cfg, g, X, split, args.checkpoint, sweep=False)
    _emit_results(args, cfg, results)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load_run(args)
    g, X, split = _load_data(cfg)
    if args.variants:
        from dataclasses import replace
        from .evaluation import VARIANTS
        vs = tuple(v.strip() for v in args.variants.split(",") if v.strip())
        bad = [v for v in vs if v not in VARIANTS]
        if bad:
            from .config import ConfigError
            raise ConfigError(f"--variants: unknown {bad}; choose from {VARIANTS}")
        cfg = replace(cfg, variants=vs)
    results = _eval_rows(cfg, g, X, split, sweep=True)
    _emit_results(args, cfg, results)
    return EXIT_OK


def _parse_src(args, n: int):
    text = ""
    if args.src:
        text = args.src
    elif args.src_file:
        text = Path(args.src_file).read_text(encoding="utf-8")
    ids = []
    for tok in text.replace(",", " ").split():
        try:
            v = int(tok)
        except ValueError:
            from .config import DataError
            raise DataError(f"source id {tok!r} is not an integer") from None
        if not 0 <= v < n:
            from .config import DataError
            raise DataError(f"unknown source node {v} (graph has {n} nodes)")
        ids.append(v)
    return ids


def cmd_predict(args) -> int:
    from .model import encode, load_checkpoint, predict_topk

    cfg = _load_run(args)
    g, X, split = _load_data(cfg)
    g_train = split.train_graph()
    ckpt = load_checkpoint(args.checkpoint)
    src = _parse_src(args, g.num_nodes)
    if args.k >= g.num_nodes:
        from .config import ConfigError
        raise ConfigError(f"--k {args.k} must be smaller than the node count {g.num_nodes}")
    Y = encode(ckpt, g_train, X, args.negset_seed if args.negset_seed is not None else cfg.train.eval_seed)
    t0 = time.perf_counter()
    ranked = predict_topk(Y, ckpt.model.decoder, src, args.k, args.scorer,
                          exclude=None if args.no_exclude else g_train, pruned=not args.no_prune)
    elapsed = time.perf_counter() - t0
    lines = [f"{s}\t{d}\t{score!r}\n" for s, row in zip(src, ranked) for d, score in row]
    if args.output:
        Path(args.output).write_text("".join(lines), encoding="utf-8")
    else:
        sys.stdout.write("".join(lines))
    rate = len(src) / elapsed if elapsed > 0 and src else 0.0
    print(f"decode nodes/sec: {rate:.1f} (scorer={args.scorer}, sources={len(src)}, k={args.k})", file=sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import SUITES, run_suite

    suites = SUITES if "all" in args.suite else args.suite
    ok = True
    for name in suites:
        rep = run_suite(name, seed=args.seed)
        for line in rep.lines():
            print(line)
        ok &= rep.passed
        if name == "scaling" and args.plots:
            from .checks import loglog_fit
            from .report import scaling_fit
            Path(args.plots).mkdir(parents=True, exist_ok=True)
            slope, r2 = loglog_fit(rep.timings)
            print(f"wrote {scaling_fit(rep.timings, slope, r2, Path(args.plots) / 'scaling.png')}")
    return EXIT_OK if ok else EXIT_CHECK


# ---- parser ----

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="yinyang", description="Link prediction with negative-aware unrolled propagation.")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP worker threads")
    p.add_argument("-v", "--verbose", action="store_true", help="log defaulted config values and progress")
    sub = p.add_subparsers(dest="command", required=True)

    def run_args(sp):
        sp.add_argument("config", help="run config (key=value), e.g. a shipped preset")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        sp.add_argument("--out", help="output directory (default: out.dir from the config)")

    sp = sub.add_parser("prepare", help="convert raw citation dumps into edge-list and feature files")
    sp.add_argument("raw_dir")
    sp.add_argument("--out", required=True)
    sp.add_argument("--name")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("split", help="write the split manifest (edges and evaluation pools)")
    run_args(sp)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train", help="train and write checkpoint, per-epoch log and config snapshot")
    run_args(sp)
    sp.add_argument("--seed", type=int, help="training seed (default: first of train.seeds)")
    sp.add_argument("--diagnostics", action="store_true", help="dump per-layer energy, Q and sigma(Q)")
    sp.add_argument("--no-plots", action="store_true")
    sp.add_argument("-q", "--quiet", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint over eval.seeds")
    run_args(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", help="split manifest (default: rebuilt from the config)")
    sp.add_argument("--baselines", help="comma list of heuristics, e.g. cn,aa,ra")
    sp.add_argument("-o", "--output")
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="train each variant over train.seeds and tabulate")
    run_args(sp)
    sp.add_argument("--variants", help="comma list from full,no_negative,random_features,gcn")
    sp.add_argument("-o", "--output")
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("predict", help="top-k destinations per source node")
    run_args(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--src", help="comma or space separated source ids")
    sp.add_argument("--src-file")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--scorer", choices=("hadamard_mlp", "dot"), default="hadamard_mlp")
    sp.add_argument("--negset-seed", type=int)
    sp.add_argument("--no-exclude", action="store_true", help="keep known training edges in the ranking")
    sp.add_argument("--no-prune", action="store_true", help="brute-force dot search")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("check", help="run property batteries")
    sp.add_argument("suite", nargs="+",
                    choices=("gradients", "descent", "convexity", "isomorphism", "metrics-oracle", "scaling", "all"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--plots", help="directory for the scaling figure")
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .config import ConfigError, DataError
    from .graph import GraphFormatError
    from .model import CheckpointFormatError, FingerprintMismatch, TrainingDiverged

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, GraphFormatError, CheckpointFormatError, FingerprintMismatch, FileNotFoundError,
            IndexError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
