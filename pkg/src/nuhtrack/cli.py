"""Command-line entry points: track, search, learn, eval, synth.

Exit codes: 0 success, 2 usage error, 3 input format error, 4 non-convergence
(outputs are still written).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, io
from .config import Config

log = logging.getLogger("nuhtrack")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NONCONVERGED = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _need_file(path, flag):
    if path is not None and not Path(path).is_file():
        raise UsageError(f"{flag}: no such file: {path}")


def _load_config(path, threads: int | None) -> Config:
    cfg = io.read_config(path) if path else Config()
    if threads is not None:
        cfg = replace(cfg, search=replace(cfg.search, threads=threads))
    return cfg


# track ----------------------------------------------------------------------

def cmd_track(args) -> int:
    from .affinity import MotionContext
    from .pipeline import run_sequence

    for p, flag in ((args.det, "--det"), (args.emb, "--emb"), (args.hist, "--hist"),
                    (args.pts, "--pts"), (args.config, "--config")):
        _need_file(p, flag)
    cfg = _load_config(args.config, args.threads)
    mot = io.read_mot(args.det)
    emb = io.read_features(args.emb, io.EMB_MAGIC) if args.emb else None
    hist = io.read_features(args.hist, io.HIST_MAGIC) if args.hist else None
    dets = io.attach_features(mot.detections, emb, hist)
    ctx = MotionContext(io.read_points(args.pts) if args.pts else [])
    res = run_sequence(dets, ctx, cfg, keep_graphs=args.dump_graphs is not None)
    head = io.provenance(cfg, f"windows={res.windows} nonconverged={res.nonconverged}")
    io.write_mot(args.out, res.rows(), head)
    if args.dump_graphs is not None:
        out = Path(args.dump_graphs)
        out.mkdir(parents=True, exist_ok=True)
        for st in res.stats:
            if st.graph is not None:
                io.write_graph(out / f"window_{st.t + 1:06d}.txt", st.graph, io.provenance(cfg, f"frame={st.t + 1}"))
    log.info("wrote %d trajectories to %s", len(res.trajectories), args.out)
    if res.nonconverged:
        log.warning("%d searches hit the iteration cap", res.nonconverged)
        return EXIT_NONCONVERGED
    return EXIT_OK


# search ---------------------------------------------------------------------

def cmd_search(args) -> int:
    from .dense_search import Structure, search_all

    for p, flag in ((args.graph, "--graph"), (args.weights, "--weights"), (args.config, "--config")):
        _need_file(p, flag)
    cfg = _load_config(args.config, args.threads)
    alpha = args.alpha_hat if args.alpha_hat is not None else cfg.search.alpha_hat
    if alpha < 2:
        raise UsageError("--alpha-hat must be >= 2")
    G = io.read_graph(args.graph)
    W, _ = io.read_weights(args.weights)
    sc = cfg.search
    try:
        if args.oracle:
            from .oracle import brute_force_dense
            support, theta = brute_force_dense(G, W, alpha)
            structs = [Structure(support, theta, -1, True)] if theta is not None else []
        else:
            structs = search_all(G, W, alpha, sc.tol, sc.eps_part, sc.iter_factor, threads=sc.threads)
    except ValueError as e:
        raise io.FormatError(str(e), args.weights) from None
    cfg = replace(cfg, search=replace(sc, alpha_hat=alpha))
    io.write_structures(args.out, structs, io.provenance(cfg, f"graph_n={G.n}"))
    bad = sum(not s.converged for s in structs)
    log.info("%d structures written to %s", len(structs), args.out)
    return EXIT_NONCONVERGED if bad else EXIT_OK


# learn ----------------------------------------------------------------------

def _sequence_dirs(root: Path) -> list[Path]:
    if (root / "det.txt").is_file():
        return [root]
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "det.txt").is_file())


def cmd_learn(args) -> int:
    from .affinity import MotionContext
    from .learn import instances_from_sequence, train

    root = Path(args.train_dir)
    if not root.is_dir():
        raise UsageError(f"--train-dir: no such directory: {root}")
    _need_file(args.config, "--config")
    cfg = _load_config(args.config, args.threads)
    seqs = _sequence_dirs(root)
    if not seqs:
        raise UsageError(f"--train-dir: no sequence folders with det.txt under {root}")
    instances = []
    for d in seqs:
        if not (d / "gt.txt").is_file():
            raise io.FormatError("missing gt.txt", d)
        mot = io.read_mot(d / "det.txt")
        emb = io.read_features(d / "emb.bin", io.EMB_MAGIC) if (d / "emb.bin").is_file() else None
        hist = io.read_features(d / "hist.bin", io.HIST_MAGIC) if (d / "hist.bin").is_file() else None
        dets = io.attach_features(mot.detections, emb, hist)
        ctx = MotionContext(io.read_points(d / "pts.txt") if (d / "pts.txt").is_file() else [])
        gt = io.read_mot(d / "gt.txt").rows
        instances += instances_from_sequence(dets, gt, ctx, cfg, name=d.name)
    if not instances:
        raise io.FormatError("no training clips with at least two ground-truth matched detections", root)
    print(f"# {len(instances)} training clips from {len(seqs)} sequences")

    def report(rnd, viol, slack):
        print(f"round {rnd:4d}  max_violation {viol:.6g}  slack {slack:.6g}", flush=True)

    lc = cfg.learn
    res = train(instances, lc.C, lc.eps_stop, lc.max_rounds, cfg.search.alpha_hat, callback=report)
    extra = [f"# rounds: {res.rounds}", f"# converged: {int(res.converged)}"]
    io.write_weights(args.out_weights, res.weights, cfg.hash(), extra)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


# eval -----------------------------------------------------------------------

def cmd_eval(args) -> int:
    from .metrics import clear_mot, format_table, idf1
    from .plotting import plot_eval_report

    for p, flag in ((args.results, "--results"), (args.gt, "--gt"), (args.config, "--config")):
        _need_file(p, flag)
    cfg = _load_config(args.config, None)
    thr = args.iou if args.iou is not None else cfg.metrics.iou_threshold
    if not 0.0 < thr < 1.0:
        raise UsageError("--iou must lie in (0, 1)")
    cfg = replace(cfg, metrics=replace(cfg.metrics, iou_threshold=thr))
    res = io.read_mot(args.results).rows
    gt = io.read_mot(args.gt).rows
    try:
        rep = clear_mot(res, gt, thr)
        summary = rep.summary()
        summary["idf1"] = idf1(res, gt, thr)
    except ValueError as e:
        raise io.FormatError(str(e), args.results) from None
    summary["iou_threshold"] = thr
    head = io.provenance(cfg, f"results={Path(args.results).name} gt={Path(args.gt).name}")
    base = io.write_report(args.report, summary, head)
    plot_eval_report(rep.per_frame, rep.coverage, str(base) + ".png", head[0].lstrip("# "))
    print(format_table(summary))
    return EXIT_OK


# synth ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import SCENARIOS, write_scenario

    if args.scenario not in SCENARIOS:
        raise UsageError(f"--scenario must be one of {', '.join(SCENARIOS)}")
    if args.frames < 2:
        raise UsageError("--frames must be >= 2")
    out = write_scenario(args.out_dir, args.scenario, args.seed, args.frames)
    log.info("scenario %s seed %d written to %s", args.scenario, args.seed, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nuhtrack", description="Hypergraph dense-structure multi-object tracker.")
    ap.add_argument("--version", action="version", version=f"nuhtrack {__version__}")
    ap.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    ap.add_argument("--threads", type=int, default=None, help="worker threads for multi-start search")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track detections window by window")
    p.add_argument("--det", required=True)
    p.add_argument("--emb")
    p.add_argument("--hist")
    p.add_argument("--pts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-graphs", metavar="DIR")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("search", help="dense-structure search on a hypergraph dump")
    p.add_argument("--graph", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--alpha-hat", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("learn", help="structured max-margin training of per-degree weights")
    p.add_argument("--train-dir", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-weights", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("eval", help="CLEAR-MOT and IDF1 report")
    p.add_argument("--results", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float)
    p.add_argument("--config")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        ap.print_usage(sys.stderr)
        print("nuhtrack: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        print(f"nuhtrack: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except io.FormatError as e:
        print(f"nuhtrack: format error: {e}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
