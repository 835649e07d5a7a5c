"""``gas`` command line: gen, partition, train, verify, bench."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .exceptions import InputError

log = logging.getLogger("histgnn")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def max_threads() -> int:
    """Worker-thread budget from ``GAS_THREADS`` (unset: 1)."""
    raw = os.environ.get("GAS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"GAS_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InputError("GAS_THREADS must be non-negative")
    return n


def _load_graph(path):
    from .graph import build_graph
    from .io import read_edge_list

    edge_file = os.path.join(path, "edges.txt") if os.path.isdir(path) else path
    if os.path.isdir(path) and os.path.exists(os.path.join(path, "features.bin")):
        from .io import load_dataset
        return load_dataset(path).graph
    e = read_edge_list(edge_file)
    n = int(e.max()) + 1 if e.size else 0
    return build_graph(e, n)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(x) for x in r) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def cmd_gen(args) -> int:
    from .datasets import gen_clustered, gen_sbm
    from .io import save_dataset

    if args.sbm:
        ds = gen_sbm(args.blocks, args.block_size, args.p_in, args.p_out, args.feature_mode, args.seed)
    else:
        ds = gen_clustered(args.parts, args.size, args.intra_deg, args.inter_nodes, args.inter_deg,
                           args.seed, args.feature_mode)
    save_dataset(args.out, ds)
    log.info("wrote %d nodes / %d edges to %s", ds.graph.num_nodes, ds.graph.num_edges, args.out)
    return EXIT_OK


def cmd_partition(args) -> int:
    from .partition import cluster_partition, inter_intra_ratio, random_partition, write_partition

    g = _load_graph(args.graph)
    fn = cluster_partition if args.method == "cluster" else random_partition
    p = fn(g, args.parts, args.seed)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    write_partition(args.out, p)
    log.info("inter/intra ratio %.4f", inter_intra_ratio(g, p))
    return EXIT_OK


def _spec_from_config(cfg, ds):
    from .model import ModelSpec

    return ModelSpec(
        kind=cfg["model.kind"], in_dim=ds.features.shape[1], hidden=cfg["model.hidden"],
        num_classes=max(ds.labels.num_classes, 1), num_layers=cfg["model.layers"],
        dropout=cfg["model.dropout"], alpha=cfg["model.alpha"], beta=cfg["model.beta"],
        gin_eps=cfg["model.gin_eps"], l2=cfg["reg.l2"], lipschitz_weight=cfg["reg.lipschitz_weight"],
        delta=cfg["reg.delta"], max_norm=cfg["clip.max_norm"], lr=cfg["train.lr"],
        epochs=cfg["train.epochs"], seed=cfg["seed"], dtype=cfg["model.dtype"],
    )


def cmd_train(args) -> int:
    from .config import load_config
    from .io import load_dataset
    from .model import GNNModel
    from .partition import cluster_partition, random_partition, read_partition
    from .trainer import Trainer

    cfg = load_config(args.config)
    cfg.require("paths.data", "paths.out")
    ds = load_dataset(cfg["paths.data"])
    if cfg["paths.partition"]:
        part = read_partition(cfg["paths.partition"], ds.graph.num_nodes)
    else:
        fn = cluster_partition if cfg["train.partitioner"] == "cluster" else random_partition
        part = fn(ds.graph, cfg["train.parts"], cfg["seed"])
    model = GNNModel(_spec_from_config(cfg, ds))
    prefetch = cfg["train.prefetch"] and max_threads() > 0
    trainer = Trainer(model, ds, part, method=cfg["train.method"], prefetch=prefetch,
                      track_staleness=cfg["train.track_staleness"],
                      warmup=cfg["train.warmup"] == "full-batch")
    try:
        trainer.fit()
    finally:
        trainer.close()
    os.makedirs(cfg["paths.out"], exist_ok=True)
    trainer.report.to_csv(os.path.join(cfg["paths.out"], "report.csv"), trainer.store.num_layers)
    if cfg["paths.history"] and trainer.store.num_layers:
        trainer.store.save(cfg["paths.history"])
    last = trainer.report.rows[-1]
    log.info("final test accuracy %.4f", last["test_acc"])
    return EXIT_OK


def _verify_rows(suite, cfg):
    from . import analysis as an

    rows = []
    if suite == "bounds":
        layers = [int(x) for x in str(cfg["verify.layers"]).split(",") if x.strip()]
        for L in layers:
            for s in range(cfg["verify.cases"]):
                r = an.bound_case(s, L, cfg["verify.kind"])
                rows.append((f"theorem1_L{L}_seed{s}", r.measured, r.theorem1, r.theorem1_holds))
                for layer, m, b in r.lemma1:
                    rows.append((f"lemma1_L{L}_layer{layer}_seed{s}", m, b, m <= b * (1 + 1e-12) + 1e-12))
    elif suite == "wl":
        rows = _wl_rows(an)
    elif suite == "prop3":
        w = an.prop3_counterexample_search(6)
        if w is None:
            rows.append(("prop3_witness", 0.0, 0.0, False))
        else:
            gap = float(np.linalg.norm(w.outputs[w.v] - w.outputs[w.w]))
            rows.append((f"prop3_sampled_gap_n{w.graph.num_nodes}", gap, 0.0, gap > 0))
            out = an.gas_witness_outputs(w)
            gas_gap = float(np.linalg.norm(out[w.v] - out[w.w]))
            rows.append(("prop3_gas_gap", gas_gap, 1e-6, gas_gap <= 1e-6))
    elif suite == "gradient":
        for s in range(min(cfg["verify.cases"], 20)):
            r = an.gradient_case(s)
            for i, (d, lam) in enumerate(zip(r.grad_error, r.lipschitz)):
                bound = lam * r.history_error
                rows.append((f"gradient_seed{s}_param{i}", d, bound, d <= bound + 1e-12))
    return rows


def _wl_rows(an):
    import networkx as nx
    from .graph import build_graph

    rows = []
    for idx, nxg in enumerate(nx.graph_atlas_g()):
        n = nxg.number_of_nodes()
        if n == 0 or n > 6:
            continue
        g = build_graph(np.array(list(nxg.edges()), dtype=np.int64).reshape(-1, 2), n)
        # networkx starts from degree labels (our round 1) and reports
        # hashes after each further aggregation
        ours = an.wl_refine(g, rounds=5).colors
        hashes = nx.weisfeiler_lehman_subgraph_hashes(nxg, iterations=3)
        same = True
        for r in range(3):
            theirs = [hashes[v][r] for v in range(n)]
            mine = ours[r + 2].tolist()
            joint = len(set(zip(mine, theirs)))
            same &= joint == len(set(theirs)) == len(set(mine))
        rows.append((f"atlas{idx}", an.num_classes(ours[-1]), len(set(theirs)), same))
    return rows


def cmd_verify(args) -> int:
    from .config import load_config, parse_config

    cfg = load_config(args.config) if args.config else parse_config("")
    out_dir = args.out or cfg["paths.out"]
    if out_dir is None:
        raise InputError("missing config key paths.out (or pass --out)")
    rows = _verify_rows(args.suite, cfg)
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "verify.csv"), ["case", "measured", "bound", "pass"],
               [(c, _fmt(m), _fmt(b), "pass" if ok else "fail") for c, m, b, ok in rows])
    failed = sum(not ok for *_, ok in rows)
    log.info("%d cases, %d failed", len(rows), failed)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import runtime_benchmark
    from .config import load_config, parse_config
    from .datasets import gen_clustered
    from .model import ModelSpec
    from .partition import Partitioning

    cfg = load_config(args.config) if args.config else parse_config("")
    out_dir = args.out or cfg["paths.out"]
    if out_dir is None:
        raise InputError("missing config key paths.out (or pass --out)")
    parts = cfg["bench.parts"]
    ds = gen_clustered(parts, cfg["bench.size"], cfg["bench.intra_deg"], cfg["bench.inter_nodes"],
                       cfg["bench.inter_deg"], seed=cfg["seed"])
    part = Partitioning.from_assignment(ds.labels.labels)
    spec = ModelSpec(kind=cfg["model.kind"], in_dim=ds.features.shape[1], hidden=cfg["bench.hidden"],
                     num_classes=parts, num_layers=cfg["bench.layers"], seed=cfg["seed"])
    if max_threads() == 0:
        raise InputError("bench compares against a prefetch worker; GAS_THREADS=0 disables it")
    res = runtime_benchmark(ds, part, spec, epochs=cfg["bench.epochs"])
    rows = [("serial", i, _fmt(t)) for i, t in enumerate(res.serial)]
    rows += [("prefetch", i, _fmt(t)) for i, t in enumerate(res.prefetch)]
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "bench.csv"), ["mode", "run_epoch", "wall_time"], rows)
    log.info("median prefetch/serial %.3f, identical=%s", res.ratio, res.identical)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gas", description="Graph network training with historical embeddings.")
    p.add_argument("--log-level", choices=["error", "info", "debug"], default="info")
    p.add_argument("--log-file", help="also write timestamped log lines to this file")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset directory")
    kind = g.add_mutually_exclusive_group(required=True)
    kind.add_argument("--sbm", action="store_true", help="planted-block stochastic block model")
    kind.add_argument("--clustered", action="store_true", help="clusters with controlled inter-connectivity")
    g.add_argument("--blocks", type=int, default=4)
    g.add_argument("--block-size", type=int, default=100)
    g.add_argument("--p-in", type=float, default=0.1)
    g.add_argument("--p-out", type=float, default=0.01)
    g.add_argument("--parts", type=int, default=4)
    g.add_argument("--size", type=int, default=100)
    g.add_argument("--intra-deg", type=int, default=10)
    g.add_argument("--inter-nodes", type=int, default=10)
    g.add_argument("--inter-deg", type=int, default=10)
    g.add_argument("--feature-mode", choices=["one-hot-noisy", "random"], default="one-hot-noisy")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    pp = sub.add_parser("partition", help="partition a graph")
    pp.add_argument("--graph", required=True, help="dataset directory or edge-list file")
    pp.add_argument("--parts", type=int, required=True)
    pp.add_argument("--method", choices=["random", "cluster"], default="cluster")
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_partition)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="run an analysis suite")
    v.add_argument("--suite", choices=["bounds", "wl", "prop3", "gradient"], required=True)
    v.add_argument("--config")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="serial vs prefetch epoch timing")
    b.add_argument("--config")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def _setup_logging(level: str, log_file: str | None):
    root = logging.getLogger("histgnn")
    root.handlers.clear()
    root.setLevel(getattr(logging, level.upper()))
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root.addHandler(h)
    if log_file:
        fh = logging.FileHandler(log_file)
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
        root.addHandler(fh)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.log_level, args.log_file)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
