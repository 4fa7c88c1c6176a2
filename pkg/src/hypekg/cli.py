"""Command-line entry point: ``hypekg <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import checkpoint as ck
from . import data
from . import query as qd
from . import synth
from . import train as tr
from .config import RunConfig
from .errors import DataError, HypekgError, UsageError

log = logging.getLogger("hypekg")


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    over = {}
    for key in ("seed", "threads", "epochs", "d", "lr", "margin", "query_mix", "depth_encoding", "batch_size"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if getattr(args, "deterministic", False):
        over["deterministic"] = True
    if getattr(args, "strict_algorithm1", False):
        over["strict_algorithm1"] = True
    if getattr(args, "data", None):
        over["dataset"] = str(args.data)
    return cfg.replace(**over) if over else cfg


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _tree_store(path) -> data.TripleStore:
    return data.load_tsv(path)


def _vocab_store(ckpt: ck.Checkpoint) -> data.TripleStore:
    return data.TripleStore(ckpt.entities, ckpt.relations, [])


# -- subcommands -------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _config(args)
    result = tr.run_train(cfg, out=args.out)
    print("epoch\tloss\tseconds")
    for h in result.history:
        print(f"{h['epoch']}\t{h['loss']:.6f}\t{h['seconds']:.3f}")
    if result.skipped:
        print(f"# skipped structures: {','.join(result.skipped)}", file=sys.stderr)
    print(f"# checkpoint: {args.out}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    from .evalkit.metrics import report_json, report_lines

    ckpt = ck.load(args.checkpoint)
    if args.config:
        ck.check_config(ckpt, RunConfig.load(args.config))
    samples = data.queries_from_jsonl(qd.read_jsonl(args.queries), _vocab_store(ckpt))
    report = tr.run_eval(ckpt, samples, args.top_n)
    counts = {}
    for s in samples:
        counts[s.tag] = counts.get(s.tag, 0) + 1
    print("\n".join(report_lines(report, counts)))
    if args.out:
        Path(args.out).write_text(report_json(report), encoding="utf-8")
    return 0


def cmd_sample_queries(args) -> int:
    cfg = _config(args)
    kg = tr.load_dataset(cfg)
    if args.split == "train":
        bundle = tr.make_split(kg, cfg) if args.split_edges else kg
        samples = data.sample_queries(bundle, args.structure, args.count, seed=cfg.seed,
                                      max_attempts=cfg.sample_attempts)
    else:
        bundle = tr.make_split(kg, cfg)
        samples = data.sample_queries(bundle, args.structure, args.count, seed=cfg.seed,
                                      answer_graph="full", split_name=args.split,
                                      max_attempts=cfg.sample_attempts)
    _write(args.out, "".join(qd.dumps_sample(*row) for row in data.samples_to_rows(samples, kg)))
    return 0


def _levels_arg(text, top):
    if text in (None, "all"):
        return list(range(1, top + 1))
    return [int(x) for x in text.split(",")]


def cmd_anomaly(args) -> int:
    from .evalkit import anomaly, semantic

    cfg = _config(args)
    tree = tr.encode(_tree_store(cfg.dataset or args.data), cfg)
    pt = anomaly.build_pseudo_tree(tree, args.rate, cfg.seed)
    run_cfg = cfg.replace(split_train=1.0, split_valid=0.0, split_test=0.0, query_mix=args.query_mix)
    vectors = None
    if args.semantic:
        vectors = semantic.load_vectors(args.semantic, tree.entity_index)
    hook = None
    if vectors is not None and args.semantic_mode == "SI":
        def hook(store):
            store.arrays["ent_cen"] = semantic.semantic_init(store.arrays["ent_cen"], vectors,
                                                             c=store.curvature, seed=cfg.seed)
    result = tr.run_train(run_cfg, kg=pt.store, out=args.out, init_hook=hook)
    params = result.store.arrays
    score_fn = None
    if vectors is not None and args.semantic_mode == "SC":
        score_fn = semantic.semantic_rescorer(pt, vectors, args.beta, args.reference)
    policy = "calibrated"
    if args.policy.startswith("quantile:"):
        policy = ("quantile", float(args.policy.split(":", 1)[1]))
    elif args.policy != "calibrated":
        raise UsageError(f"unknown policy {args.policy!r}")
    print("level\tprecision\trecall\tf1\tthreshold\tparents\tchildren")
    for level in _levels_arg(args.level, pt.max_level):
        r = anomaly.anomaly_detect(pt, params, result.store.config, level, policy, seed=cfg.seed,
                                   score_fn=score_fn)
        print(f"P{level}\t{r['precision']:.4f}\t{r['recall']:.4f}\t{r['f1']:.4f}\t{r['threshold']:.6g}"
              f"\t{r['parents']}\t{r['children']}")
    return 0


def cmd_analyze(args) -> int:
    from .evalkit import analysis
    from .plotting import plot_deltas

    ckpt = ck.load(args.checkpoint)
    tree = _tree_store(args.data)
    cen = _aligned_centers(ckpt, tree)
    intra, inter, keys = analysis.distance_table(tree, cen, args.metric, ckpt.store.curvature,
                                                 args.conventional)
    _write(args.out, analysis.table_csv(intra, inter, keys, args.metric))
    if args.out not in (None, "-") or args.plot:
        plot_deltas(intra, inter, keys, args.metric, args.plot or str(Path(args.out).with_suffix(".png")))
    return 0


def _aligned_centers(ckpt, tree):
    index = {e: i for i, e in enumerate(ckpt.entities)}
    missing = [e for e in tree.entities if e not in index]
    if missing:
        raise DataError("checkpoint lacks entities: " + ", ".join(missing[:20]))
    return ckpt.store.arrays["ent_cen"][[index[e] for e in tree.entities]]


def cmd_export_viz(args) -> int:
    from .evalkit import analysis, viz
    from .plotting import plot_hyperboloids

    ckpt = ck.load(args.checkpoint)
    index = {e: i for i, e in enumerate(ckpt.entities)}
    if args.data:
        tree = _tree_store(args.data)
        lv = analysis.levels(tree)
        level_of = {tree.entities[i]: l for l, ids in lv.items() for i in ids}
    else:
        level_of = {}
    names = [e for e in ckpt.entities if e in level_of] if level_of else list(ckpt.entities)
    rows = [index[e] for e in names]
    cen2, lim2 = viz.pca_project_2d(ckpt.store.arrays["ent_cen"][rows], ckpt.store.arrays["ent_lim"][rows])
    records = viz.viz_records(rows, names, [level_of.get(e, 0) for e in names], cen2, lim2)
    viz.write_viz_json(args.out, records)
    if args.svg:
        plot_hyperboloids(records, args.svg)
    return 0


def cmd_gradcheck(args) -> int:
    from . import gradcheck

    results = gradcheck.run_suite(args.configs, args.seed, args.step)
    print("\n".join(gradcheck.report_lines(results)))
    return 0 if all(r.ok for r in results) else 3


def cmd_gen_tree(args) -> int:
    kg = synth.gen_tree(synth.TreeSpec(args.depth, args.branching, args.relations, args.seed))
    _write_tsv(kg, args.out)
    return 0


def cmd_gen_kg(args) -> int:
    kg = synth.gen_overlap_kg(args.entities, args.relations, args.density, args.seed)
    _write_tsv(kg, args.out)
    return 0


def _write_tsv(kg, out):
    if out in (None, "-"):
        for h, r, t in kg.triples.tolist():
            sys.stdout.write(f"{kg.entities[h]}\t{kg.relations[r]}\t{kg.entities[t]}\n")
    else:
        kg.write_tsv(out)


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hypekg", description="Hyperboloid knowledge-graph query embeddings.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        sp.add_argument("--config", help="run config file (key: type = value lines)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--deterministic", action="store_true")
        sp.add_argument("--threads", type=int)
        if data:
            sp.add_argument("--data", help="triple TSV (head, relation, tail)")
            sp.add_argument("--depth-encoding", dest="depth_encoding", choices=("none", "single", "per_level"))

    sp = sub.add_parser("train", help="train a model and write a checkpoint")
    common(sp)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--margin", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--query-mix", dest="query_mix")
    sp.add_argument("--strict-algorithm1", dest="strict_algorithm1", action="store_true")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="rank all entities for every query in a JSONL file")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--config")
    sp.add_argument("--out", help="write the JSON report here")
    sp.add_argument("--top-n", dest="top_n", type=int)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("sample-queries", help="sample benchmark queries as JSONL")
    common(sp)
    sp.add_argument("--structure", required=True, choices=qd.STRUCTURES)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--split", choices=("train", "valid", "test"), default="train")
    sp.add_argument("--split-edges", dest="split_edges", action="store_true",
                    help="with --split train, answer on the train part of an edge split")
    sp.add_argument("--out", default="-")
    sp.set_defaults(fn=cmd_sample_queries)

    sp = sub.add_parser("anomaly", help="pseudo-tree anomaly detection pipeline")
    common(sp)
    sp.add_argument("--rate", type=float, default=0.10)
    sp.add_argument("--level", help="comma list of parent levels (1 = parents of leaves) or 'all'")
    sp.add_argument("--policy", default="calibrated", help="calibrated | quantile:<q>")
    sp.add_argument("--query-mix", dest="query_mix", default="1t,2t,3t")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--semantic", help="entity vectors file (name v1 v2 ...)")
    sp.add_argument("--semantic-mode", dest="semantic_mode", choices=("SI", "SC"), default="SC")
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--reference", choices=("genuine", "all"), default="genuine")
    sp.add_argument("--out", help="also write the trained checkpoint")
    sp.set_defaults(fn=cmd_anomaly)

    sp = sub.add_parser("analyze-distances", help="within/cross-level distance table as CSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True, help="the tree TSV the checkpoint was trained on")
    sp.add_argument("--metric", choices=("hyp", "euclid"), default="hyp")
    sp.add_argument("--conventional", action="store_true", help="plain mean over distinct pairs")
    sp.add_argument("--out", default="-")
    sp.add_argument("--plot", help="PNG path (default: next to --out)")
    sp.set_defaults(fn=cmd_analyze)

    sp = sub.add_parser("export-viz", help="2-D projection of entity hyperboloids as JSON/SVG")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", help="tree TSV used for level labels")
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg")
    sp.set_defaults(fn=cmd_export_viz)

    sp = sub.add_parser("gradcheck", help="finite-difference audit of every layer")
    sp.add_argument("--configs", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--step", type=float, default=1e-6)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("gen-tree", help="write a synthetic b-ary tree as TSV")
    sp.add_argument("--depth", type=int, default=4)
    sp.add_argument("--branching", type=int, default=4)
    sp.add_argument("--relations", choices=("single", "per_level"), default="per_level")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    sp.set_defaults(fn=cmd_gen_tree)

    sp = sub.add_parser("gen-kg", help="write a random multi-relational graph as TSV")
    sp.add_argument("--entities", type=int, default=50)
    sp.add_argument("--relations", type=int, default=5)
    sp.add_argument("--density", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    sp.set_defaults(fn=cmd_gen_kg)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.fn(args)
    except HypekgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
