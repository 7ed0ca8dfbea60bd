"""Command-line interface: ``aliaskg <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import aliasing
from . import autodiff as ad
from .cooccur import accept
from .evaluation import Pipeline, report_row, write_metrics
from .kg import (KGFormatError, TaskError, build_task, load_relation_texts, load_triples)
from .subgraph import extract_enclosing, write_subgraph
from .synthetic import gen_synthetic_kg, write_synthetic
from .trainer import PROFILES, TrainConfig, TrainedModel, train

logger = logging.getLogger("aliaskg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
CLI_PROFILES = ("nell", "fb", "synth", "conceptnet")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global flags")
    g.add_argument("--config", type=Path, help="JSON file of training-config overrides")
    g.add_argument("--seed", type=int, default=None, help="master seed (default: 0)")
    g.add_argument("--kg", type=Path, help="triples TSV (head<TAB>relation<TAB>tail)")
    g.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aliaskg", description="Few-shot KG completion with "
                     "co-occurrence patterns and aliasing-relation evidence.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    common = _common()

    p = sub.add_parser("gen-synth", parents=[common], help="write a planted-rule synthetic KG",
                       description="Write triples.tsv, relation_texts.tsv and truth.json "
                       "for a planted-rule synthetic KG into --out.")
    p.add_argument("--entities", type=int, default=200, help="entity count (default: 200)")
    p.add_argument("--n-target", type=int, default=8, help="target-relation instances")
    p.add_argument("--n-alias", type=int, default=48, help="alias-relation instances")
    p.add_argument("--noise-edges", type=int, default=None,
                   help="triplets per noise relation (default: entities/2)")

    p = sub.add_parser("train", parents=[common], help="train a model",
                       description="Pretrain and freeze the AR encoder, then train the main "
                       "model. Writes model.ckpt, fg.ckpt, config.json, train_log.jsonl and "
                       "loss_curve.png into --out.")
    p.add_argument("--profile", choices=CLI_PROFILES, default="synth",
                   help="loss-weight and size defaults (default: synth)")
    p.add_argument("--fusion", choices=("sum", "learn"), default=None, help="fusion mode")
    p.add_argument("--lambda3", type=float, default=None, help="AR fusion rate")
    p.add_argument("--epochs", type=int, default=None, help="optimizer steps")
    p.add_argument("--holdout", action="append", default=[], metavar="RELATION",
                   help="relation removed before training (repeatable)")
    _text_flags(p)

    p = sub.add_parser("eval", parents=[common], help="rank few-shot queries",
                       description="Build K-shot tasks and write metrics.json, metrics.csv "
                       "and metrics.png into --out.")
    p.add_argument("--model", type=Path, default=None, help="model directory (default: --out)")
    p.add_argument("--relations", nargs="+", required=True, help="target relation names")
    p.add_argument("--k", type=int, default=3, help="support size (default: 3)")
    p.add_argument("--negatives", type=int, default=50, help="negatives per query (default: 50)")
    p.add_argument("--no-aliasing", action="store_true", help="disable the AR branch")
    p.add_argument("--lambda3", type=float, default=None, help="override the fusion rate")
    _text_flags(p)

    p = sub.add_parser("infer", parents=[common], help="score query pairs against a support set",
                       description="Print head, tail, score and accept/reject for every "
                       "query pair.")
    p.add_argument("--model", type=Path, default=None, help="model directory (default: --out)")
    p.add_argument("--support", type=Path, required=True,
                   help="TSV of head<TAB>relation<TAB>tail support triplets, one relation")
    p.add_argument("--queries", type=Path, required=True, help="TSV of head<TAB>tail pairs")
    p.add_argument("--epsilon", type=float, default=None, help="accept threshold")
    p.add_argument("--no-aliasing", action="store_true", help="disable the AR branch")
    _text_flags(p)

    p = sub.add_parser("import-embeddings", parents=[common],
                       help="validate and install relation text embeddings",
                       description="Validate a JSON-lines file of {relation, vector} records "
                       "against --kg and write relation_embeddings.jsonl into --out.")
    p.add_argument("embeddings", type=Path, help="JSON-lines embedding file")

    p = sub.add_parser("dump-subgraph", parents=[common],
                       help="write the enclosing subgraph of a pair",
                       description="Write subgraph.tsv for one (head, tail) pair into --out.")
    p.add_argument("--head", required=True, help="head entity name")
    p.add_argument("--tail", required=True, help="tail entity name")
    p.add_argument("--hops", type=int, default=1, help="neighbourhood radius (default: 1)")
    p.add_argument("--max-nodes", type=int, default=64, help="node cap (default: 64)")
    return parser


def _text_flags(p):
    p.add_argument("--relation-texts", type=Path, default=None,
                   help="relation descriptions TSV (default: relation_texts.tsv beside --kg)")
    p.add_argument("--embeddings", type=Path, default=None,
                   help="installed embedding file (default: hashed character trigrams)")


# ---------------------------------------------------------------------------
# helpers


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _load_kg(args):
    if args.kg is None:
        raise UsageError("--kg is required for this command")
    kg = load_triples(args.kg)
    texts = getattr(args, "relation_texts", None)
    if texts is None:
        sibling = args.kg.parent / "relation_texts.tsv"
        texts = sibling if sibling.exists() else None
    return load_relation_texts(kg, texts) if texts else kg


def _provider(args, kg):
    if getattr(args, "embeddings", None):
        return aliasing.load_embedding_file(args.embeddings, kg)
    return None


def _relation(kg, name):
    try:
        return kg.relation_id(name)
    except KeyError as exc:
        raise DataError(str(exc.args[0])) from None


def _train_config(args) -> TrainConfig:
    overrides = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            overrides.update(json.load(fh))
    for key in ("fusion", "lambda3", "epochs"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.seed is not None:
        overrides["seed"] = args.seed
    base = {**PROFILES[args.profile], **overrides}
    return TrainConfig.from_dict(base)


def _load_model(args, kg):
    model_dir = args.model or args.out
    if not (model_dir / "model.ckpt").exists():
        raise DataError(f"no model.ckpt in {model_dir}")
    model = TrainedModel.load(model_dir, kg.relation_count)
    if args.seed is not None:
        model.config = model.config.replace(seed=args.seed)
    return model


# ---------------------------------------------------------------------------
# commands


def cmd_gen_synth(args):
    kg, truth = gen_synthetic_kg(args.entities, seed=_seed(args), n_target=args.n_target,
                                 n_alias=args.n_alias, noise_edges=args.noise_edges)
    write_synthetic(kg, truth, args.out)
    print(f"wrote {len(kg)} triplets to {args.out / 'triples.tsv'}")


def cmd_train(args):
    from .plotting import plot_loss_curve

    kg = _load_kg(args)
    config = _train_config(args)
    for name in args.holdout:
        kg = kg.without_relation(_relation(kg, name))
    args.out.mkdir(parents=True, exist_ok=True)
    model = train(kg, config, provider=_provider(args, kg),
                  log_path=args.out / "train_log.jsonl")
    model.save(args.out)
    plot_loss_curve(model.history, args.out / "loss_curve.png")
    last = model.history[-1]["loss"] if model.history else float("nan")
    print(f"trained {config.epochs} steps, final loss {last:.6f}; wrote {args.out}")


def cmd_eval(args):
    from .plotting import plot_metrics

    kg = _load_kg(args)
    model = _load_model(args, kg)
    provider = _provider(args, kg)
    rows, ranks = [], {}
    for name in args.relations:
        r = _relation(kg, name)
        task, background = build_task(kg, r, args.k, args.negatives, _seed(args))
        pipe = Pipeline(model, background, provider=provider,
                        use_aliasing=not args.no_aliasing, lambda3=args.lambda3)
        result = pipe.evaluate(task)
        rows.append(report_row(kg.relation_names[r], result))
        ranks[kg.relation_names[r]] = result["ranks"]
    args.out.mkdir(parents=True, exist_ok=True)
    write_metrics(rows, args.out / "metrics.json", args.out / "metrics.csv")
    plot_metrics(rows, ranks, args.out / "metrics.png")
    for row in rows:
        print("\t".join([row["task"]] + [f"{row[k]:.4f}" for k in
                                         ("mrr", "hits1", "hits5", "hits10")]))


def _read_pairs(path, width):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split("\t")]
            if len(parts) != width:
                raise DataError(f"{path}:{lineno}: expected {width} tab-separated fields")
            rows.append(parts)
    if not rows:
        raise DataError(f"{path}: empty")
    return rows


def _entity(kg, name, where):
    try:
        return kg.entity_id(name)
    except KeyError:
        raise DataError(f"{where}: unknown entity {name!r}") from None


def cmd_infer(args):
    from .kg import FewShotTask

    kg = _load_kg(args)
    model = _load_model(args, kg)
    support_rows = _read_pairs(args.support, 3)
    relations = {r for _, r, _ in support_rows}
    if len(relations) != 1:
        raise DataError(f"{args.support}: support triplets must share one relation")
    r = _relation(kg, relations.pop())
    support = [(_entity(kg, h, args.support), _entity(kg, t, args.support))
               for h, _, t in support_rows]
    queries = [(_entity(kg, h, args.queries), _entity(kg, t, args.queries))
               for h, t in _read_pairs(args.queries, 2)]
    background = kg.without_relation(r)
    pipe = Pipeline(model, background, provider=_provider(args, kg),
                    use_aliasing=not args.no_aliasing)
    proto = pipe.prototype(FewShotTask(r, support))
    eps = model.config.epsilon if args.epsilon is None else args.epsilon
    for h, t in queries:
        s = pipe.score_pair(proto, h, t)
        verdict = "accept" if accept(s, eps) else "reject"
        print(f"{kg.entity_names[h]}\t{kg.entity_names[t]}\t{s:.6f}\t{verdict}")


def cmd_import_embeddings(args):
    kg = _load_kg(args)
    prov = aliasing.load_embedding_file(args.embeddings, kg)
    args.out.mkdir(parents=True, exist_ok=True)
    dest = args.out / "relation_embeddings.jsonl"
    with open(dest, "w", encoding="utf-8", newline="\n") as fh:
        for r, name in enumerate(kg.relation_names):
            fh.write(json.dumps({"relation": name, "vector": prov.vector(r).tolist()}) + "\n")
    print(f"installed {kg.relation_count} relation vectors to {dest}")


def cmd_dump_subgraph(args):
    kg = _load_kg(args)
    h = _entity(kg, args.head, "--head")
    t = _entity(kg, args.tail, "--tail")
    g = extract_enclosing(kg, h, t, args.hops, args.max_nodes, seed=_seed(args))
    args.out.mkdir(parents=True, exist_ok=True)
    write_subgraph(kg, g, args.out / "subgraph.tsv")
    print(f"{g.num_nodes} nodes, {g.num_edges} edges; wrote {args.out / 'subgraph.tsv'}")


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "import-embeddings": cmd_import_embeddings,
    "dump-subgraph": cmd_dump_subgraph,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"aliaskg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ad.ShapeError as exc:
        print(f"aliaskg {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (DataError, KGFormatError, TaskError, aliasing.AliasError, OSError,
            ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"aliaskg {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort classification
        logger.debug("internal error", exc_info=True)
        print(f"aliaskg {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
