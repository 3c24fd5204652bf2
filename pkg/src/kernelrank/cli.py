"""Command-line pipeline: synth, labels, train, rank, eval, diagnose, gradcheck.

Every command is deterministic under fixed seed and inputs, and every
report echoes the fully resolved configuration in `#`-prefixed header
lines. Options may also be supplied through a JSON config file; explicit
command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import clicks, diagnostics, metrics, ranking, synth
from .corpus import (
    DEFAULT_QUERY_CAP,
    DEFAULT_TITLE_CAP,
    build_vocabulary,
    parse_query_log,
)
from .embeddings import load_embeddings
from .gradcheck import run_gradient_check
from .model import KernelBank, build_model, default_kernel_bank, load_model, save_model
from .training import TrainConfig, make_pairs, render_training_report, train

NDCG_DEPTHS = (1, 3, 10)


def _config_echo(args: argparse.Namespace, keys: list[str]) -> str:
    resolved = {key: getattr(args, key) for key in keys}
    return "config: " + json.dumps(resolved, sort_keys=True)


def _require_paths(parser: argparse.ArgumentParser, args: argparse.Namespace, names: list[str]) -> None:
    for name in names:
        value = getattr(args, name)
        if value is None:
            parser.error(f"--{name.replace('_', '-')} is required")
        if not Path(value).exists():
            parser.error(f"--{name.replace('_', '-')}: no such file {value}")


def _parse_kernels(spec: str) -> KernelBank:
    pairs = []
    for chunk in spec.split(","):
        mu, sigma = chunk.split(":")
        pairs.append((float(mu), float(sigma)))
    return KernelBank(
        np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])
    )


def cmd_synth(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = synth.SyntheticSpec(
        vocab_size=args.vocab_size,
        query_count=args.queries,
        docs_per_query=args.docs_per_query,
        synonym_density=args.synonym_density,
        click_noise=args.click_noise,
        seed=args.seed,
        sessions_per_query=args.sessions_per_query,
        test_fraction=args.test_fraction,
    )
    world = synth.generate(spec)
    from .corpus import serialize_query_log

    with open(out / "train.tsv", "w", encoding="utf-8") as fh:
        serialize_query_log(world.train_log, fh)
    with open(out / "test.tsv", "w", encoding="utf-8") as fh:
        serialize_query_log(world.test_log, fh)
    with open(out / "truth.tsv", "w", encoding="utf-8") as fh:
        synth.write_truth(world.truth, fh)
    print(
        f"wrote {len(world.train_log.sessions)} train and "
        f"{len(world.test_log.sessions)} test sessions to {out}"
    )
    return 0


def cmd_labels(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    _require_paths(parser, args, ["log"])
    with open(args.log, encoding="utf-8") as fh:
        log = parse_query_log(fh, lowercase=args.lowercase)
    labels = clicks.dctr_scores(log, smoothing=args.smoothing)
    graded, achieved = clicks.map_to_grades(labels)
    with open(args.labels_out, "w", encoding="utf-8") as fh:
        fh.write(f"# {_config_echo(args, ['log', 'smoothing', 'lowercase'])}\n")
        fh.write(f"# achieved_grade_distribution: {list(achieved)}\n")
        clicks.write_label_file(graded, fh)
    if args.raw_cases_out:
        cases = clicks.extract_raw_click_cases(log)
        with open(args.raw_cases_out, "w", encoding="utf-8") as fh:
            clicks.write_raw_cases(cases, fh)
        print(f"wrote {len(cases)} raw cases to {args.raw_cases_out}")
    print(f"wrote {len(graded.scores)} labels to {args.labels_out}")
    return 0


_TRAIN_ECHO_KEYS = [
    "log", "labels", "model_out", "report_out", "embeddings", "dim", "pooling",
    "frozen_embeddings", "kernels", "sigma", "min_count", "query_cap", "title_cap",
    "lowercase", "batch_size", "lr", "eps", "beta1", "beta2", "patience",
    "max_epochs", "validation_fraction", "grad_clip", "seed",
]


def cmd_train(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    _require_paths(parser, args, ["log", "labels"])
    with open(args.log, encoding="utf-8") as fh:
        log = parse_query_log(fh, lowercase=args.lowercase)
    vocab = build_vocabulary(log, min_count=args.min_count)
    with open(args.labels, encoding="utf-8") as fh:
        labels = clicks.read_label_file(fh)

    if args.kernels:
        bank = _parse_kernels(args.kernels)
    else:
        bank = default_kernel_bank(sigma=args.sigma)
    model = build_model(
        vocab.size,
        args.dim,
        args.seed,
        bank=bank,
        pooling_mode=args.pooling,
        embeddings_frozen=args.frozen_embeddings,
    )
    coverage = None
    if args.embeddings:
        _require_paths(parser, args, ["embeddings"])
        with open(args.embeddings, encoding="utf-8") as fh:
            model.embeddings, coverage = load_embeddings(fh, vocab, args.dim, args.seed)

    config = TrainConfig(
        batch_size=args.batch_size,
        lr=args.lr,
        eps=args.eps,
        beta1=args.beta1,
        beta2=args.beta2,
        patience_epochs=args.patience,
        max_epochs=args.max_epochs,
        validation_fraction=args.validation_fraction,
        seed=args.seed,
        grad_clip=args.grad_clip,
    )
    pairs = make_pairs(
        labels.by_query(use_grades=args.pair_on_grades), log, vocab,
        query_cap=args.query_cap, title_cap=args.title_cap, seed=args.seed,
    )
    result = train(model, pairs, config)

    encoding = {
        "query_cap": args.query_cap,
        "title_cap": args.title_cap,
        "lowercase": args.lowercase,
    }
    with open(args.model_out, "w", encoding="utf-8") as fh:
        save_model(result.model, vocab, fh, encoding=encoding)

    header = [_config_echo(args, _TRAIN_ECHO_KEYS)]
    header.append("kernel_bank: " + json.dumps(model.kernel_bank.kernels))
    variant = []
    if args.frozen_embeddings:
        variant.append("frozen-embeddings")
    if args.pooling != "kernel":
        variant.append(f"{args.pooling}-pooling")
    if args.kernels:
        variant.append("custom-kernels")
    header.append("variant: " + (",".join(variant) if variant else "full"))
    if coverage is not None:
        header.append(f"embedding_coverage: {coverage!r}")
    header.append(f"pairs: {len(pairs)}")
    with open(args.report_out, "w", encoding="utf-8") as fh:
        fh.write(render_training_report(result, header))
    print(f"trained on {len(pairs)} pairs; selected epoch {result.selected_epoch}")
    return 0


def cmd_rank(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    _require_paths(parser, args, ["model", "log"])
    with open(args.model, encoding="utf-8") as fh:
        model, vocab, encoding = load_model(fh)
    with open(args.log, encoding="utf-8") as fh:
        log = parse_query_log(fh, lowercase=encoding.get("lowercase", False))
    scores = ranking.rank_log(
        model, vocab, log,
        query_cap=encoding.get("query_cap", DEFAULT_QUERY_CAP),
        title_cap=encoding.get("title_cap", DEFAULT_TITLE_CAP),
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        ranking.write_runs(scores, vocab, log, fh)
    print(f"ranked {len(scores)} queries into {args.out}")
    return 0


def _graded_metrics(runs: dict[str, dict[str, float]], labels: clicks.RelevanceLabelSet):
    grades_by_query: dict[str, dict[str, int]] = {}
    for (query_key, doc_id), grade in labels.grades.items():
        grades_by_query.setdefault(query_key, {})[doc_id] = grade
    per_metric: dict[str, dict[str, float]] = {f"ndcg@{k}": {} for k in NDCG_DEPTHS}
    for query_key, per_doc in runs.items():
        if query_key not in grades_by_query:
            raise metrics.AlignmentError(f"no labels for query {query_key!r}")
        ranked = [doc_id for doc_id, _ in ranking.ordered_docs(per_doc)]
        for k in NDCG_DEPTHS:
            per_metric[f"ndcg@{k}"][query_key] = metrics.ndcg_at_k(
                ranked, grades_by_query[query_key], k
            )
    return per_metric


def _raw_metrics(runs: dict[str, dict[str, float]], cases: list[clicks.RawClickCase]):
    values: dict[str, float] = {}
    for i, case in enumerate(cases):
        if case.query_key not in runs:
            raise metrics.AlignmentError(f"no run entries for query {case.query_key!r}")
        per_doc = runs[case.query_key]
        ranked = sorted(case.doc_ids, key=lambda d: (-per_doc.get(d, float("-inf")), d))
        values[f"{i}:{case.query_key}"] = metrics.reciprocal_rank(
            ranked, case.clicked_id, case.query_key
        )
    return {"mrr": values}


def cmd_eval(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    _require_paths(parser, args, ["runs", "labels"])
    with open(args.runs, encoding="utf-8") as fh:
        runs_a = ranking.read_runs(fh)
    runs_b = None
    if args.runs_b:
        _require_paths(parser, args, ["runs_b"])
        with open(args.runs_b, encoding="utf-8") as fh:
            runs_b = ranking.read_runs(fh)

    if args.mode == "graded":
        with open(args.labels, encoding="utf-8") as fh:
            labels = clicks.read_label_file(fh)
        metric_sets = [_graded_metrics(runs_a, labels)]
        if runs_b is not None:
            metric_sets.append(_graded_metrics(runs_b, labels))
    else:
        with open(args.labels, encoding="utf-8") as fh:
            cases = clicks.read_raw_cases(fh)
        metric_sets = [_raw_metrics(runs_a, cases)]
        if runs_b is not None:
            metric_sets.append(_raw_metrics(runs_b, cases))

    names = list(metric_sets[0])
    lines = [f"# {_config_echo(args, ['runs', 'runs_b', 'labels', 'mode', 'iterations', 'seed'])}"]
    lines.append("method\t" + "\t".join(names))
    for label, metric_set in zip(("runs_a", "runs_b"), metric_sets):
        means = [float(np.mean(list(metric_set[m].values()))) for m in names]
        lines.append(label + "\t" + "\t".join(f"{v:.6f}" for v in means))
    if runs_b is not None:
        for m in names:
            report = metrics.permutation_test(
                metric_sets[0][m], metric_sets[1][m],
                iterations=args.iterations, seed=args.seed,
            )
            lines.append(f"significance\t{m}\t{report.p_value:.6f}\t{report.iterations}\t{report.seed}")
            w, t, l = metrics.win_tie_loss(metric_sets[0][m], metric_sets[1][m])
            lines.append(f"wtl\t{m}\t{w}/{t}/{l}")
    text = "\n".join(lines) + "\n"
    with open(args.report_out, "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_diagnose(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    _require_paths(parser, args, ["model", "log"])
    with open(args.model, encoding="utf-8") as fh:
        model, vocab, encoding = load_model(fh)
    with open(args.log, encoding="utf-8") as fh:
        log = parse_query_log(fh, lowercase=encoding.get("lowercase", False))

    lines = [f"# {_config_echo(args, ['model', 'log', 'reference_embeddings', 'max_pairs', 'seed'])}"]
    rows = diagnostics.single_kernel_ablation(model, vocab, log)
    lines.append("ablation\tmu\tsigma\tweight\tmrr")
    for row in rows:
        lines.append(f"ablation\t{row.mu}\t{row.sigma}\t{row.weight!r}\t{row.mrr:.6f}")

    pairs = diagnostics.sample_word_pairs(log, vocab, max_pairs=args.max_pairs, seed=args.seed)
    counts = diagnostics.kernel_occupancy(model.embeddings, model.kernel_bank, pairs)
    lines.append("occupancy\tmu\tcount\tlog10_count")
    for (mu, _), count in zip(model.kernel_bank.kernels, counts):
        lines.append(f"occupancy\t{mu}\t{count}\t{np.log10(1 + count):.4f}")
    lines.append(f"occupancy_total\t{int(counts.sum())}\t{len(pairs)}")

    if args.reference_embeddings:
        _require_paths(parser, args, ["reference_embeddings"])
        with open(args.reference_embeddings, encoding="utf-8") as fh:
            reference, _ = load_embeddings(fh, vocab, model.embeddings.dim, seed=args.seed)
        move = diagnostics.movement_matrix(reference, model.embeddings, model.kernel_bank, pairs)
        lines.append("movement\tmu_from\t" + "\t".join(str(mu) for mu, _ in model.kernel_bank.kernels))
        for (mu, _), row in zip(model.kernel_bank.kernels, move):
            lines.append(f"movement\t{mu}\t" + "\t".join(f"{x:.4f}" for x in row))
    else:
        lines.append("# movement matrix skipped: no reference embeddings supplied")

    text = "\n".join(lines) + "\n"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_gradcheck(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    report = run_gradient_check(n_models=args.models, seed=args.seed)
    print(report.summary())
    for failure in report.failures[:20]:
        print(f"  {failure}")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelrank",
        description="Kernel-pooled neural ranking over click logs.",
    )
    parser.add_argument("--config", help="JSON file of option defaults", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic query log")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--queries", type=int, default=5000)
    p.add_argument("--docs-per-query", type=int, default=10)
    p.add_argument("--synonym-density", type=float, default=0.5)
    p.add_argument("--click-noise", type=float, default=0.1)
    p.add_argument("--sessions-per-query", type=int, default=8)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("labels", help="derive CTR labels, grades, and raw cases")
    p.add_argument("--log", required=True)
    p.add_argument("--labels-out", required=True)
    p.add_argument("--raw-cases-out", default=None)
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--lowercase", action="store_true")
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("train", help="train a ranking model from labels")
    p.add_argument("--log", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--report-out", required=True)
    p.add_argument("--embeddings", default=None, help="optional word2vec text init")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--pooling", choices=["kernel", "mean", "max"], default="kernel")
    p.add_argument("--frozen-embeddings", action="store_true")
    p.add_argument("--kernels", default=None, help="override bank as mu:sigma,mu:sigma,...")
    p.add_argument("--sigma", type=float, default=0.1, help="width of the soft kernels")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--query-cap", type=int, default=DEFAULT_QUERY_CAP)
    p.add_argument("--title-cap", type=int, default=DEFAULT_TITLE_CAP)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--pair-on-grades", action="store_true",
                   help="build pairs from grades instead of raw scores")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=30)
    p.add_argument("--validation-fraction", type=float, default=0.05)
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="rank displayed candidates for each query")
    p.add_argument("--model", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="evaluate runs against labels or raw cases")
    p.add_argument("--runs", required=True)
    p.add_argument("--runs-b", default=None, help="second runs file to compare")
    p.add_argument("--labels", required=True, help="label file (graded) or raw-cases file (raw)")
    p.add_argument("--mode", choices=["graded", "raw"], default="graded")
    p.add_argument("--report-out", required=True)
    p.add_argument("--iterations", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="per-kernel ablation and occupancy reports")
    p.add_argument("--model", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reference-embeddings", default=None)
    p.add_argument("--max-pairs", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    p.add_argument("--models", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    # pre-scan for --config so file values become namespace defaults
    namespace = argparse.Namespace()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        with open(known.config, encoding="utf-8") as fh:
            for key, value in json.load(fh).items():
                setattr(namespace, key, value)

    args = parser.parse_args(argv, namespace=namespace)
    return args.func(parser, args)


if __name__ == "__main__":
    sys.exit(main())
