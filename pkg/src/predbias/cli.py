"""Command-line interface.

Every command writes into a fresh subdirectory of --out named
``<command>-<12-hex config hash>``, so distinct configurations never collide
and rerunning an identical configuration reproduces the same bytes at the
same paths. Each artifact embeds the run configuration and the content
digest of every input file. Exit codes: 0 success, 1 runtime failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .artifacts import config_hash, read_artifact, sha256_of_file, write_artifact
from .balance import (
    BalancedUndersampler,
    ic_from_counts,
    ic_from_dataset,
    load_external_ic,
    load_ic_table,
    load_partition,
    partition_predicates,
    save_ic_table,
    save_partition,
)
from .dataset import load_dataset, load_vocabulary, save_dataset, save_vocabulary, dataset_digest
from .debias import (
    TRANSITION_SOURCES,
    build_confusion,
    build_overlap,
    build_transition_matrix,
    load_confusion,
    load_overlap,
    load_transition,
    save_confusion,
    save_overlap,
    save_transition,
)
from .errors import ConfigError, PredbiasError
from .freq_model import FrequencyModel, load_model, save_model
from .metrics import (
    confusion_report,
    evaluate_dataset,
    heatmap_triples,
    print_summary,
    save_report,
    trace_fraction,
)
from .pipeline import PipelineConfig, run_bpl_pipeline
from .synth import SynthConfig, build_synth_plan, generate_synthetic

PIPELINE_DEFAULTS = {
    "alpha": 1.0,
    "m": 15,
    "n": 2000,
    "epsilon": 1.0,
    "ic_base": 2.0,
    "strategy": None,
    "transition_source": None,
    "seed": 0,
    "k": "20,50,100",
    "all_pairs": False,
    "graph_constraint": True,
}


def _parse_k(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [p for p in str(value).split(",") if p.strip()]
    try:
        ks = tuple(int(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"k must be a comma-separated list of integers, got {value!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise ConfigError(f"k values must be positive, got {value!r}")
    return ks


def _none_if_none(value):
    if value is None or (isinstance(value, str) and value.lower() == "none"):
        return None
    return value


def _input_ref(path: str | Path) -> dict:
    return {"file": Path(path).name, "sha256": sha256_of_file(path)}


def _echo(command: str, params: dict, inputs: dict) -> dict:
    return {
        "command": command,
        "params": params,
        "inputs": {name: _input_ref(path) for name, path in inputs.items() if path is not None},
    }


def _run_dir(out_root: str | Path, command: str, echo: dict) -> Path:
    run_dir = Path(out_root) / f"{command}-{config_hash(echo)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    write_artifact(run_dir / "run_config.json", {"kind": "run_config", **echo})
    return run_dir


def _announce(run_dir: Path, names) -> None:
    print(f"artifacts in {run_dir}")
    for name in names:
        print(f"  {name}")


def _derived_ic(args, model, vocab, base: float = 2.0):
    """IC table for reporting: from an ic artifact when given, else from the
    model's stored training counts."""
    if getattr(args, "ic", None):
        return load_ic_table(args.ic, vocab)
    return ic_from_counts(model.predicate_marginal(), base=base, source="dataset")


def cmd_gen_synth(args) -> int:
    doc = read_artifact(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("synthetic config file must be a JSON object")
    if args.seed is not None:
        doc = {**doc, "seed": args.seed}
    cfg = SynthConfig.from_dict(doc)
    echo = _echo("gen-synth", cfg.to_dict(), {"config": args.config})
    run_dir = _run_dir(args.out, "gen-synth", echo)

    plan = build_synth_plan(cfg)
    train, test = generate_synthetic(cfg)
    vocab = train.vocabulary
    save_vocabulary(vocab, run_dir / "vocab.json")
    save_dataset(train, run_dir / "train.jsonl")
    save_dataset(test, run_dir / "test.jsonl")
    labels = vocab.predicate_labels
    manifest = {
        "kind": "synth_manifest",
        "config": cfg.to_dict(),
        "parent_map": {
            labels[k]: labels[p] for k, p in enumerate(plan.parent_of) if p >= 0
        },
        "context_sizes": {labels[k]: len(ctx) for k, ctx in enumerate(plan.contexts)},
        "target_marginal": {labels[k]: v for k, v in enumerate(plan.target_marginal)},
        "num_train_images": len(train.images),
        "num_test_images": len(test.images),
        "vocabulary_digest": vocab.digest(),
        "train_digest": dataset_digest(train),
        "test_digest": dataset_digest(test),
    }
    write_artifact(run_dir / "manifest.json", manifest)
    _announce(run_dir, ["vocab.json", "train.jsonl", "test.jsonl", "manifest.json"])
    return 0


def cmd_fit_freq(args) -> int:
    vocab = load_vocabulary(args.vocab)
    train = load_dataset(args.train, vocab, split_tag="train")
    echo = _echo(
        "fit-freq", {"epsilon": args.epsilon}, {"vocab": args.vocab, "train": args.train}
    )
    run_dir = _run_dir(args.out, "fit-freq", echo)
    model = FrequencyModel.from_dataset(train, epsilon=args.epsilon)
    save_model(model, run_dir / "model.json", provenance=echo)
    _announce(run_dir, ["model.json"])
    return 0


def cmd_build_confusion(args) -> int:
    vocab = load_vocabulary(args.vocab)
    model = load_model(args.model, vocab)
    train = load_dataset(args.train, vocab, split_tag="train")
    echo = _echo(
        "build-confusion", {}, {"vocab": args.vocab, "model": args.model, "train": args.train}
    )
    run_dir = _run_dir(args.out, "build-confusion", echo)
    cm = build_confusion(model, train)
    save_confusion(cm, vocab, run_dir / "confusion.json", provenance=echo)
    _announce(run_dir, ["confusion.json"])
    return 0


def cmd_build_bipartite(args) -> int:
    vocab = load_vocabulary(args.vocab)
    train = load_dataset(args.train, vocab, split_tag="train")
    echo = _echo("build-bipartite", {}, {"vocab": args.vocab, "train": args.train})
    run_dir = _run_dir(args.out, "build-bipartite", echo)
    om = build_overlap(train)
    save_overlap(om, vocab, run_dir / "overlap.json", provenance=echo)
    _announce(run_dir, ["overlap.json"])
    return 0


def cmd_build_transition(args) -> int:
    vocab = load_vocabulary(args.vocab)
    source = args.transition_source
    confusion = overlap = partition = None
    if source in ("cm", "ccm"):
        if args.confusion is None:
            raise ConfigError(f"--transition-source {source} requires --confusion")
        confusion = load_confusion(args.confusion, vocab)
    else:
        if args.overlap is None:
            raise ConfigError(f"--transition-source {source} requires --overlap")
        overlap = load_overlap(args.overlap, vocab)
        if source == "sobg":
            if args.partition is None:
                raise ConfigError("--transition-source sobg requires --partition")
            partition = load_partition(args.partition, vocab)
    echo = _echo(
        "build-transition",
        {"alpha": args.alpha, "transition_source": source},
        {
            "vocab": args.vocab,
            "confusion": args.confusion,
            "overlap": args.overlap,
            "partition": args.partition,
        },
    )
    run_dir = _run_dir(args.out, "build-transition", echo)
    tm = build_transition_matrix(
        source, args.alpha, confusion=confusion, overlap=overlap, partition=partition
    )
    save_transition(tm, vocab, run_dir / "transition.json", provenance=echo)
    _announce(run_dir, ["transition.json"])
    return 0


def cmd_ic(args) -> int:
    vocab = load_vocabulary(args.vocab)
    if (args.train is None) == (args.external_ic is None):
        raise ConfigError("ic needs exactly one of --train or --external-ic")
    echo = _echo(
        "ic",
        {"ic_base": args.ic_base},
        {"vocab": args.vocab, "train": args.train, "external_ic": args.external_ic},
    )
    run_dir = _run_dir(args.out, "ic", echo)
    if args.train is not None:
        ds = load_dataset(args.train, vocab, split_tag="train")
        table = ic_from_dataset(ds, base=args.ic_base)
    else:
        table = load_external_ic(args.external_ic, vocab, base=args.ic_base)
    save_ic_table(table, vocab, run_dir / "ic_table.json", provenance=echo)
    _announce(run_dir, ["ic_table.json"])
    return 0


def cmd_partition(args) -> int:
    vocab = load_vocabulary(args.vocab)
    table = load_ic_table(args.ic, vocab)
    echo = _echo("partition", {"m": args.m}, {"vocab": args.vocab, "ic": args.ic})
    run_dir = _run_dir(args.out, "partition", echo)
    part = partition_predicates(table, args.m)
    save_partition(part, vocab, run_dir / "partition.json", provenance=echo)
    _announce(run_dir, ["partition.json"])
    return 0


def cmd_balance(args) -> int:
    vocab = load_vocabulary(args.vocab)
    train = load_dataset(args.train, vocab, split_tag="train")
    partition = load_partition(args.partition, vocab)
    model = None
    if args.strategy == "blra":
        if args.model is None:
            raise ConfigError("--strategy blra requires --model for confidence scores")
        model = load_model(args.model, vocab)
    echo = _echo(
        "balance",
        {"strategy": args.strategy, "n": args.n, "seed": args.seed},
        {
            "vocab": args.vocab,
            "train": args.train,
            "partition": args.partition,
            "model": args.model,
        },
    )
    run_dir = _run_dir(args.out, "balance", echo)
    sampler = BalancedUndersampler(
        strategy=args.strategy,
        partition=partition,
        n_per_common=args.n,
        seed=args.seed,
        model=model,
    )
    adjusted = sampler.fit_resample(train)
    save_dataset(adjusted.dataset, run_dir / "adjusted_train.jsonl")
    write_artifact(
        run_dir / "adjusted_train.provenance.json",
        {"kind": "adjusted_domain", **adjusted.provenance(), "provenance": echo},
    )
    _announce(run_dir, ["adjusted_train.jsonl", "adjusted_train.provenance.json"])
    return 0


def _merged_pipeline_config(args) -> dict:
    doc = {}
    if args.config is not None:
        doc = read_artifact(args.config)
        if not isinstance(doc, dict):
            raise ConfigError("pipeline config file must be a JSON object")

    def pick(key, flag_value):
        if flag_value is not None:
            return flag_value
        if key in doc:
            return doc[key]
        return PIPELINE_DEFAULTS.get(key)

    merged = {
        "alpha": float(pick("alpha", args.alpha)),
        "m": int(pick("m", args.m)),
        "n": int(pick("n", args.n)),
        "epsilon": float(pick("epsilon", args.epsilon)),
        "ic_base": float(pick("ic_base", args.ic_base)),
        "strategy": _none_if_none(pick("strategy", args.strategy)),
        "transition_source": _none_if_none(pick("transition_source", args.transition_source)),
        "seed": int(pick("seed", args.seed)),
        "k_values": _parse_k(pick("k", args.k)),
        "all_pairs": bool(pick("all_pairs", args.all_pairs)),
        "graph_constraint": bool(pick("graph_constraint", args.graph_constraint)),
    }
    paths = {}
    for key in ("vocab", "train", "test", "external_ic"):
        flag = getattr(args, key)
        value = flag if flag is not None else doc.get(key)
        paths[key] = Path(value) if value is not None else None
    for key in ("vocab", "train", "test"):
        if paths[key] is None:
            raise ConfigError(f"missing required path {key!r} (flag or config key)")
    return {**merged, "paths": paths}


def cmd_run_pipeline(args) -> int:
    merged = _merged_pipeline_config(args)
    paths = merged.pop("paths")
    config = PipelineConfig(
        alpha=merged["alpha"],
        m=merged["m"],
        n=merged["n"],
        epsilon=merged["epsilon"],
        ic_base=merged["ic_base"],
        strategy=merged["strategy"],
        transition_source=merged["transition_source"],
        seed=merged["seed"],
        k_values=merged["k_values"],
        all_pairs=merged["all_pairs"],
        graph_constraint=merged["graph_constraint"],
    )
    vocab = load_vocabulary(paths["vocab"])
    train = load_dataset(paths["train"], vocab, split_tag="train")
    test = load_dataset(paths["test"], vocab, split_tag="test")
    external = None
    if paths["external_ic"] is not None:
        external = load_external_ic(paths["external_ic"], vocab, base=config.ic_base)
    echo = _echo(
        "run-pipeline",
        config.to_dict(),
        {
            "vocab": paths["vocab"],
            "train": paths["train"],
            "test": paths["test"],
            "external_ic": paths["external_ic"],
        },
    )
    run_dir = _run_dir(args.out, "run-pipeline", echo)
    result = run_bpl_pipeline(
        train,
        config,
        test=test,
        out_dir=run_dir,
        provenance=echo,
        external_ic=external,
    )
    names = sorted(p.name for p in run_dir.iterdir() if p.is_file())
    _announce(run_dir, names)
    print_summary(result.report)
    return 0


def cmd_evaluate(args) -> int:
    vocab = load_vocabulary(args.vocab)
    model = load_model(args.model, vocab)
    test = load_dataset(args.test, vocab, split_tag="test")
    tm = load_transition(args.transition, vocab) if args.transition else None
    ic_tables = {"dataset": _derived_ic(args, model, vocab, base=args.ic_base)}
    if args.external_ic:
        ic_tables["external"] = load_external_ic(args.external_ic, vocab, base=args.ic_base)
    ks = _parse_k(args.k)
    echo = _echo(
        "evaluate",
        {
            "k_values": list(ks),
            "ic_base": args.ic_base,
            "all_pairs": args.all_pairs,
            "graph_constraint": not args.no_graph_constraint,
        },
        {
            "vocab": args.vocab,
            "model": args.model,
            "test": args.test,
            "transition": args.transition,
            "ic": args.ic,
            "external_ic": args.external_ic,
        },
    )
    run_dir = _run_dir(args.out, "evaluate", echo)
    report = evaluate_dataset(
        model,
        test,
        tm=tm,
        k_values=ks,
        ic_tables=ic_tables,
        all_pairs=args.all_pairs,
        graph_constraint=not args.no_graph_constraint,
        config=echo,
    )
    save_report(report, vocab, run_dir / "report.json")
    _announce(run_dir, ["report.json"])
    print_summary(report)
    return 0


def cmd_report_confusion(args) -> int:
    vocab = load_vocabulary(args.vocab)
    model = load_model(args.model, vocab)
    test = load_dataset(args.test, vocab, split_tag="test")
    tm = load_transition(args.transition, vocab) if args.transition else None
    table = _derived_ic(args, model, vocab)
    echo = _echo(
        "report-confusion",
        {},
        {
            "vocab": args.vocab,
            "model": args.model,
            "test": args.test,
            "transition": args.transition,
            "ic": args.ic,
        },
    )
    run_dir = _run_dir(args.out, "report-confusion", echo)
    cm = confusion_report(model, test, tm=tm)
    fraction = trace_fraction(cm)
    triples = heatmap_triples(cm, vocab, table)
    doc = {
        "kind": "confusion_report",
        "predicate_labels": list(vocab.predicate_labels),
        "vocabulary_digest": vocab.digest(),
        "rows": [[int(v) for v in row] for row in cm.cells],
        "trace_fraction": fraction,
        "heatmap": [[r, c, v] for r, c, v in triples],
        "provenance": echo,
    }
    write_artifact(run_dir / "confusion_report.json", doc)
    _announce(run_dir, ["confusion_report.json"])
    print(f"trace fraction {fraction:.4f}")
    return 0


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output root; artifacts go to a config-hash subdirectory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="predbias",
        description="Debias long-tailed predicate predictions and evaluate them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic train/test dataset pair")
    p.add_argument("--config", required=True, help="JSON file of generator settings")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    _add_out(p)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("fit-freq", help="fit the frequency model on a training split")
    p.add_argument("--vocab", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--epsilon", type=float, default=1.0)
    _add_out(p)
    p.set_defaults(func=cmd_fit_freq)

    p = sub.add_parser("build-confusion", help="tally model predictions against annotations")
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    _add_out(p)
    p.set_defaults(func=cmd_build_confusion)

    p = sub.add_parser("build-bipartite", help="count shared subject-object contexts per predicate pair")
    p.add_argument("--vocab", required=True)
    p.add_argument("--train", required=True)
    _add_out(p)
    p.set_defaults(func=cmd_build_bipartite)

    p = sub.add_parser("build-transition", help="build a transition matrix from cached statistics")
    p.add_argument("--vocab", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--transition-source", required=True, choices=list(TRANSITION_SOURCES))
    p.add_argument("--confusion", default=None, help="confusion artifact (cm, ccm)")
    p.add_argument("--overlap", default=None, help="overlap artifact (soo, sobg)")
    p.add_argument("--partition", default=None, help="partition artifact (sobg)")
    _add_out(p)
    p.set_defaults(func=cmd_build_transition)

    p = sub.add_parser("ic", help="compute per-predicate information content")
    p.add_argument("--vocab", required=True)
    p.add_argument("--train", default=None)
    p.add_argument("--external-ic", default=None, help="external {label: count} JSON file")
    p.add_argument("--ic-base", type=float, default=2.0)
    _add_out(p)
    p.set_defaults(func=cmd_ic)

    p = sub.add_parser("partition", help="split predicates into common and informative")
    p.add_argument("--vocab", required=True)
    p.add_argument("--ic", required=True, help="information content artifact")
    p.add_argument("--m", type=int, default=15)
    _add_out(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("balance", help="build the adjusted domain by undersampling")
    p.add_argument("--vocab", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--strategy", required=True, choices=["blru", "blra"])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default=None, help="fitted model artifact (blra)")
    _add_out(p)
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("run-pipeline", help="full fit/balance/refit/debias/evaluate run")
    p.add_argument("--config", default=None, help="JSON config; flags override its keys")
    p.add_argument("--vocab", default=None)
    p.add_argument("--train", default=None)
    p.add_argument("--test", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--ic-base", type=float, default=None)
    p.add_argument("--strategy", choices=["blru", "blra", "none"], default=None)
    p.add_argument(
        "--transition-source", choices=list(TRANSITION_SOURCES) + ["none"], default=None
    )
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", default=None, help="comma-separated recall cutoffs")
    p.add_argument("--all-pairs", action="store_const", const=True, default=None)
    p.add_argument(
        "--no-graph-constraint",
        dest="graph_constraint",
        action="store_const",
        const=False,
        default=None,
    )
    p.add_argument("--external-ic", dest="external_ic", default=None)
    _add_out(p)
    p.set_defaults(func=cmd_run_pipeline)

    p = sub.add_parser("evaluate", help="evaluate persisted artifacts on a test split")
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--transition", default=None)
    p.add_argument("--ic", default=None, help="information content artifact for mRIC")
    p.add_argument("--external-ic", dest="external_ic", default=None)
    p.add_argument("--ic-base", type=float, default=2.0)
    p.add_argument("--k", default="20,50,100")
    p.add_argument("--all-pairs", action="store_true")
    p.add_argument("--no-graph-constraint", action="store_true")
    _add_out(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report-confusion", help="export a confusion heatmap ordered by information content")
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--transition", default=None)
    p.add_argument("--ic", default=None)
    _add_out(p)
    p.set_defaults(func=cmd_report_confusion)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PredbiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
