"""Single command-line entry point for the whole pipeline.

Subcommands: gen-workload, train-embedder, embed, summarize, train-labeler,
label, cross-validate, audit, recommend, evaluate-summary, serve. Every
subcommand takes --seed and is replayable: identical inputs and seed give
byte-identical outputs. Exit codes: 0 success, 1 usage error, 2 data/model
error. Diagnostics go to stderr, results to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import clustering, forest, kernels, simulator
from .doc2vec import Doc2VecConfig, train_doc2vec
from .errors import QuercError
from .forest import ForestConfig, ForestModel, audit_flag, cross_validate, train_forest
from .lstm import LstmConfig, train_autoencoder
from .service import QuercService, ServiceServer, load_embedder
from .tokenizer import TokenizerOptions
from .workload import WorkloadLog, read_log, write_log


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        print(text)


def _read_workload(path, strict=False) -> WorkloadLog:
    result = read_log(path, strict=strict)
    for rej in result.rejections:
        _info(f"{path}:{rej.line_no}: rejected: {rej.reason}")
    if result.rejections:
        _info(f"{path}: accepted {result.accepted} records, rejected {result.rejected}")
    return result.log


def _tokenizer_options(args) -> TokenizerOptions:
    return TokenizerOptions(
        normalize_literals=not args.no_normalize_literals,
        max_sequence_length=args.max_seq_len,
    )


def _embed_workload(embedder, log: WorkloadLog):
    """Embed every query; returns (indices, matrix, failures)."""
    vecs, kept, failures = [], [], []
    for i, rec in enumerate(log):
        try:
            vecs.append(embedder.embed_text(rec.query_text))
        except QuercError as exc:
            failures.append((i, str(exc)))
            continue
        kept.append(i)
    return kept, (np.vstack(vecs) if vecs else np.empty((0, embedder.dim))), failures


def build_parser() -> _Parser:
    parser = _Parser(prog="querc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0, help="deterministic seed (default 0)")
        return p

    p = add("gen-workload", "generate a synthetic workload from a schema/template spec")
    p.add_argument("--config", required=True, help="workload spec JSON (schema, templates, mix/users)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True, help="output workload JSONL")
    p.add_argument("--source-id", default="synthetic")

    p = add("train-embedder", "train a query embedder on a workload log")
    p.add_argument("--method", choices=("doc2vec", "lstm"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output model container (.qrc)")
    p.add_argument("--dim", type=int, default=128, help="doc2vec vector size")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.025)
    p.add_argument("--alpha-min", type=float, default=0.0001)
    p.add_argument("--infer-steps", type=int, default=50)
    p.add_argument("--hidden", type=int, default=128, help="lstm hidden size")
    p.add_argument("--embed-dim", type=int, default=64, help="lstm token embedding size")
    p.add_argument("--lr", type=float, default=0.25)
    p.add_argument("--grad-clip", type=float, default=5.0)
    p.add_argument("--no-teacher-forcing", action="store_true")
    p.add_argument("--epochs", type=int, default=None, help="default: 20 doc2vec, 10 lstm")
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--max-seq-len", type=int, default=256)
    p.add_argument("--no-normalize-literals", action="store_true")

    p = add("embed", "embed every query of a log; JSONL {index, vector} per line")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)

    p = add("summarize", "cluster a workload and emit witness queries")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--out", required=True, help="summary JSON")
    p.add_argument("--sql-out", default=None, help="plain-SQL witness file")
    p.add_argument("--k", type=int, default=None, help="fixed cluster count (default: elbow)")
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=clustering.DEFAULT_EPSILON)
    p.add_argument("--l2-normalize", action="store_true")

    p = add("train-labeler", "train a forest labeler for one channel")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--channel", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--min-leaf", type=int, default=2)
    p.add_argument("--features-per-split", type=int, default=None)
    p.add_argument("--thresholds-per-feature", type=int, default=4)

    p = add("label", "append predicted/confidence/mismatch channels offline")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--labeler", required=True)
    p.add_argument("--channel", required=True)
    p.add_argument("--out", required=True)

    p = add("cross-validate", "stratified k-fold accuracy for one channel")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--channel", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--group-by", default=None, help="breakdown channel (e.g. account)")
    p.add_argument("--out", default=None)
    p.add_argument("--pretty", action="store_true")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--min-leaf", type=int, default=2)
    p.add_argument("--features-per-split", type=int, default=None)
    p.add_argument("--thresholds-per-feature", type=int, default=4)

    p = add("audit", "flag records whose claimed channel differs from the prediction")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--labeler", required=True)
    p.add_argument("--channel", required=True)
    p.add_argument("--out", default=None)

    p = add("recommend", "greedy index recommendation for a workload")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--config", required=True, help="workload spec JSON (schema, templates)")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--out", default=None)

    p = add("evaluate-summary", "price the full workload under full- vs summary-recommended indexes")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--summary", required=True, help="summary JSON from `querc summarize`")
    p.add_argument("--config", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--pretty", action="store_true")

    p = add("serve", "run the labeling service (TCP line protocol or file replay)")
    p.add_argument("--config", required=True, help="service config JSON")
    p.add_argument("--replay", default=None, help="replay a JSONL log instead of serving")
    p.add_argument("--app", default=None, help="app_id for --replay")
    p.add_argument("--out", default=None, help="write replay outputs to this JSONL file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7432)

    return parser


def _forest_config(args) -> ForestConfig:
    return ForestConfig(
        n_trees=args.trees,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        features_per_split=args.features_per_split,
        thresholds_per_feature=args.thresholds_per_feature,
        seed=args.seed,
    )


def _cmd_gen_workload(args) -> int:
    spec = simulator.load_workload_spec(args.config)
    log = simulator.generate_workload(
        spec.schema,
        spec.templates,
        n=args.n,
        mix=spec.mix,
        seed=args.seed,
        users=spec.users,
        source_id=args.source_id,
    )
    write_log(log, args.out)
    _info(f"wrote {len(log)} records to {args.out}")
    return 0


def _cmd_train_embedder(args) -> int:
    log = _read_workload(args.input)
    opts = _tokenizer_options(args)
    if args.method == "doc2vec":
        config = Doc2VecConfig(
            dim=args.dim,
            window=args.window,
            negatives=args.negatives,
            epochs=args.epochs if args.epochs is not None else 20,
            alpha=args.alpha,
            alpha_min=args.alpha_min,
            infer_steps=args.infer_steps,
            seed=args.seed,
        )
        model = train_doc2vec(log, config, opts, min_count=args.min_count)
    else:
        config = LstmConfig(
            embed_dim=args.embed_dim,
            hidden=args.hidden,
            epochs=args.epochs if args.epochs is not None else 10,
            learning_rate=args.lr,
            grad_clip=args.grad_clip,
            teacher_forcing=not args.no_teacher_forcing,
            seed=args.seed,
        )
        model = train_autoencoder(log, config, opts, min_count=args.min_count)
    model.save(args.out)
    losses = model.epoch_losses
    _info(
        f"trained {args.method} on {len(log)} queries "
        f"(kernel backend: {kernels.backend_name()}); "
        f"epoch loss {losses[0]:.4f} -> {losses[-1]:.4f}; saved to {args.out}"
    )
    return 0


def _load_any_embedder(path):
    return load_embedder(path)


def _cmd_embed(args) -> int:
    log = _read_workload(args.input)
    embedder = _load_any_embedder(args.model)
    kept, matrix, failures = _embed_workload(embedder, log)
    lines = []
    pos = {idx: row for row, idx in enumerate(kept)}
    for i in range(len(log)):
        if i in pos:
            vec = matrix[pos[i]]
            lines.append(json.dumps({"index": i, "vector": [float(v) for v in vec]}))
        else:
            reason = dict(failures)[i]
            lines.append(json.dumps({"index": i, "error": reason}))
    _emit("\n".join(lines), args.out)
    if failures:
        _info(f"{len(failures)} queries could not be embedded")
    return 0


def _cmd_summarize(args) -> int:
    log = _read_workload(args.input)
    embedder = _load_any_embedder(args.embedder)
    summary = clustering.summarize(
        log,
        embedder,
        k=args.k,
        k_max=args.k_max,
        epsilon=args.epsilon,
        seed=args.seed,
        l2_normalize=args.l2_normalize,
    )
    clustering.write_summary(summary, args.out)
    if args.sql_out:
        clustering.write_witness_sql(summary, args.sql_out)
    _info(f"k={summary.k}, {len(summary.witnesses)} witnesses, {len(summary.failures)} failures")
    return 0


def _cmd_train_labeler(args) -> int:
    log = _read_workload(args.input)
    embedder = _load_any_embedder(args.embedder)
    kept, matrix, failures = _embed_workload(embedder, log)
    labels = []
    rows = []
    for row, idx in enumerate(kept):
        value = log[idx].labels.get(args.channel)
        if value is not None:
            labels.append(value)
            rows.append(row)
    if not labels:
        raise QuercError(f"no record carries channel {args.channel!r}")
    model = train_forest(matrix[rows], labels, _forest_config(args))
    model.metadata["channel"] = args.channel
    model.save(args.out)
    _info(
        f"trained forest on {len(labels)} examples, {len(model.classes)} classes; saved to {args.out}"
    )
    return 0


def _cmd_label(args) -> int:
    log = _read_workload(args.input)
    embedder = _load_any_embedder(args.embedder)
    labeler = ForestModel.load(args.labeler)
    out_records = []
    for rec in log:
        try:
            vector = embedder.embed_text(rec.query_text)
        except QuercError as exc:
            out_records.append(rec.with_labels({"querc_error": str(exc)}))
            continue
        predicted, confidence = labeler.predict(vector)
        extra = {
            f"predicted_{args.channel}": predicted,
            f"confidence_{args.channel}": repr(confidence),
        }
        assigned = rec.labels.get(args.channel)
        if assigned is not None:
            extra[f"mismatch_{args.channel}"] = "true" if predicted != assigned else "false"
        out_records.append(rec.with_labels(extra))
    write_log(WorkloadLog(out_records, source_id=log.source_id), args.out)
    _info(f"labeled {len(out_records)} records to {args.out}")
    return 0


def _cmd_cross_validate(args) -> int:
    log = _read_workload(args.input)
    embedder = _load_any_embedder(args.embedder)
    kept, matrix, _ = _embed_workload(embedder, log)
    labels, groups, rows = [], [], []
    for row, idx in enumerate(kept):
        value = log[idx].labels.get(args.channel)
        if value is None:
            continue
        labels.append(value)
        groups.append(log[idx].labels.get(args.group_by, "") if args.group_by else "")
        rows.append(row)
    if not labels:
        raise QuercError(f"no record carries channel {args.channel!r}")
    cv = cross_validate(matrix[rows], labels, folds=args.folds, config=_forest_config(args))
    report = {
        "channel": args.channel,
        "folds": args.folds,
        "examples": len(labels),
        "accuracy": cv.accuracy,
        "fold_accuracies": list(cv.fold_accuracies),
        "per_label": [
            {"label": lab, "count": cnt, "accuracy": acc}
            for lab, (cnt, acc) in cv.per_label_accuracy(labels).items()
        ],
    }
    if args.group_by:
        report["groups"] = forest.grouped_breakdown(cv, labels, groups)
    if args.pretty:
        lines = [f"channel={args.channel} folds={args.folds} accuracy={cv.accuracy:.4f}"]
        if args.group_by:
            lines.append(f"{'#queries':>10}  {'#classes':>8}  accuracy  {args.group_by}")
            for row in report["groups"]:
                lines.append(
                    f"{row['count']:>10}  {row['n_classes']:>8}  {row['accuracy']:>8.3f}  {row['group']}"
                )
        _emit("\n".join(lines), args.out)
    else:
        _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    return 0


def _cmd_audit(args) -> int:
    log = _read_workload(args.input)
    embedder = _load_any_embedder(args.embedder)
    labeler = ForestModel.load(args.labeler)
    lines = []
    for i, rec in enumerate(log):
        claimed = rec.labels.get(args.channel)
        if claimed is None:
            lines.append(json.dumps({"index": i, "error": f"no {args.channel} label"}))
            continue
        try:
            vector = embedder.embed_text(rec.query_text)
        except QuercError as exc:
            lines.append(json.dumps({"index": i, "error": str(exc)}))
            continue
        result = audit_flag(labeler, vector, claimed)
        lines.append(
            json.dumps(
                {
                    "index": i,
                    "claimed": claimed,
                    "predicted": result.predicted,
                    "confidence": result.confidence,
                    "match": result.match,
                }
            )
        )
    _emit("\n".join(lines), args.out)
    return 0


def _cmd_recommend(args) -> int:
    spec = simulator.load_workload_spec(args.config)
    log = _read_workload(args.input)
    result = simulator.recommend_indexes(log, args.budget, spec.schema, spec.templates)
    doc = {
        "budget_units": args.budget,
        "configuration": result.configuration.to_json_dict(),
        "work_units": result.work_units,
        "rounds": result.rounds,
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True), args.out)
    return 0


def _cmd_evaluate_summary(args) -> int:
    spec = simulator.load_workload_spec(args.config)
    log = _read_workload(args.input)
    with open(args.summary, "r", encoding="utf-8") as fh:
        summary_doc = json.load(fh)
    indices = [w["index"] for w in summary_doc["witnesses"]]
    report = simulator.evaluate_summary(log, indices, args.budget, spec.schema, spec.templates)
    if args.pretty:
        _emit(report.render_table(), args.out)
    else:
        _emit(json.dumps(report.to_json_dict(), indent=2, sort_keys=True), args.out)
    return 0


def _cmd_serve(args) -> int:
    service = QuercService.from_config_file(args.config)
    if args.replay:
        if not args.app:
            raise UsageError("--replay requires --app")
        outputs = service.replay_file(args.app, args.replay)
        if args.out:
            write_log(WorkloadLog(outputs), args.out)
        _info(f"replayed {len(outputs)} records through app {args.app}")
        return 0
    server = ServiceServer(service, host=args.host, port=args.port)
    host, port = server.address
    _info(f"serving on {host}:{port} (newline-delimited JSON; Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        _info("shutting down")
    finally:
        server.server_close()
    return 0


_COMMANDS = {
    "gen-workload": _cmd_gen_workload,
    "train-embedder": _cmd_train_embedder,
    "embed": _cmd_embed,
    "summarize": _cmd_summarize,
    "train-labeler": _cmd_train_labeler,
    "label": _cmd_label,
    "cross-validate": _cmd_cross_validate,
    "audit": _cmd_audit,
    "recommend": _cmd_recommend,
    "evaluate-summary": _cmd_evaluate_summary,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        _info(f"usage error: {exc}")
        parser.print_usage(sys.stderr)
        return 1
    except QuercError as exc:
        _info(f"error: {exc}")
        return 2
    except OSError as exc:
        _info(f"i/o error: {exc}")
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
