"""Command-line interface for the dataset toolchain.

Verbs mirror the pipeline stages and hand artifacts off through the
output directory, so a corpus can be processed stage by stage:

    ingest -> annotate -> render -> extract -> label-structure
           -> split -> emit          (plus stats, qc-sample, evaluate)

Exit codes: 0 success, 1 fatal configuration or tool error, 2 partial
success (some documents dropped; details in the manifest).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset, metrics, pipeline
from .config import PipelineConfig, load_config
from .errors import ConfigError, SplitTooLarge, TableSmithError
from .ingest import scan_corpus
from .manifest import RunManifest
from .rendering import probe_render_tools
from .ingest import SourceKind

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


def _load_cfg(args) -> PipelineConfig:
    if args.config:
        return load_config(args.config)
    return PipelineConfig()


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _per_document(args, stage_fn, need_tools=False) -> int:
    """Run one stage over every ingested document, isolating failures."""
    cfg = _load_cfg(args)
    out = _out(args)
    manifest = RunManifest(out / "manifest.jsonl")
    docs = pipeline.read_documents(out)
    if need_tools:
        probe_render_tools(cfg.render,
                           need_word=any(d.kind == SourceKind.WORD for d in docs),
                           need_latex=any(d.kind == SourceKind.LATEX for d in docs),
                           need_raster=bool(docs))

    def run_one(doc) -> int:
        try:
            stage_fn(doc, cfg, out, manifest)
            return 0
        except TableSmithError as exc:
            manifest.record(doc_id=doc.id, stage=pipeline._stage_of(exc),
                            status="dropped", reason=str(exc)[:400])
            logger.warning("dropped %s: %s", doc.id, exc)
            return 1

    if args.jobs > 1 and len(docs) > 1:
        import concurrent.futures

        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            dropped = sum(pool.map(run_one, docs))
    else:
        dropped = sum(run_one(doc) for doc in docs)
    return EXIT_PARTIAL if dropped else EXIT_OK


def cmd_ingest(args) -> int:
    out = _out(args)
    manifest = RunManifest(out / "manifest.jsonl")
    docs = scan_corpus(args.corpus, manifest=manifest)
    pipeline.write_documents(out, docs)
    print(f"ingested {len(docs)} documents")
    return EXIT_OK


def cmd_annotate(args) -> int:
    return _per_document(args, lambda doc, cfg, out, mf: pipeline.annotate_document(doc, cfg, out))


def cmd_render(args) -> int:
    def stage(doc, cfg, out, manifest):
        if (out / "work" / doc.id / "pages" / "control").is_dir():
            return  # already rendered
        suffix = ".docx" if doc.kind == SourceKind.WORD else ".tex"
        if not (out / "work" / doc.id / f"annotated{suffix}").exists():
            return  # document had no tables or was dropped earlier
        pipeline.render_document(doc, cfg, out, manifest)

    return _per_document(args, stage, need_tools=True)


def cmd_extract(args) -> int:
    def stage(doc, cfg, out, manifest):
        if not (out / "work" / doc.id / "pages" / "control").is_dir():
            return
        records = pipeline.extract_document(doc, cfg, out)
        existing = [r for r in pipeline.load_records(out, doc.id) if r.task == dataset.STRUCTURE]
        pipeline.save_records(out, doc.id, records + existing)

    return _per_document(args, stage)


def cmd_label_structure(args) -> int:
    def stage(doc, cfg, out, manifest):
        det = [r for r in pipeline.load_records(out, doc.id) if r.task == dataset.DETECTION]
        if not det:
            return
        structure = pipeline.structure_document(doc, cfg, out, det, manifest)
        pipeline.save_records(out, doc.id, det + structure)

    return _per_document(args, stage)


def cmd_split(args) -> int:
    out = _out(args)
    records = pipeline.load_records(out)
    try:
        labeled = dataset.make_splits(records, args.val, args.test, seed=args.seed)
    except SplitTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    splits = {r.record_id: r.split for r in labeled}
    (out / "splits.json").write_text(json.dumps(splits, indent=1, sort_keys=True),
                                     encoding="utf-8")
    counts = {}
    for split in splits.values():
        counts[split] = counts.get(split, 0) + 1
    print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


def cmd_emit(args) -> int:
    out = _out(args)
    records = pipeline.load_records(out)
    splits_path = out / "splits.json"
    if splits_path.exists():
        splits = json.loads(splits_path.read_text(encoding="utf-8"))
        for rec in records:
            rec.split = splits.get(rec.record_id)
    header = {"seed": args.seed, "out_dir": str(out)}
    if args.config:
        header["config"] = str(args.config)
    cfg = _load_cfg(args)
    header["dpi"] = cfg.render.dpi
    header["render_tools"] = {"word_to_pdf_cmd": cfg.render.word_to_pdf_cmd,
                              "latex_to_pdf_cmd": cfg.render.latex_to_pdf_cmd,
                              "rasterize_cmd": cfg.render.rasterize_cmd}
    emitted = dataset.emit_dataset(records, out / "dataset", header=header,
                                   images_root=out)
    print(json.dumps(emitted, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_stats(args) -> int:
    out = _out(args)
    records = pipeline.load_records(out)
    manifest = RunManifest(out / "manifest.jsonl")
    stats = dataset.corpus_stats(records, manifest.drop_counts())
    print(json.dumps(stats.to_dict(), indent=1, sort_keys=True))
    return EXIT_PARTIAL if stats.drops else EXIT_OK


def cmd_qc_sample(args) -> int:
    out = _out(args)
    records = [r for r in pipeline.load_records(out) if r.task == dataset.DETECTION]
    if args.n > len(records):
        print(f"error: sample size {args.n} exceeds {len(records)} records", file=sys.stderr)
        return EXIT_FATAL
    rows = dataset.qc_sample(records, args.n, seed=args.seed,
                             out_dir=out / "qc", images_root=out)
    dataset.write_qc_manifest(rows, out / "qc" / "qc_manifest.jsonl")
    print(f"sampled {len(rows)} records into {out / 'qc'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.task == "detection":
        gts = dataset.read_coco(args.gt)
        preds = dataset.read_coco(args.pred)
        det = metrics.detection_prf(preds, gts)
        taxonomy = metrics.classify_errors(preds, gts, iou_match=args.iou_match,
                                           coverage_min=args.coverage_min)
        report = {
            "task": "detection",
            "metrics": det.to_dict(),
            "taxonomy": taxonomy.to_dict(),
            "taxonomy_display": taxonomy.rates_display(),
            "thresholds": {"iou_match": args.iou_match, "coverage_min": args.coverage_min},
        }
    else:
        gt = dataset.read_structure_tsv(args.gt)
        pred = dataset.read_structure_tsv(args.pred)
        keys = sorted(gt)
        pairs = [(pred.get(k, ""), gt[k]) for k in keys]
        scores = [metrics.bleu4(c, r) for c, r in pairs]
        report = {
            "task": "structure",
            "pairs": len(pairs),
            "bleu4_mean": sum(scores) / len(scores) if scores else 0.0,
            "exact_match": metrics.exact_match_by_length(pairs).to_dict(),
            "reference_lengths": metrics.length_distribution([r for _, r in pairs]).to_dict(),
        }
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tablesmith",
        description="Build table detection and structure datasets from "
                    "Word and LaTeX sources, and evaluate models on them.")
    parser.add_argument("--config", help="TOML or JSON pipeline configuration")
    parser.add_argument("--out-dir", default="tablesmith-out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel documents")
    parser.add_argument("--seed", type=int, default=0, help="PRNG seed for sampling")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="scan a corpus directory")
    p.add_argument("corpus")
    p.set_defaults(fn=cmd_ingest)

    sub.add_parser("annotate", help="write annotated and control variants").set_defaults(fn=cmd_annotate)
    sub.add_parser("render", help="render and rasterize both variants").set_defaults(fn=cmd_render)
    sub.add_parser("extract", help="diff renders into detection records").set_defaults(fn=cmd_extract)
    sub.add_parser("label-structure",
                   help="emit structure token targets per table").set_defaults(fn=cmd_label_structure)

    p = sub.add_parser("split", help="assign stratified val/test/train splits")
    p.add_argument("--val", type=int, required=True, help="validation records per source kind")
    p.add_argument("--test", type=int, required=True, help="test records per source kind")
    p.set_defaults(fn=cmd_split)

    sub.add_parser("emit", help="write COCO and TSV dataset files").set_defaults(fn=cmd_emit)
    sub.add_parser("stats", help="print corpus statistics").set_defaults(fn=cmd_stats)

    p = sub.add_parser("qc-sample", help="sample records for manual review")
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(fn=cmd_qc_sample)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--task", choices=("detection", "structure"), required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--iou-match", type=float, default=0.5)
    p.add_argument("--coverage-min", type=float, default=0.9)
    p.add_argument("--report", help="also write the JSON report to this path")
    p.set_defaults(fn=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
