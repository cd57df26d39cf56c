"""End-to-end corpus processing: annotate, render, diff, label, emit.

Each document flows through independent stages with on-disk handoff under
the output directory, so any stage can be re-run and an interrupted run
resumes from the manifest instead of recomputing finished documents:

    work/{doc_id}/annotated.docx|.tex     annotated and control variants
    work/{doc_id}/pages/{variant}/*.png   rasterized renders
    images/{doc_id}_{page}.png            kept control pages (the dataset images)
    crops/{doc_id}_{page}_t{k}.png        per-table crops for structure targets
    records/{doc_id}.json                 dataset records for the document

Per-document failures are recorded and never abort the run.
"""

import concurrent.futures
import json
import logging
import tempfile
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Optional

from PIL import Image

from .config import PipelineConfig
from .dataset import DETECTION, STRUCTURE, CorpusStats, DatasetRecord, corpus_stats
from .docx_borders import locate_tables, make_control, recolor_borders, table_fragment
from .errors import (
    AlignmentBroken,
    AlreadyWrapped,
    DocumentCorrupt,
    EmptyTable,
    InvalidTagSequence,
    MissingDocumentPart,
    MissingPreamble,
    PageCountMismatch,
    RasterFailed,
    RenderFailed,
    TableSmithError,
    UnbalancedEnvironment,
    XmlParseError,
)
from .extraction import extract_boxes, filter_labeled_pages
from .ingest import (
    DEFAULT_EXTENSIONS,
    SourceDocument,
    SourceKind,
    repack_docx,
    scan_corpus,
    unpack_docx,
)
from .latex_borders import locate_tabular_envs, make_control_latex, wrap_fcolorbox
from .manifest import RunManifest
from .rendering import (
    PageImage,
    format_cmd,
    pair_pages,
    probe_render_tools,
    rasterize,
    render_to_pdf,
    run_cmd,
)
from .structure import TagSequence, is_noise_table, latexml_to_tags, word_xml_to_tags

logger = logging.getLogger(__name__)

_STAGE_OF = (
    ((DocumentCorrupt, MissingDocumentPart), "ingest"),
    ((XmlParseError, UnbalancedEnvironment, MissingPreamble, AlreadyWrapped), "annotate"),
    ((RenderFailed, RasterFailed), "render"),
    ((PageCountMismatch, AlignmentBroken), "pair"),
)


def _stage_of(exc: Exception) -> str:
    for types, stage in _STAGE_OF:
        if isinstance(exc, types):
            return stage
    return "process"


def _read_tex(path: Path) -> str:
    data = path.read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return data.decode("latin-1")


def _workdir(out_dir: Path, doc_id: str) -> Path:
    d = out_dir / "work" / doc_id
    d.mkdir(parents=True, exist_ok=True)
    return d


def annotate_document(doc: SourceDocument, cfg: PipelineConfig, out_dir: Path) -> int:
    """Write annotated and control source variants; returns the table count."""
    work = _workdir(out_dir, doc.id)
    if doc.kind == SourceKind.WORD:
        pkg = unpack_docx(doc)
        spans = locate_tables(pkg)
        top = [s for s in spans if s.nesting_depth == 0]
        if not top:
            return 0
        annotated = recolor_borders(pkg, spans, cfg.annotated_color, cfg.border_sz)
        control = make_control(pkg, spans, cfg.border_sz)
        (work / "annotated.docx").write_bytes(repack_docx(annotated))
        (work / "control.docx").write_bytes(repack_docx(control))
        return len(top)
    tex = _read_tex(doc.path)
    spans = locate_tabular_envs(tex)
    if not spans:
        return 0
    (work / "annotated.tex").write_text(wrap_fcolorbox(tex, spans), encoding="utf-8")
    (work / "control.tex").write_text(make_control_latex(tex, spans), encoding="utf-8")
    return len(spans)


def render_document(doc: SourceDocument, cfg: PipelineConfig, out_dir: Path,
                    manifest: Optional[RunManifest] = None) -> int:
    """Render and rasterize both variants; returns the page count."""
    work = _workdir(out_dir, doc.id)
    suffix = ".docx" if doc.kind == SourceKind.WORD else ".tex"
    support = doc.path.parent if doc.is_project else None
    n_pages = None
    for variant in ("annotated", "control"):
        src = work / f"{variant}{suffix}"
        pdf = render_to_pdf(src.read_bytes(), doc.kind, cfg.render,
                            manifest=manifest, doc_id=doc.id, support_dir=support)
        pages = rasterize(pdf, cfg.render, manifest=manifest, doc_id=doc.id)
        page_dir = work / "pages" / variant
        page_dir.mkdir(parents=True, exist_ok=True)
        for page in pages:
            page.to_png(page_dir / f"page-{page.page_index:04d}.png")
        n_pages = len(pages)
    return n_pages or 0


def _load_pages(page_dir: Path) -> list[PageImage]:
    files = sorted(page_dir.glob("page-*.png"))
    return [PageImage.from_file(p, i) for i, p in enumerate(files)]


def extract_document(doc: SourceDocument, cfg: PipelineConfig, out_dir: Path) -> list[DatasetRecord]:
    """Diff the rendered page pairs into detection records with images."""
    work = _workdir(out_dir, doc.id)
    annotated = _load_pages(work / "pages" / "annotated")
    control = _load_pages(work / "pages" / "control")
    pairs = pair_pages(annotated, control, doc.id)
    with_boxes = [(pair, extract_boxes(pair, doc.kind, tol=cfg.diff_tol,
                                       sentinel=cfg.annotated_color,
                                       sentinel_tol=cfg.sentinel_tol,
                                       min_box_px=cfg.min_box_px))
                  for pair in pairs]
    kept = filter_labeled_pages(with_boxes)

    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for pair, boxes in kept:
        name = f"{doc.id}_{pair.page_index}.png"
        pair.control.to_png(images_dir / name)
        records.append(DatasetRecord(
            record_id=f"{doc.id}_{pair.page_index}", task=DETECTION,
            image_path=f"images/{name}", image_width=pair.control.width_px,
            image_height=pair.control.height_px, doc_id=doc.id,
            page_index=pair.page_index, source_kind=doc.kind, annotations=boxes))
    return records


def _word_structure_tags(doc: SourceDocument) -> list[TagSequence]:
    pkg = unpack_docx(doc)
    spans = locate_tables(pkg)
    return [word_xml_to_tags(table_fragment(pkg, span))
            for span in spans if span.nesting_depth == 0]


def _outermost_tabulars(root) -> list:
    found = []

    def walk(elem):
        if elem.tag.rsplit("}", 1)[-1] == "tabular":
            found.append(elem)
            return  # nested tabulars fold into the outer table
        for child in elem:
            walk(child)

    walk(root)
    return found


def _latex_structure_tags(doc: SourceDocument, cfg: PipelineConfig,
                          manifest: Optional[RunManifest]) -> list[TagSequence]:
    if not cfg.latex_to_xml_cmd:
        return []
    with tempfile.TemporaryDirectory(prefix="tablesmith-latexml-") as tmp:
        tmpdir = Path(tmp)
        in_path = tmpdir / "input.tex"
        out_path = tmpdir / "output.xml"
        in_path.write_bytes(doc.path.read_bytes())
        argv = format_cmd(cfg.latex_to_xml_cmd, input=str(in_path), output=str(out_path))
        code, stderr, took = run_cmd(argv, cfg.render.timeout_s, cwd=tmpdir)
        if code != 0 or not out_path.exists():
            if manifest is not None:
                manifest.record(doc_id=doc.id, stage="structure", status="failed",
                                reason=(stderr or "converter produced no XML")[-400:],
                                duration_ms=int(took * 1000))
            return []
        xml_bytes = out_path.read_bytes()
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError:
        return []
    tags = []
    for elem in _outermost_tabulars(root):
        try:
            tags.append(latexml_to_tags(ET.tostring(elem)))
        except (EmptyTable, XmlParseError):
            continue
    return tags


def structure_document(doc: SourceDocument, cfg: PipelineConfig, out_dir: Path,
                       detection_records: list[DatasetRecord],
                       manifest: Optional[RunManifest] = None) -> list[DatasetRecord]:
    """Pair source tables with extracted boxes and emit structure records.

    Tables in source order correspond to boxes in reading order (pages
    ascending, then top to bottom). When the counts disagree the document
    contributes no structure records, which is recorded as a drop.
    """
    try:
        if doc.kind == SourceKind.WORD:
            all_tags = _word_structure_tags(doc)
        else:
            all_tags = _latex_structure_tags(doc, cfg, manifest)
    except (EmptyTable, InvalidTagSequence, XmlParseError) as exc:
        if manifest is not None:
            manifest.record(doc_id=doc.id, stage="structure", status="dropped",
                            reason=str(exc)[:400])
        return []
    if not all_tags:
        return []

    boxes_in_order = []
    for rec in sorted(detection_records, key=lambda r: r.page_index):
        for box in rec.annotations:
            boxes_in_order.append((rec, box))
    if len(all_tags) != len(boxes_in_order):
        if manifest is not None:
            manifest.record(doc_id=doc.id, stage="structure", status="dropped",
                            reason=f"{len(all_tags)} source tables vs "
                                   f"{len(boxes_in_order)} extracted boxes")
        return []

    crops_dir = out_dir / "crops"
    crops_dir.mkdir(parents=True, exist_ok=True)
    records = []
    per_page_counter: dict[int, int] = {}
    for tags, (det_rec, box) in zip(all_tags, boxes_in_order):
        if cfg.drop_noise_tables and is_noise_table(tags):
            continue
        tags.validate()
        k = per_page_counter.get(det_rec.page_index, 0)
        per_page_counter[det_rec.page_index] = k + 1
        crop_name = f"{doc.id}_{det_rec.page_index}_t{k}.png"
        page_png = out_dir / det_rec.image_path
        with Image.open(page_png) as img:
            crop = img.convert("RGB").crop((box.x, box.y, box.x + box.w, box.y + box.h))
            crop.save(crops_dir / crop_name)
        records.append(DatasetRecord(
            record_id=f"{doc.id}_{det_rec.page_index}_t{k}", task=STRUCTURE,
            image_path=f"crops/{crop_name}", image_width=box.w, image_height=box.h,
            doc_id=doc.id, page_index=det_rec.page_index, source_kind=doc.kind,
            target_tokens=tags.to_string()))
    return records


def _records_path(out_dir: Path, doc_id: str) -> Path:
    d = out_dir / "records"
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{doc_id}.json"


def save_records(out_dir: Path, doc_id: str, records: list[DatasetRecord]) -> None:
    path = _records_path(out_dir, doc_id)
    path.write_text(json.dumps([r.to_dict() for r in records], indent=1, sort_keys=True),
                    encoding="utf-8")


def load_records(out_dir: Path, doc_id: Optional[str] = None) -> list[DatasetRecord]:
    if doc_id is not None:
        path = _records_path(out_dir, doc_id)
        if not path.exists():
            return []
        return [DatasetRecord.from_dict(d) for d in json.loads(path.read_text(encoding="utf-8"))]
    records = []
    rec_dir = Path(out_dir) / "records"
    if rec_dir.is_dir():
        for path in sorted(rec_dir.glob("*.json")):
            records.extend(DatasetRecord.from_dict(d)
                           for d in json.loads(path.read_text(encoding="utf-8")))
    return records


def process_document(doc: SourceDocument, cfg: PipelineConfig, out_dir: Path,
                     manifest: RunManifest) -> list[DatasetRecord]:
    """Run one document through annotate, render, extract, and structure.

    Any stage failure drops the document (recorded, not fatal). Success
    persists the records file and a done marker for resumability.
    """
    try:
        n_tables = annotate_document(doc, cfg, out_dir)
        if n_tables == 0:
            manifest.record(doc_id=doc.id, stage="annotate", status="ok", reason="no tables")
            manifest.record(doc_id=doc.id, stage="done", status="ok", n_records=0)
            save_records(out_dir, doc.id, [])
            return []
        render_document(doc, cfg, out_dir, manifest)
        det_records = extract_document(doc, cfg, out_dir)
        struct_records = structure_document(doc, cfg, out_dir, det_records, manifest)
    except TableSmithError as exc:
        manifest.record(doc_id=doc.id, stage=_stage_of(exc), status="dropped",
                        reason=str(exc)[:400])
        logger.warning("dropped %s at %s: %s", doc.id, _stage_of(exc), exc)
        return []
    records = det_records + struct_records
    save_records(out_dir, doc.id, records)
    manifest.record(doc_id=doc.id, stage="done", status="ok", n_records=len(records))
    return records


def run_pipeline(corpus_root, cfg: PipelineConfig, out_dir, jobs: int = 1,
                 filters=DEFAULT_EXTENSIONS) -> tuple[CorpusStats, list[DatasetRecord]]:
    """Process a whole corpus into dataset records.

    Validates configuration and probes the external tools before touching
    any document. Documents already marked done in the manifest are loaded
    from their records file instead of being recomputed, so re-running
    after an interruption converges to the same dataset.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out_dir / "manifest.jsonl")

    cfg.validate()
    docs = scan_corpus(corpus_root, filters=filters)
    probe_render_tools(cfg.render,
                       need_word=any(d.kind == SourceKind.WORD for d in docs),
                       need_latex=any(d.kind == SourceKind.LATEX for d in docs),
                       need_raster=bool(docs))
    write_documents(out_dir, docs)

    done = manifest.completed_doc_ids()
    todo = [d for d in docs if not (d.id in done and _records_path(out_dir, d.id).exists())]
    resumed = [d for d in docs if d not in todo]

    records: list[DatasetRecord] = []
    for doc in resumed:
        records.extend(load_records(out_dir, doc.id))

    if jobs > 1 and len(todo) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            for result in pool.map(lambda d: process_document(d, cfg, out_dir, manifest), todo):
                records.extend(result)
    else:
        for doc in todo:
            records.extend(process_document(doc, cfg, out_dir, manifest))

    records.sort(key=lambda r: r.record_id)
    return corpus_stats(records, manifest.drop_counts()), records


def write_documents(out_dir: Path, docs: list[SourceDocument]) -> None:
    with open(Path(out_dir) / "documents.jsonl", "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"id": doc.id, "kind": doc.kind.value,
                                 "path": str(doc.path), "is_project": doc.is_project}) + "\n")


def read_documents(out_dir: Path) -> list[SourceDocument]:
    docs = []
    with open(Path(out_dir) / "documents.jsonl", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            docs.append(SourceDocument(id=d["id"], kind=SourceKind(d["kind"]),
                                       path=Path(d["path"]),
                                       is_project=d.get("is_project", False)))
    return docs
