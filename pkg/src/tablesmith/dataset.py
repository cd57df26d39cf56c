"""Dataset records, split assignment, corpus statistics, and QC sampling.

Detection records are emitted as one COCO-style JSON per split (bbox as
[x, y, w, h], single category "table"); structure records as TSV lines of
image path and space-separated target tokens. All sampling is seeded and
the seed lands in the dataset header, so splits are reproducible.
"""

import json
import random
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from PIL import Image, ImageDraw

from .errors import SplitTooLarge
from .extraction import TableBBox
from .ingest import SourceKind

DETECTION = "detection"
STRUCTURE = "structure"
SPLITS = ("train", "val", "test")


@dataclass
class DatasetRecord:
    record_id: str
    task: str  # detection | structure
    image_path: str
    image_width: int
    image_height: int
    doc_id: str
    page_index: int
    source_kind: SourceKind
    annotations: list[TableBBox] = field(default_factory=list)  # detection only
    target_tokens: Optional[str] = None  # structure only
    split: Optional[str] = None

    def to_dict(self) -> dict:
        d = {
            "record_id": self.record_id,
            "task": self.task,
            "image_path": self.image_path,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "doc_id": self.doc_id,
            "page_index": self.page_index,
            "source_kind": self.source_kind.value,
            "annotations": [list(b.xywh) for b in self.annotations],
            "target_tokens": self.target_tokens,
            "split": self.split,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        kind = SourceKind(d["source_kind"])
        boxes = [TableBBox(x=b[0], y=b[1], w=b[2], h=b[3], page_index=d["page_index"],
                           doc_id=d["doc_id"], source_kind=kind)
                 for b in d.get("annotations", [])]
        return cls(record_id=d["record_id"], task=d["task"], image_path=d["image_path"],
                   image_width=d["image_width"], image_height=d["image_height"],
                   doc_id=d["doc_id"], page_index=d["page_index"], source_kind=kind,
                   annotations=boxes, target_tokens=d.get("target_tokens"),
                   split=d.get("split"))


@dataclass
class CorpusStats:
    """Table, page, and drop counts; word + latex always sum to combined."""

    detection_tables: dict[str, int] = field(default_factory=dict)
    structure_tables: dict[str, int] = field(default_factory=dict)
    pages: dict[str, int] = field(default_factory=dict)
    drops: dict[str, int] = field(default_factory=dict)

    def combined(self, counts: dict[str, int]) -> int:
        return sum(counts.values())

    def to_dict(self) -> dict:
        return {
            "detection_tables": dict(self.detection_tables),
            "detection_total": self.combined(self.detection_tables),
            "structure_tables": dict(self.structure_tables),
            "structure_total": self.combined(self.structure_tables),
            "pages": dict(self.pages),
            "pages_total": self.combined(self.pages),
            "drops": dict(self.drops),
        }


def corpus_stats(records: list[DatasetRecord], drops: Optional[dict] = None) -> CorpusStats:
    """Pure fold over records: order-independent counting."""
    stats = CorpusStats(drops=dict(drops or {}))
    for rec in records:
        kind = rec.source_kind.value
        if rec.task == DETECTION:
            stats.detection_tables[kind] = stats.detection_tables.get(kind, 0) + len(rec.annotations)
            stats.pages[kind] = stats.pages.get(kind, 0) + 1
        elif rec.task == STRUCTURE:
            stats.structure_tables[kind] = stats.structure_tables.get(kind, 0) + 1
    return stats


def _stratum_rng(seed: int, stratum: str) -> random.Random:
    return random.Random((seed & 0xFFFFFFFF) ^ zlib.crc32(stratum.encode("utf-8")))


def make_splits(records: list[DatasetRecord], val_n: int, test_n: int,
                seed: int = 0) -> list[DatasetRecord]:
    """Assign val/test/train split labels, stratified by source kind.

    ``val_n`` and ``test_n`` are per-stratum record counts, sampled
    without replacement; everything else becomes train. Deterministic
    under a fixed seed. Raises SplitTooLarge when a stratum cannot supply
    the requested counts.
    """
    if val_n < 0 or test_n < 0:
        raise ValueError("split sizes must be nonnegative")
    strata: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        strata.setdefault(rec.source_kind.value, []).append(i)

    assignment = {}
    for stratum, indices in sorted(strata.items()):
        if val_n + test_n > len(indices):
            raise SplitTooLarge(
                f"stratum {stratum!r} has {len(indices)} records, "
                f"requested val {val_n} + test {test_n}")
        order = sorted(indices, key=lambda i: records[i].record_id)
        _stratum_rng(seed, stratum).shuffle(order)
        for i in order[:val_n]:
            assignment[i] = "val"
        for i in order[val_n : val_n + test_n]:
            assignment[i] = "test"
        for i in order[val_n + test_n :]:
            assignment[i] = "train"

    out = []
    for i, rec in enumerate(records):
        d = rec.to_dict()
        d["split"] = assignment[i]
        out.append(DatasetRecord.from_dict(d))
    return out


def qc_sample(records: list[DatasetRecord], n: int, seed: int = 0,
              out_dir=None, images_root=None) -> list[dict]:
    """Uniform sample without replacement for manual label review.

    When ``out_dir`` is given, each sampled detection record's page image
    is copied with its boxes drawn in red so a reviewer can judge them;
    the returned manifest rows carry an empty verdict field to fill in.
    """
    if n > len(records):
        raise ValueError(f"sample size {n} exceeds record count {len(records)}")
    order = sorted(records, key=lambda r: r.record_id)
    rng = random.Random(seed)
    sample = rng.sample(order, n)

    rows = []
    for rec in sample:
        row = {"record_id": rec.record_id, "image_path": rec.image_path,
               "n_boxes": len(rec.annotations), "verdict": ""}
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            src = Path(images_root) / rec.image_path if images_root else Path(rec.image_path)
            if src.exists():
                with Image.open(src) as img:
                    img = img.convert("RGB")
                    draw = ImageDraw.Draw(img)
                    for box in rec.annotations:
                        draw.rectangle([box.x, box.y, box.x + box.w - 1, box.y + box.h - 1],
                                       outline=(255, 0, 0), width=3)
                    review_path = out_dir / f"{rec.record_id}.png"
                    img.save(review_path)
                    row["review_image"] = str(review_path)
        rows.append(row)
    return rows


def write_qc_manifest(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def qc_error_rate(path) -> dict:
    """Fold reviewed verdicts back into a label-error rate.

    Verdict values: "ok" or "error"; rows with any other value count as
    unreviewed and are excluded from the denominator.
    """
    reviewed = errors = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            verdict = json.loads(line).get("verdict", "")
            if verdict in ("ok", "error"):
                reviewed += 1
                if verdict == "error":
                    errors += 1
    rate = errors / reviewed if reviewed else 0.0
    return {"reviewed": reviewed, "errors": errors, "error_rate": rate}


def write_coco(records: list[DatasetRecord], path) -> None:
    """COCO-style detection annotations for one split."""
    images = []
    annotations = []
    ann_id = 1
    for img_id, rec in enumerate(sorted(records, key=lambda r: r.record_id), start=1):
        images.append({"id": img_id, "file_name": rec.image_path,
                       "width": rec.image_width, "height": rec.image_height})
        for box in rec.annotations:
            annotations.append({
                "id": ann_id, "image_id": img_id, "category_id": 1,
                "bbox": [box.x, box.y, box.w, box.h],
                "area": box.w * box.h, "iscrowd": 0,
            })
            ann_id += 1
    doc = {"images": images, "annotations": annotations,
           "categories": [{"id": 1, "name": "table"}]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def read_coco(path) -> dict[str, list[tuple]]:
    """Boxes per file_name from a COCO-style file (GT or predictions)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    by_id = {img["id"]: img["file_name"] for img in doc.get("images", [])}
    pages: dict[str, list[tuple]] = {name: [] for name in by_id.values()}
    for ann in doc.get("annotations", []):
        name = by_id.get(ann["image_id"])
        if name is not None:
            x, y, w, h = ann["bbox"]
            pages[name].append((x, y, w, h))
    return pages


def write_structure_tsv(records: list[DatasetRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in sorted(records, key=lambda r: r.record_id):
            fh.write(f"{rec.image_path}\t{rec.target_tokens}\n")


def read_structure_tsv(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            image_path, _, tokens = line.partition("\t")
            out[image_path] = tokens
    return out


def emit_dataset(records: list[DatasetRecord], out_dir, header: Optional[dict] = None,
                 images_root=None) -> dict:
    """Write per-split COCO and TSV files plus the dataset header.

    Records without a split label land in train. When ``images_root`` is
    given, every record's image must exist under it and every detection
    record must carry at least one box; violations abort the emission.
    Returns emitted file paths keyed by artifact name.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if images_root is not None:
        missing = [r.record_id for r in records
                   if not (Path(images_root) / r.image_path).exists()]
        if missing:
            raise ValueError(f"records reference missing images: {missing[:5]}"
                             f"{'...' if len(missing) > 5 else ''}")
    boxless = [r.record_id for r in records if r.task == DETECTION and not r.annotations]
    if boxless:
        raise ValueError(f"detection records without boxes: {boxless[:5]}")
    emitted = {}
    for split in SPLITS:
        det = [r for r in records if r.task == DETECTION and (r.split or "train") == split]
        struct = [r for r in records if r.task == STRUCTURE and (r.split or "train") == split]
        if det:
            p = out_dir / f"detection_{split}.json"
            write_coco(det, p)
            emitted[f"detection_{split}"] = str(p)
        if struct:
            p = out_dir / f"structure_{split}.tsv"
            write_structure_tsv(struct, p)
            emitted[f"structure_{split}"] = str(p)

    header_doc = dict(header or {})
    header_doc.setdefault("coordinate_note",
                          "pixel coordinates are relative to the configured "
                          "render toolchain and DPI")
    header_doc["stats"] = corpus_stats(records).to_dict()
    header_path = out_dir / "dataset_header.json"
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header_doc, fh, indent=1, sort_keys=True)
    emitted["header"] = str(header_path)
    return emitted
