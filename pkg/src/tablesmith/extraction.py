"""Pixel-level diffing of aligned page pairs and bounding box recovery.

A pixel counts as a label pixel when it differs between the annotated and
control renders by more than the tolerance AND the annotated pixel is
close to the sentinel color (the gate protects against incidental
renderer nondeterminism elsewhere on the page). Label pixels are grouped
into 8-connected components with two-pass labeling; each component's
axis-aligned bounding rectangle becomes a table box, tiny components are
discarded as speckle.
"""

from dataclasses import dataclass

import numpy as np

from .colors import SENTINEL_GREEN, SentinelColor
from .ingest import SourceKind
from .rendering import PagePair

DEFAULT_DIFF_TOL = 24
DEFAULT_SENTINEL_TOL = 64
DEFAULT_MIN_BOX_PX = 8


@dataclass
class PixelMask:
    """Boolean per-pixel mask over one page pair."""

    width_px: int
    height_px: int
    bits: np.ndarray  # shape (height_px, width_px), dtype bool

    def __post_init__(self):
        if self.bits.shape != (self.height_px, self.width_px):
            raise ValueError(f"mask shape {self.bits.shape} does not match "
                             f"{self.height_px}x{self.width_px}")
        if self.bits.dtype != np.bool_:
            raise ValueError("mask must be boolean")


@dataclass(frozen=True)
class TableBBox:
    """Table region in page-pixel coordinates, upper-left origin."""

    x: int
    y: int
    w: int
    h: int
    page_index: int = 0
    doc_id: str = ""
    source_kind: SourceKind = SourceKind.WORD

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"negative box origin ({self.x},{self.y})")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"degenerate box extent {self.w}x{self.h}")

    @property
    def xywh(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


def diff_pages(pair: PagePair, tol: int = DEFAULT_DIFF_TOL,
               sentinel: SentinelColor = SENTINEL_GREEN,
               sentinel_tol: int = DEFAULT_SENTINEL_TOL) -> PixelMask:
    """Mark pixels that changed between the two renders and match the sentinel.

    A bit is set iff the largest per-channel absolute difference exceeds
    ``tol`` (strictly) and the annotated pixel deviates from the sentinel
    by at most ``sentinel_tol`` per channel. Pure function of the pair.
    """
    a = pair.annotated.pixels.astype(np.int16)
    c = pair.control.pixels.astype(np.int16)
    differs = np.abs(a - c).max(axis=2) > tol
    near_sentinel = np.abs(a - np.array(sentinel.rgb, dtype=np.int16)).max(axis=2) <= sentinel_tol
    return PixelMask(width_px=pair.annotated.width_px,
                     height_px=pair.annotated.height_px,
                     bits=differs & near_sentinel)


def _label_components(bits: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Two-pass 8-connected labeling over the set pixels.

    First pass assigns provisional labels in raster order and unions
    labels across the four already-seen neighbors; second pass resolves
    equivalences and accumulates per-component extents. Runs on the sparse
    pixel list, so cost scales with mask population, not page area.
    """
    ys, xs = np.nonzero(bits)
    if len(ys) == 0:
        return []

    parent = []

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    label_at = {}
    pixel_labels = np.empty(len(ys), dtype=np.int64)
    for idx in range(len(ys)):
        y = int(ys[idx])
        x = int(xs[idx])
        neighbor_labels = []
        for ny, nx in ((y, x - 1), (y - 1, x - 1), (y - 1, x), (y - 1, x + 1)):
            lab = label_at.get((ny, nx))
            if lab is not None:
                neighbor_labels.append(lab)
        if neighbor_labels:
            lab = min(neighbor_labels)
            for other in neighbor_labels:
                union(lab, other)
        else:
            lab = len(parent)
            parent.append(lab)
        label_at[(y, x)] = lab
        pixel_labels[idx] = lab

    extents = {}
    for idx in range(len(ys)):
        root = find(int(pixel_labels[idx]))
        y = int(ys[idx])
        x = int(xs[idx])
        box = extents.get(root)
        if box is None:
            extents[root] = [x, y, x, y]
        else:
            if x < box[0]:
                box[0] = x
            if y < box[1]:
                box[1] = y
            if x > box[2]:
                box[2] = x
            if y > box[3]:
                box[3] = y
    return [(b[0], b[1], b[2] - b[0] + 1, b[3] - b[1] + 1) for b in extents.values()]


def mask_to_boxes(mask: PixelMask, min_box_px: int = DEFAULT_MIN_BOX_PX,
                  doc_id: str = "", page_index: int = 0,
                  source_kind: SourceKind = SourceKind.WORD) -> list[TableBBox]:
    """Bounding rectangles of the mask's 8-connected components.

    Components narrower or shorter than ``min_box_px`` are treated as
    noise. Boxes come back sorted top to bottom, then left to right.
    """
    rects = [r for r in _label_components(mask.bits)
             if r[2] >= min_box_px and r[3] >= min_box_px]
    rects.sort(key=lambda r: (r[1], r[0]))
    return [TableBBox(x=x, y=y, w=w, h=h, page_index=page_index,
                      doc_id=doc_id, source_kind=source_kind)
            for x, y, w, h in rects]


def extract_boxes(pair: PagePair, source_kind: SourceKind,
                  tol: int = DEFAULT_DIFF_TOL,
                  sentinel: SentinelColor = SENTINEL_GREEN,
                  sentinel_tol: int = DEFAULT_SENTINEL_TOL,
                  min_box_px: int = DEFAULT_MIN_BOX_PX) -> list[TableBBox]:
    """Diff one page pair and return its table boxes."""
    mask = diff_pages(pair, tol=tol, sentinel=sentinel, sentinel_tol=sentinel_tol)
    return mask_to_boxes(mask, min_box_px=min_box_px, doc_id=pair.doc_id,
                         page_index=pair.page_index, source_kind=source_kind)


def filter_labeled_pages(pages_with_boxes):
    """Keep only the (page, boxes) entries that carry at least one box.

    Order and original page indices are preserved.
    """
    return [(page, boxes) for page, boxes in pages_with_boxes if boxes]
