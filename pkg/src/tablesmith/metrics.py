"""Evaluation suite for table detection and structure recognition.

Detection precision/recall/F1 use area sums over all pages: the overlap,
prediction, and ground-truth region areas are accumulated across the
whole dataset before dividing, and region areas use union semantics so a
doubly covered pixel never counts twice. Structure output is scored with
unsmoothed 4-gram BLEU against a single reference, exact-match ratios by
reference length bucket, and a partial/un/mis-detection error taxonomy.
"""

import math
from collections import Counter
from dataclasses import dataclass, field


def _as_xywh(box) -> tuple:
    if hasattr(box, "xywh"):
        return box.xywh
    x, y, w, h = box
    return (x, y, w, h)


def _as_pages(boxes_by_page) -> dict:
    if isinstance(boxes_by_page, dict):
        return boxes_by_page
    return {0: list(boxes_by_page)}  # bare list means a single page


@dataclass
class DetectionMetrics:
    precision: float
    recall: float
    f1: float
    overlap_area: float
    detected_area: float
    gt_area: float
    empty_prediction: bool = False
    empty_ground_truth: bool = False

    def __post_init__(self):
        if self.overlap_area > min(self.detected_area, self.gt_area) + 1e-9:
            raise ValueError("overlap exceeds a region area")

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "overlap_area": self.overlap_area,
            "detected_area": self.detected_area,
            "gt_area": self.gt_area,
            "empty_prediction": self.empty_prediction,
            "empty_ground_truth": self.empty_ground_truth,
        }


def _page_region_areas(pred_boxes, gt_boxes):
    """Exact (overlap, pred union, gt union) areas via rectangle decomposition.

    Coordinates of all box edges are compressed into a grid; each grid
    cell is either inside or outside each region, so the areas are exact
    for integer and float coordinates alike, with no rasterization.
    """
    rects_p = [_as_xywh(b) for b in pred_boxes]
    rects_g = [_as_xywh(b) for b in gt_boxes]
    if not rects_p and not rects_g:
        return 0, 0, 0

    xs = sorted({x for r in rects_p + rects_g for x in (r[0], r[0] + r[2])})
    ys = sorted({y for r in rects_p + rects_g for y in (r[1], r[1] + r[3])})

    def cover(rects):
        grid = [[False] * (len(ys) - 1) for _ in range(len(xs) - 1)]
        for x, y, w, h in rects:
            i0 = xs.index(x)
            j0 = ys.index(y)
            i = i0
            while i < len(xs) - 1 and xs[i] < x + w:
                j = j0
                while j < len(ys) - 1 and ys[j] < y + h:
                    grid[i][j] = True
                    j += 1
                i += 1
        return grid

    grid_p = cover(rects_p)
    grid_g = cover(rects_g)
    overlap = pred_area = gt_area = 0
    for i in range(len(xs) - 1):
        dx = xs[i + 1] - xs[i]
        for j in range(len(ys) - 1):
            cell = dx * (ys[j + 1] - ys[j])
            if grid_p[i][j]:
                pred_area += cell
            if grid_g[i][j]:
                gt_area += cell
                if grid_p[i][j]:
                    overlap += cell
    return overlap, pred_area, gt_area


def detection_prf(preds, gts) -> DetectionMetrics:
    """Area-summed precision, recall, and F1 over page-keyed box sets.

    ``preds`` and ``gts`` map a page key to its boxes (a bare list is
    treated as one page). Overlap is the area of the intersection of the
    prediction and ground-truth region unions, summed over pages before
    the division (micro-aggregation). Empty prediction or ground truth
    pins the corresponding ratio to 0 and sets a flag.
    """
    preds = _as_pages(preds)
    gts = _as_pages(gts)
    overlap = detected = gt_total = 0
    for page in set(preds) | set(gts):
        o, p, g = _page_region_areas(preds.get(page, ()), gts.get(page, ()))
        overlap += o
        detected += p
        gt_total += g

    precision = overlap / detected if detected > 0 else 0.0
    recall = overlap / gt_total if gt_total > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return DetectionMetrics(
        precision=precision, recall=recall, f1=f1,
        overlap_area=overlap, detected_area=detected, gt_area=gt_total,
        empty_prediction=detected == 0, empty_ground_truth=gt_total == 0)


def _tokens(seq) -> list[str]:
    if hasattr(seq, "tokens"):
        return list(seq.tokens)
    if isinstance(seq, str):
        return seq.split()
    return list(seq)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate, reference, max_n: int = 4, smoothing: bool = False) -> float:
    """4-gram BLEU of a candidate against a single reference.

    Clipped n-gram precisions for n up to ``max_n`` are combined with
    uniform weights as a geometric mean, times the brevity penalty
    exp(1 - r/c) when the candidate is shorter than the reference. With
    ``smoothing`` off (the default, the classical definition) any zero
    precision annihilates the score; when on, zero counts at n >= 2 fall
    back to add-one precision (matches + 1) / (attempts + 1).
    """
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand:
        return 0.0

    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_ngrams = _ngram_counts(cand, n)
        attempts = sum(cand_ngrams.values())
        matches = sum((cand_ngrams & _ngram_counts(ref, n)).values())
        if attempts == 0 or matches == 0:
            if smoothing and n >= 2:
                log_sum += math.log((matches + 1) / (attempts + 1))
                continue
            return 0.0
        log_sum += math.log(matches / attempts)

    bp = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return bp * math.exp(log_sum / max_n)


LENGTH_BUCKETS = (("0-20", 0, 20), ("21-40", 21, 40), ("41-60", 41, 60),
                  ("61-80", 61, 80), (">80", 81, None))
ALL_BUCKET = "All"


def bucket_label(length: int) -> str:
    for label, lo, hi in LENGTH_BUCKETS:
        if length >= lo and (hi is None or length <= hi):
            return label
    return LENGTH_BUCKETS[0][0]  # lengths below the first bucket floor


@dataclass
class BucketStat:
    total: int = 0
    exact_match: int = 0
    ratio: float = 0.0


@dataclass
class LengthBucketReport:
    """Per-bucket totals, exact matches, and ratios, plus the All row."""

    buckets: dict[str, BucketStat] = field(default_factory=dict)

    def __post_init__(self):
        for label, _, _ in LENGTH_BUCKETS:
            self.buckets.setdefault(label, BucketStat())
        self.buckets.setdefault(ALL_BUCKET, BucketStat())

    def to_dict(self) -> dict:
        return {label: vars(stat) for label, stat in self.buckets.items()}


def exact_match_by_length(pairs) -> LengthBucketReport:
    """Exact-match counts bucketed by reference token length.

    A pair matches exactly when candidate and reference are token-equal.
    Ratio is exact matches over the bucket total.
    """
    report = LengthBucketReport()
    for candidate, reference in pairs:
        cand = _tokens(candidate)
        ref = _tokens(reference)
        stat = report.buckets[bucket_label(len(ref))]
        stat.total += 1
        all_stat = report.buckets[ALL_BUCKET]
        all_stat.total += 1
        if cand == ref:
            stat.exact_match += 1
            all_stat.exact_match += 1
    for stat in report.buckets.values():
        stat.ratio = stat.exact_match / stat.total if stat.total else 0.0
    return report


def length_distribution(refs) -> LengthBucketReport:
    """Reference-length totals per bucket; ratio is the share of all refs."""
    report = LengthBucketReport()
    for reference in refs:
        report.buckets[bucket_label(len(_tokens(reference)))].total += 1
        report.buckets[ALL_BUCKET].total += 1
    grand = report.buckets[ALL_BUCKET].total
    for stat in report.buckets.values():
        stat.ratio = stat.total / grand if grand else 0.0
    return report


def _intersection_area(a, b) -> float:
    ax, ay, aw, ah = _as_xywh(a)
    bx, by, bw, bh = _as_xywh(b)
    w = min(ax + aw, bx + bw) - max(ax, bx)
    h = min(ay + ah, by + bh) - max(ay, by)
    return w * h if w > 0 and h > 0 else 0.0


def _iou(a, b) -> float:
    inter = _intersection_area(a, b)
    if inter == 0:
        return 0.0
    _, _, aw, ah = _as_xywh(a)
    _, _, bw, bh = _as_xywh(b)
    return inter / (aw * ah + bw * bh - inter)


@dataclass
class ErrorTaxonomy:
    """Counts of partial, un-, and mis-detections with their denominators."""

    partial: int
    undetected: int
    misdetected: int
    gt_total: int
    pred_total: int

    def __post_init__(self):
        if self.undetected > self.gt_total:
            raise ValueError("more undetected tables than ground-truth tables")
        if self.misdetected > self.pred_total or self.partial > self.pred_total:
            raise ValueError("more flagged predictions than predictions")

    @property
    def rates(self) -> dict[str, float]:
        """Undetected over GT count; misdetected and partial over predictions."""
        return {
            "undetected": self.undetected / self.gt_total if self.gt_total else 0.0,
            "misdetected": self.misdetected / self.pred_total if self.pred_total else 0.0,
            "partial": self.partial / self.pred_total if self.pred_total else 0.0,
        }

    def rates_display(self) -> dict[str, str]:
        """Rates as percentages rounded to one decimal, e.g. '6.5%'."""
        return {name: f"{100.0 * rate:.1f}%" for name, rate in self.rates.items()}

    def to_dict(self) -> dict:
        return {
            "partial": self.partial,
            "undetected": self.undetected,
            "misdetected": self.misdetected,
            "gt_total": self.gt_total,
            "pred_total": self.pred_total,
            "rates": self.rates,
        }


def classify_errors(preds, gts, iou_match: float = 0.5,
                    coverage_min: float = 0.9) -> ErrorTaxonomy:
    """Sort detections into the partial/un-/mis-detection taxonomy.

    Per page, predictions and ground truths are matched one to one,
    greedily by descending IoU, accepting pairs at or above ``iou_match``.
    A ground truth intersecting no prediction is undetected; a prediction
    intersecting no ground truth is misdetected; a matched prediction
    covering less than ``coverage_min`` of its ground truth's area is
    partial. Counts are invariant to input order.
    """
    preds = _as_pages(preds)
    gts = _as_pages(gts)
    partial = undetected = misdetected = gt_total = pred_total = 0
    for page in sorted(set(preds) | set(gts), key=str):
        p_boxes = [_as_xywh(b) for b in preds.get(page, ())]
        g_boxes = [_as_xywh(b) for b in gts.get(page, ())]
        p_boxes.sort()
        g_boxes.sort()
        gt_total += len(g_boxes)
        pred_total += len(p_boxes)

        candidates = []
        for pi, p in enumerate(p_boxes):
            for gi, g in enumerate(g_boxes):
                iou = _iou(p, g)
                if iou >= iou_match:
                    candidates.append((-iou, pi, gi))
        candidates.sort()
        matched_p = {}
        matched_g = set()
        for neg_iou, pi, gi in candidates:
            if pi in matched_p or gi in matched_g:
                continue
            matched_p[pi] = gi
            matched_g.add(gi)

        for gi, g in enumerate(g_boxes):
            if all(_intersection_area(p, g) == 0 for p in p_boxes):
                undetected += 1
        for pi, p in enumerate(p_boxes):
            if all(_intersection_area(p, g) == 0 for g in g_boxes):
                misdetected += 1
            elif pi in matched_p:
                g = g_boxes[matched_p[pi]]
                if _intersection_area(p, g) < coverage_min * g[2] * g[3]:
                    partial += 1
    return ErrorTaxonomy(partial=partial, undetected=undetected,
                         misdetected=misdetected, gt_total=gt_total,
                         pred_total=pred_total)
