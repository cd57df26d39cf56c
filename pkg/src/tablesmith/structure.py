"""Table markup to structure token sequences, plus inference-time cell filling.

Both Word XML and converter-produced LaTeX XML normalize to one closed
12-token vocabulary describing rows and cell occupancy. At inference
time, OCR text blocks are split into row groups by the largest vertical
gaps and poured into the occupied cells left to right.
"""

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .errors import ArityMismatch, EmptyTable, InvalidTagSequence, XmlParseError

VOCABULARY = (
    "<tabular>", "</tabular>",
    "<thead>", "</thead>",
    "<tbody>", "</tbody>",
    "<tr>", "</tr>",
    "<td>", "</td>",
    "<cell_y>", "<cell_n>",
)
OPEN_TO_CLOSE = {
    "<tabular>": "</tabular>",
    "<thead>": "</thead>",
    "<tbody>": "</tbody>",
    "<tr>": "</tr>",
    "<td>": "</td>",
}
CELL_TOKENS = ("<cell_y>", "<cell_n>")
_ALLOWED_PARENTS = {
    "<thead>": ("<tabular>",),
    "<tbody>": ("<tabular>",),
    "<tr>": ("<tabular>", "<thead>", "<tbody>"),
    "<td>": ("<tr>",),
}


@dataclass(frozen=True)
class TagSequence:
    """Structure of one table as tokens over the closed vocabulary."""

    tokens: tuple[str, ...]
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __len__(self):
        return len(self.tokens)

    def to_string(self) -> str:
        """Space-separated token string, the exact training-target format."""
        return " ".join(self.tokens)

    @classmethod
    def from_string(cls, text: str) -> "TagSequence":
        return cls(tokens=tuple(text.split()))

    def validate(self) -> None:
        """Pushdown check: balanced, properly nested, cells in row context.

        Raises InvalidTagSequence on the first violation.
        """
        toks = self.tokens
        if not toks:
            raise InvalidTagSequence("empty sequence")
        if toks[0] != "<tabular>" or toks[-1] != "</tabular>":
            raise InvalidTagSequence("sequence must start <tabular> and end </tabular>")
        close_to_open = {v: k for k, v in OPEN_TO_CLOSE.items()}
        stack = []
        for i, tok in enumerate(toks):
            if tok not in VOCABULARY:
                raise InvalidTagSequence(f"unknown token {tok!r} at {i}")
            if tok in OPEN_TO_CLOSE:
                if tok != "<tabular>" and stack[-1] not in _ALLOWED_PARENTS[tok]:
                    raise InvalidTagSequence(f"{tok} not allowed inside {stack[-1]} at {i}")
                if tok == "<tabular>" and stack:
                    raise InvalidTagSequence(f"nested <tabular> at {i}")
                stack.append(tok)
            elif tok in close_to_open:
                if not stack or stack[-1] != close_to_open[tok]:
                    raise InvalidTagSequence(f"unbalanced {tok} at {i}")
                stack.pop()
                if not stack and i != len(toks) - 1:
                    raise InvalidTagSequence(f"tokens after </tabular> at {i}")
            else:  # <cell_y> / <cell_n>
                if not stack or stack[-1] not in ("<tr>", "<td>"):
                    raise InvalidTagSequence(f"{tok} outside a row context at {i}")
        if stack:
            raise InvalidTagSequence(f"unclosed {stack[-1]}")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except InvalidTagSequence:
            return False
        return True

    def row_patterns(self) -> list[list[str]]:
        """Cell kinds per row: 'y' or 'n' per cell, one list per <tr>."""
        rows = []
        current = None
        for tok in self.tokens:
            if tok == "<tr>":
                current = []
            elif tok == "</tr>":
                rows.append(current if current is not None else [])
                current = None
            elif tok in CELL_TOKENS and current is not None:
                current.append("y" if tok == "<cell_y>" else "n")
        return rows

    @property
    def n_rows(self) -> int:
        return self.tokens.count("<tr>")


@dataclass(frozen=True)
class OcrBlock:
    """One recognized text block with its page-pixel bounding box."""

    text: str
    bbox: tuple[float, float, float, float]  # x, y, w, h

    def __post_init__(self):
        if not self.text:
            raise ValueError("OCR block text must be nonempty")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError(f"degenerate OCR block bbox {self.bbox}")

    @property
    def top(self) -> float:
        return self.bbox[1]

    @property
    def bottom(self) -> float:
        return self.bbox[1] + self.bbox[3]

    @property
    def v_center(self) -> float:
        return self.bbox[1] + self.bbox[3] / 2.0

    @property
    def left(self) -> float:
        return self.bbox[0]


@dataclass
class FilledCell:
    kind: str  # 'y' or 'n'
    content: Optional[str] = None  # always None for 'n' cells


@dataclass
class FilledTable:
    """A tag sequence's cells populated with OCR text."""

    rows: list[list[FilledCell]]
    surplus_rows: tuple[int, ...] = ()
    deficit_rows: tuple[int, ...] = ()
    # Rows whose pattern has no occupied cell still keep their text here
    # so no block content is ever dropped silently.
    unplaced: dict[int, tuple[str, ...]] = field(default_factory=dict)


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _children(elem, name: str):
    return [child for child in elem if _localname(child.tag) == name]


def _has_content(elem) -> bool:
    return any(t.strip() for t in elem.itertext())


def _cell_token(elem) -> str:
    return "<cell_y>" if _has_content(elem) else "<cell_n>"


_TRUTHY = ("1", "true", "on", None)  # attribute present without val means true


def _is_header_row(tr) -> bool:
    for trpr in _children(tr, "trPr"):
        for child in trpr:
            if _localname(child.tag) == "tblHeader":
                val = None
                for k, v in child.attrib.items():
                    if _localname(k) == "val":
                        val = v
                return val in _TRUTHY
    return False


def _grid_span(tc) -> int:
    for tcpr in _children(tc, "tcPr"):
        for child in tcpr:
            if _localname(child.tag) == "gridSpan":
                for k, v in child.attrib.items():
                    if _localname(k) == "val":
                        try:
                            return max(1, int(v))
                        except ValueError:
                            return 1
    return 1


def _assemble(header_rows: list[list[str]], body_rows: list[list[str]],
              meta: dict) -> TagSequence:
    tokens = ["<tabular>"]
    if header_rows:
        tokens.append("<thead>")
        for row in header_rows:
            tokens.append("<tr>")
            tokens.extend(row)
            tokens.append("</tr>")
        tokens.append("</thead>")
    tokens.append("<tbody>")
    for row in body_rows:
        tokens.append("<tr>")
        tokens.extend(row)
        tokens.append("</tr>")
    tokens.append("</tbody>")
    tokens.append("</tabular>")
    return TagSequence(tokens=tuple(tokens), meta=meta)


def word_xml_to_tags(table_xml: bytes) -> TagSequence:
    """Convert one ``<w:tbl>`` element to the token vocabulary.

    Rows map to <tr>; a cell becomes <cell_y> when any non-whitespace text
    survives markup stripping, else <cell_n>. Cells spanning grid columns
    are expanded into repeated cells so every row keeps its full arity.
    The leading run of rows marked as header rows is wrapped in <thead>;
    otherwise everything lives in a single <tbody>.
    """
    try:
        root = ET.fromstring(table_xml)
    except ET.ParseError as exc:
        raise XmlParseError(f"table XML is malformed: {exc}") from exc
    if _localname(root.tag) != "tbl":
        raise XmlParseError(f"expected a w:tbl element, got {_localname(root.tag)!r}")

    trs = _children(root, "tr")
    if not trs:
        raise EmptyTable("table has no rows")

    spanned = False
    rows = []
    headers = []
    for tr in trs:
        cells = []
        for tc in _children(tr, "tc"):
            span = _grid_span(tc)
            spanned = spanned or span > 1
            cells.extend([_cell_token(tc)] * span)
        rows.append(cells)
        headers.append(_is_header_row(tr))

    n_head = 0
    while n_head < len(rows) and headers[n_head]:
        n_head += 1
    meta = {"spanned": spanned} if spanned else {}
    return _assemble(rows[:n_head], rows[n_head:], meta)


def _int_attr(elem, *names: str, default: int = 1) -> int:
    for k, v in elem.attrib.items():
        if _localname(k) in names:
            try:
                return max(1, int(v))
            except ValueError:
                return default
    return default


def latexml_to_tags(latexml_xml: bytes) -> TagSequence:
    """Convert converter-produced XML for one tabular to the same vocabulary.

    Accepts the tabular element itself or a document containing exactly
    one. Column spans repeat the cell; row spans propagate the cell into
    the covered positions of following rows, so arity stays rectangular.
    """
    try:
        root = ET.fromstring(latexml_xml)
    except ET.ParseError as exc:
        raise XmlParseError(f"converter XML is malformed: {exc}") from exc

    tabular = root if _localname(root.tag) == "tabular" else None
    if tabular is None:
        for elem in root.iter():
            if _localname(elem.tag) == "tabular":
                tabular = elem
                break
    if tabular is None:
        raise XmlParseError("no tabular element found in converter XML")

    groups = []  # (is_header, [tr elements])
    direct_trs = _children(tabular, "tr")
    if direct_trs:
        groups.append((False, direct_trs))
    for section in tabular:
        name = _localname(section.tag)
        if name in ("thead", "tbody", "tfoot"):
            groups.append((name == "thead", _children(section, "tr")))

    if not any(trs for _, trs in groups):
        raise EmptyTable("tabular has no rows")

    spanned = False
    header_rows = []
    body_rows = []
    pending: dict[int, tuple[int, str]] = {}  # column -> (rows left, kind)
    for is_header, trs in groups:
        for tr in trs:
            row: list[str] = []
            col = 0

            def place(kind: str):
                nonlocal col
                while col in pending:
                    left, pkind = pending.pop(col)
                    row.append(pkind)
                    if left > 1:
                        pending[col] = (left - 1, pkind)
                    col += 1
                if kind:
                    row.append(kind)
                    col += 1

            for cell in tr:
                if _localname(cell.tag) not in ("td", "th"):
                    continue
                colspan = _int_attr(cell, "colspan", "cols")
                rowspan = _int_attr(cell, "rowspan", "rows")
                spanned = spanned or colspan > 1 or rowspan > 1
                kind = _cell_token(cell)
                for _ in range(colspan):
                    place(kind)
                    if rowspan > 1:
                        pending[col - 1] = (rowspan - 1, kind)
            place("")  # flush row-spanned columns trailing the last cell
            (header_rows if is_header else body_rows).append(row)

    meta = {"spanned": spanned} if spanned else {}
    return _assemble(header_rows, body_rows, meta)


def _merge_bands(blocks: list[OcrBlock]) -> list[list[OcrBlock]]:
    """Cluster blocks whose vertical intervals overlap into bands.

    Raw per-block gaps misfire on multi-line cells; merging first makes
    the gap ranking stable.
    """
    ordered = sorted(blocks, key=lambda b: (b.top, b.left))
    bands: list[list[OcrBlock]] = []
    band_bottom = None
    for block in ordered:
        if band_bottom is not None and block.top < band_bottom:
            bands[-1].append(block)
            band_bottom = max(band_bottom, block.bottom)
        else:
            bands.append([block])
            band_bottom = block.bottom
    return bands


def detect_row_groups(blocks: list[OcrBlock], n_rows: int) -> list[list[OcrBlock]]:
    """Split OCR blocks into ``n_rows`` ordered groups by vertical gaps.

    Blocks are clustered into vertical bands, then the n_rows - 1 largest
    inter-band gaps become the split points (ties prefer the topmost gap).
    When there are fewer bands than rows, trailing groups come back empty.
    Total function: never raises for any block arrangement.
    """
    if n_rows < 1:
        raise ValueError(f"n_rows must be at least 1, got {n_rows}")
    if not blocks:
        return [[] for _ in range(n_rows)]

    bands = _merge_bands(blocks)
    gaps = []  # (negative size, index) so sorting prefers big, then topmost
    for i in range(len(bands) - 1):
        below_top = min(b.top for b in bands[i + 1])
        above_bottom = max(b.bottom for b in bands[i])
        gaps.append((-(below_top - above_bottom), i))

    n_splits = min(n_rows - 1, len(bands) - 1)
    chosen = sorted(sorted(gaps)[:n_splits], key=lambda g: g[1])
    cut_after = [i for _, i in chosen]

    groups: list[list[OcrBlock]] = []
    current: list[OcrBlock] = []
    for i, band in enumerate(bands):
        current.extend(band)
        if i in cut_after:
            groups.append(current)
            current = []
    groups.append(current)
    while len(groups) < n_rows:
        groups.append([])
    for group in groups:
        group.sort(key=lambda b: (b.v_center, b.left))
    return groups


def fill_cells(tags: TagSequence, groups: list[list[OcrBlock]]) -> FilledTable:
    """Pour row groups into the sequence's occupied cells, left to right.

    Within each row, blocks sorted by left edge fill the <cell_y> cells in
    order. Surplus blocks are space-joined onto the row's last occupied
    cell; a deficit leaves trailing occupied cells with empty content.
    Both conditions are flagged on the result.
    """
    patterns = tags.row_patterns()
    if len(groups) != len(patterns):
        raise ArityMismatch(f"{len(groups)} groups for {len(patterns)} rows")

    rows: list[list[FilledCell]] = []
    surplus = []
    deficit = []
    unplaced = {}
    for r, (pattern, group) in enumerate(zip(patterns, groups)):
        texts = [b.text for b in sorted(group, key=lambda b: (b.left, b.top))]
        cells = [FilledCell(kind=k) for k in pattern]
        slots = [i for i, k in enumerate(pattern) if k == "y"]
        if slots:
            for i, slot in enumerate(slots):
                cells[slot].content = texts[i] if i < len(texts) else ""
            if len(texts) > len(slots):
                cells[slots[-1]].content = " ".join([cells[slots[-1]].content] + texts[len(slots):])
                surplus.append(r)
            elif len(texts) < len(slots):
                deficit.append(r)
        elif texts:
            unplaced[r] = tuple(texts)
            surplus.append(r)
        rows.append(cells)
    return FilledTable(rows=rows, surplus_rows=tuple(surplus),
                       deficit_rows=tuple(deficit), unplaced=unplaced)


def is_noise_table(tags: TagSequence, drop_single_empty_cell: bool = True) -> bool:
    """Heuristic noise filter applied before a table becomes a record.

    A table is noise when it has no cells at all, or when it is a single
    cell without content. Configurable because the boundary is a judgment
    call.
    """
    cells = [k for row in tags.row_patterns() for k in row]
    if not cells:
        return True
    if drop_single_empty_cell and len(cells) == 1 and cells[0] == "n":
        return True
    return False
