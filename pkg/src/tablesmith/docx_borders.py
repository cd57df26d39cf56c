"""Locate tables in Word XML and recolor their borders in place.

Tables are the byte spans between ``<w:tbl>`` and ``</w:tbl>`` in the main
document part. Two package variants are produced from the same spans: one
with borders in a sentinel color and one with white borders (the control).
Because both variants receive byte-identical edits except for the color
value, they render with identical layout and can be diffed pixel by pixel.
"""

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass

from .colors import SENTINEL_WHITE, SentinelColor
from .errors import InvalidSpan, XmlParseError
from .ingest import DocxPackage

# Word border size unit is eighths of a point; 8 = 1pt, about 2px at 150 DPI.
DEFAULT_BORDER_SZ = 8

WORD_NS = b"http://schemas.openxmlformats.org/wordprocessingml/2006/main"

_TBL_TAG = re.compile(rb"<(/?)w:tbl(?=[\s/>])")
_PREFIX_USE = re.compile(rb"[<\s/]([A-Za-z_][\w.-]*):")
_TBLPR_OPEN = re.compile(rb"<w:tblPr(?=[\s/>])")
_TBLBORDERS = re.compile(rb"<w:tblBorders(?:\s[^>]*)?(?:/>|>.*?</w:tblBorders>)", re.DOTALL)
_TCBORDERS = re.compile(rb"<w:tcBorders(?:\s[^>]*)?>.*?</w:tcBorders>", re.DOTALL)
_COLOR_ATTR = re.compile(rb'w:color="[^"]*"')
_THEME_ATTRS = re.compile(rb'\s+w:theme(?:Color|Tint|Shade)="[^"]*"')


@dataclass(frozen=True)
class TableNodeSpan:
    """Byte span of one complete ``<w:tbl>`` element inside a package part."""

    part_name: str
    byte_start: int
    byte_end: int
    nesting_depth: int

    def __post_init__(self):
        if self.byte_start >= self.byte_end:
            raise ValueError("empty table span")
        if self.nesting_depth < 0:
            raise ValueError("negative nesting depth")


def locate_tables(pkg: DocxPackage) -> list[TableNodeSpan]:
    """Find every table element in the main document part, in document order.

    Nested tables are reported with nesting_depth > 0; only depth-0 spans
    are annotated downstream.
    """
    data = pkg.main_bytes()
    try:
        ET.fromstring(data)
    except ET.ParseError as exc:
        raise XmlParseError(f"main document XML is malformed: {exc}") from exc

    spans = []
    stack = []
    for m in _TBL_TAG.finditer(data):
        gt = data.index(b">", m.end())
        if m.group(1):  # closing tag
            if not stack:
                raise XmlParseError("unmatched </w:tbl>")
            start = stack.pop()
            spans.append(TableNodeSpan(pkg.main_document, start, gt + 1, len(stack)))
        elif data[gt - 1 : gt] == b"/":  # self-closing, degenerate but complete
            spans.append(TableNodeSpan(pkg.main_document, m.start(), gt + 1, len(stack)))
        else:
            stack.append(m.start())
    if stack:
        raise XmlParseError("unclosed <w:tbl>")
    spans.sort(key=lambda s: s.byte_start)
    return spans


def table_fragment(pkg: DocxPackage, span: TableNodeSpan) -> bytes:
    """Standalone bytes of one table span, namespace declarations included.

    A span sliced out of the main document loses the xmlns declarations
    that live on the document root; this re-adds one per prefix used so
    the fragment parses on its own.
    """
    data = pkg.parts[span.part_name][span.byte_start : span.byte_end]
    open_end = data.index(b">")
    head = data[:open_end]
    decls = b""
    for prefix in sorted({m.group(1) for m in _PREFIX_USE.finditer(data)}):
        if b"xmlns:" + prefix + b"=" in head:
            continue
        uri = WORD_NS if prefix == b"w" else b"urn:x-prefix:" + prefix
        decls += b' xmlns:' + prefix + b'="' + uri + b'"'
    return head + decls + data[open_end:]


def _borders_xml(color: SentinelColor, sz: int) -> bytes:
    edges = b"".join(
        b'<w:%s w:val="single" w:sz="%d" w:space="0" w:color="%s"/>'
        % (edge, sz, color.hex.encode("ascii"))
        for edge in (b"top", b"left", b"bottom", b"right")
    )
    return b"<w:tblBorders>" + edges + b"</w:tblBorders>"


def _rewrite_tc_borders(fragment: bytes, color: SentinelColor, holes: list[tuple[int, int]]) -> bytes:
    """Overwrite cell border colors, skipping byte ranges inside nested tables.

    Only color attributes change; stroke presence and width stay as
    authored so geometry is untouched. Theme color attributes would win
    over w:color in renderers, so they are dropped.
    """
    out = []
    last = 0
    for m in _TCBORDERS.finditer(fragment):
        if any(a <= m.start() < b for a, b in holes):
            continue
        region = _COLOR_ATTR.sub(b'w:color="' + color.hex.encode("ascii") + b'"', m.group(0))
        region = _THEME_ATTRS.sub(b"", region)
        out.append(fragment[last : m.start()])
        out.append(region)
        last = m.end()
    out.append(fragment[last:])
    return b"".join(out)


def _recolor_fragment(fragment: bytes, color: SentinelColor, sz: int,
                      holes: list[tuple[int, int]]) -> bytes:
    if not re.match(rb"<w:tbl[\s/>]", fragment):
        raise InvalidSpan("span does not start with a <w:tbl> element")
    open_end = fragment.index(b">")
    if fragment[open_end - 1 : open_end] == b"/":
        return fragment  # self-closing table, nothing to recolor
    if not fragment.rstrip().endswith(b"</w:tbl>"):
        raise InvalidSpan("span does not end with </w:tbl>")

    borders = _borders_xml(color, sz)
    m = _TBLPR_OPEN.search(fragment, open_end + 1)
    own_tblpr = m is not None and fragment[open_end + 1 : m.start()].strip() == b""
    if own_tblpr:
        pr_gt = fragment.index(b">", m.end())
        if fragment[pr_gt - 1 : pr_gt] == b"/":
            head = fragment[: m.start()] + b"<w:tblPr>" + borders + b"</w:tblPr>"
            body = fragment[pr_gt + 1 :]
        else:
            pr_close = fragment.index(b"</w:tblPr>", pr_gt)
            pr_inner = _TBLBORDERS.sub(b"", fragment[pr_gt + 1 : pr_close])
            # OOXML orders tblPr children; renderers accept borders appended last.
            head = fragment[: pr_gt + 1] + pr_inner + borders
            body = fragment[pr_close:]
    else:
        head = fragment[: open_end + 1] + b"<w:tblPr>" + borders + b"</w:tblPr>"
        body = fragment[open_end + 1 :]

    # body is an unmodified tail slice, so hole offsets shift by its start.
    body_start = len(fragment) - len(body)
    rel_holes = [(a - body_start, b - body_start) for a, b in holes]
    return head + _rewrite_tc_borders(body, color, rel_holes)


def recolor_borders(pkg: DocxPackage, spans: list[TableNodeSpan], color: SentinelColor,
                    border_sz: int = DEFAULT_BORDER_SZ) -> DocxPackage:
    """Overwrite the border properties of every depth-0 table span.

    The four outer edges become single solid lines of ``color``; existing
    cell border colors inside the table are overwritten too (cell borders
    take priority over table borders in Word). All bytes outside the
    targeted border-property regions are unchanged, and applying the same
    color twice is a byte-level no-op. Nested tables are left alone.
    """
    data = pkg.main_bytes()
    targets = sorted((s for s in spans if s.nesting_depth == 0),
                     key=lambda s: s.byte_start, reverse=True)
    for span in targets:
        if span.part_name != pkg.main_document:
            raise InvalidSpan(f"span targets unknown part {span.part_name!r}")
        fragment = data[span.byte_start : span.byte_end]
        holes = [(s.byte_start - span.byte_start, s.byte_end - span.byte_start)
                 for s in spans
                 if s.nesting_depth > 0 and span.byte_start <= s.byte_start < span.byte_end]
        new_fragment = _recolor_fragment(fragment, color, border_sz, holes)
        data = data[: span.byte_start] + new_fragment + data[span.byte_end :]
    return pkg.with_main(data)


def make_control(pkg: DocxPackage, spans: list[TableNodeSpan],
                 border_sz: int = DEFAULT_BORDER_SZ) -> DocxPackage:
    """White-border variant of the same edit, so both renders align.

    The control render looks like the original page but received exactly
    the same byte edits as the annotated one, which is what makes the
    pixel diff localize to the borders.
    """
    return recolor_borders(pkg, spans, SENTINEL_WHITE, border_sz)
