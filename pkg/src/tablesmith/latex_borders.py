"""Rewrite LaTeX sources so tabular environments compile inside colored frames.

Each outermost tabular environment is wrapped in an ``\\fcolorbox`` with a
1pt frame separation. The annotated and control variants insert
byte-identical text except for the frame color name, so both compile to
PDFs with identical line and page breaking.
"""

import logging
import re
from dataclasses import dataclass
from typing import Optional

from .colors import (
    LATEX_GREEN_NAME,
    LATEX_WHITE_NAME,
    SENTINEL_GREEN,
    SENTINEL_WHITE,
)
from .errors import AlreadyWrapped, MissingPreamble, UnbalancedEnvironment

logger = logging.getLogger(__name__)

# tabular* must precede tabular in the alternation.
RECOGNIZED_ENVS = ("tabular*", "tabular", "array")
SKIPPED_ENVS = ("longtable",)  # a frame box cannot span pages
FLOAT_ENVS = ("table*", "table")

_ENV_TOKEN = re.compile(r"\\(begin|end)\{(tabular\*?|array|longtable|table\*?)\}")
_DOCUMENTCLASS = re.compile(r"\\documentclass(?:\s*\[[^\]]*\])?\s*\{[^}]*\}")

_PREAMBLE_SNIPPET = (
    "\n\\usepackage{xcolor}"
    "\n\\definecolor{%s}{RGB}{%d,%d,%d}"
    "\n\\definecolor{%s}{RGB}{%d,%d,%d}\n"
    % (LATEX_GREEN_NAME, *SENTINEL_GREEN.rgb, LATEX_WHITE_NAME, *SENTINEL_WHITE.rgb)
)
_WRAP_MARKER = "\\definecolor{%s}" % LATEX_GREEN_NAME


@dataclass(frozen=True)
class EnvSpan:
    """Byte span of one outermost tabular environment in the source text."""

    byte_start: int
    byte_end: int
    env_name: str
    enclosing_env: Optional[str] = None

    def __post_init__(self):
        if self.byte_start >= self.byte_end:
            raise ValueError("empty environment span")


def _comment_mask(tex: str) -> bytearray:
    """Mark every character that sits inside a TeX line comment."""
    mask = bytearray(len(tex))
    escaped = False
    comment = False
    for i, ch in enumerate(tex):
        if comment:
            if ch == "\n":
                comment = False
            else:
                mask[i] = 1
            continue
        if escaped:
            escaped = False
        elif ch == "\\":
            escaped = True
        elif ch == "%":
            comment = True
            mask[i] = 1
    return mask


def locate_tabular_envs(tex: str) -> list[EnvSpan]:
    """Find outermost tabular environments, in source order.

    Environments inside comments are ignored, nested tabulars fold into
    the outer span, and longtable is skipped (logged) because a frame box
    cannot span pages. Unbalanced begin/end tokens raise
    UnbalancedEnvironment so the document can be dropped and recorded.
    """
    mask = _comment_mask(tex)
    spans = []
    stack = []  # (env_name, start_offset)
    open_floats = []  # (name, start); closed ones move to float_spans
    float_spans = []

    for m in _ENV_TOKEN.finditer(tex):
        if mask[m.start()]:
            continue
        action, name = m.group(1), m.group(2)
        if name in FLOAT_ENVS:
            if action == "begin":
                open_floats.append((name, m.start()))
            elif open_floats and open_floats[-1][0] == name:
                fname, fstart = open_floats.pop()
                float_spans.append((fname, fstart, m.end()))
            continue
        if name in SKIPPED_ENVS:
            if action == "begin":
                logger.info("skipping %s environment at offset %d", name, m.start())
            continue
        if action == "begin":
            stack.append((name, m.start()))
        else:
            if not stack or stack[-1][0] != name:
                raise UnbalancedEnvironment(f"\\end{{{name}}} at offset {m.start()} has no open match")
            env_name, start = stack.pop()
            if not stack:
                spans.append((env_name, start, m.end()))
    if stack:
        raise UnbalancedEnvironment(f"unclosed \\begin{{{stack[-1][0]}}} at offset {stack[-1][1]}")

    result = []
    for env_name, start, end in sorted(spans, key=lambda s: s[1]):
        enclosing = None
        for fname, fstart, fend in float_spans:
            if fstart < start and end <= fend:
                enclosing = fname
                break
        result.append(EnvSpan(start, end, env_name, enclosing))
    return result


def _wrap(tex: str, spans: list[EnvSpan], color_name: str) -> str:
    if _WRAP_MARKER in tex:
        raise AlreadyWrapped("source already carries frame wrapping")
    if not spans:
        return tex

    mask = _comment_mask(tex)
    dc = None
    for m in _DOCUMENTCLASS.finditer(tex):
        if not mask[m.start()]:
            dc = m
            break
    if dc is None:
        raise MissingPreamble("no \\documentclass found")

    prefix = "\\setlength{\\fboxsep}{1pt}\n\\fcolorbox{%s}{white}{\n" % color_name
    out = tex
    for span in sorted(spans, key=lambda s: s.byte_start, reverse=True):
        out = out[: span.byte_start] + prefix + out[span.byte_start : span.byte_end] + "}" + out[span.byte_end :]
    return out[: dc.end()] + _PREAMBLE_SNIPPET + out[dc.end() :]


def wrap_fcolorbox(tex: str, spans: list[EnvSpan],
                   border_color_name: str = LATEX_GREEN_NAME) -> str:
    """Annotated variant: every span framed in the sentinel color.

    The preamble gains one xcolor import and both color definitions; all
    other source bytes are unchanged. With zero spans the source is
    returned untouched. Re-wrapping already wrapped source raises
    AlreadyWrapped.
    """
    return _wrap(tex, spans, border_color_name)


def make_control_latex(tex: str, spans: list[EnvSpan]) -> str:
    """Control variant: identical wrapping with the white frame color.

    Both variants add the same 1pt frame geometry, which guarantees layout
    parity between the two compiles.
    """
    return _wrap(tex, spans, LATEX_WHITE_NAME)
