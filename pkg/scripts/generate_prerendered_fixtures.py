#!/usr/bin/env python3
"""Regenerate the pre-rendered page-pair fixtures under tests/fixtures/.

The fixtures are annotated/control page images rendered from real fixture
documents with the test toolchain, plus the ground-truth table rectangles
the layout engine reports. They are checked in so the diff and extraction
stages can be exercised without any renderer installed.

Run from the repository root:  python scripts/generate_prerendered_fixtures.py
"""

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))
sys.path.insert(0, str(REPO / "tests" / "toytools"))

import fixture_builders as fb  # noqa: E402
import toylayout  # noqa: E402
from conftest import toy_render_config  # noqa: E402

from tablesmith.colors import SENTINEL_GREEN  # noqa: E402
from tablesmith.docx_borders import locate_tables, make_control, recolor_borders  # noqa: E402
from tablesmith.ingest import SourceKind, repack_docx, unpack_docx  # noqa: E402
from tablesmith.latex_borders import (  # noqa: E402
    locate_tabular_envs,
    make_control_latex,
    wrap_fcolorbox,
)
from tablesmith.rendering import rasterize, render_to_pdf  # noqa: E402

OUT = REPO / "tests" / "fixtures" / "prerendered"


def word_fixture(name, body):
    pkg = unpack_docx(fb.docx_bytes(body))
    spans = locate_tables(pkg)
    annotated = repack_docx(recolor_borders(pkg, spans, SENTINEL_GREEN))
    control = repack_docx(make_control(pkg, spans))
    truth = toylayout.layout_docx(repack_docx(pkg)).table_rects
    return name, SourceKind.WORD, annotated, control, truth


def tex_fixture(name, tex):
    spans = locate_tabular_envs(tex)
    annotated = wrap_fcolorbox(tex, spans).encode("utf-8")
    control = make_control_latex(tex, spans).encode("utf-8")
    truth = toylayout.layout_tex(tex).table_rects
    return name, SourceKind.LATEX, annotated, control, truth


def main():
    cfg = toy_render_config()
    OUT.mkdir(parents=True, exist_ok=True)
    fixtures = [
        word_fixture("word_plain", fb.table_xml([["a", "b"], ["c", ""]])),
        word_fixture("word_two_tables",
                     fb.paragraph_xml("intro")
                     + fb.table_xml([["x", "y", "z"]], border_color="000000")
                     + fb.paragraph_xml("middle")
                     + fb.table_xml([["1"], ["2"], ["3"]])),
        word_fixture("word_multipage",
                     "".join(fb.paragraph_xml(f"filler {i}") for i in range(24))
                     + fb.table_xml([["deep", "page"], ["row", "two"]])),
        tex_fixture("tex_float", fb.tex_source([[["a", "b"], ["c", "d"]]])),
        tex_fixture("tex_two_tables",
                    fb.tex_source([[["p", "q"]], [["1", "2"], ["3", ""]]])),
    ]

    truth_doc = {}
    for name, kind, annotated, control, truth in fixtures:
        ann_pages = rasterize(render_to_pdf(annotated, kind, cfg), cfg)
        ctl_pages = rasterize(render_to_pdf(control, kind, cfg), cfg)
        assert len(ann_pages) == len(ctl_pages)
        for page in ann_pages:
            page.to_png(OUT / f"{name}_p{page.page_index}_annotated.png")
        for page in ctl_pages:
            page.to_png(OUT / f"{name}_p{page.page_index}_control.png")
        truth_doc[name] = {
            "source_kind": kind.value,
            "pages": len(ann_pages),
            "tables": [{"page": p, "bbox": [x, y, w, h]} for p, x, y, w, h in truth],
        }
        print(f"{name}: {len(ann_pages)} page(s), {len(truth)} table(s)")

    (OUT / "ground_truth.json").write_text(json.dumps(truth_doc, indent=1, sort_keys=True),
                                           encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
