
import numpy as np
import pytest

import fixture_builders as fb
from tablesmith.errors import (
    AlignmentBroken,
    ConfigError,
    PageCountMismatch,
    RenderFailed,
)
from tablesmith.ingest import SourceKind
from tablesmith.manifest import RunManifest
from tablesmith.rendering import (
    PageImage,
    RenderConfig,
    pair_pages,
    probe_render_tools,
    rasterize,
    render_to_pdf,
)


def _page(width=10, height=8, value=255, index=0):
    return PageImage(width, height, fb.blank_page(width, height, value), index)


def test_config_validation():
    RenderConfig(dpi=150).validate()
    with pytest.raises(ConfigError):
        RenderConfig(dpi=0).validate()
    with pytest.raises(ConfigError):
        RenderConfig(word_to_pdf_cmd="soffice {input}").validate()
    with pytest.raises(ConfigError):
        RenderConfig(rasterize_cmd="pdftoppm {input}").validate()
    RenderConfig(rasterize_cmd="pypdfium2").validate()


def test_probe_rejects_missing_tool(render_cfg):
    probe_render_tools(render_cfg, need_word=True, need_latex=True)
    bad = RenderConfig(word_to_pdf_cmd="definitely-not-a-tool-9231 {input} {output}",
                       rasterize_cmd=render_cfg.rasterize_cmd)
    with pytest.raises(ConfigError):
        probe_render_tools(bad, need_word=True)


def test_render_one_page_docx(render_cfg):
    pdf = render_to_pdf(fb.simple_docx(n_paragraphs=2), SourceKind.WORD, render_cfg)
    pages = rasterize(pdf, render_cfg)
    assert len(pages) == 1


def test_render_latex_syntax_error(tmp_path, render_cfg):
    manifest = RunManifest(tmp_path / "m.jsonl")
    bad = "\\documentclass{article}\\begin{document}\\FORCECOMPILEERROR\\end{document}"
    with pytest.raises(RenderFailed):
        render_to_pdf(bad.encode(), SourceKind.LATEX, render_cfg,
                      manifest=manifest, doc_id="bad-tex")
    records = manifest.load()
    assert any(r["status"] == "failed" and r["doc_id"] == "bad-tex" for r in records)
    assert any("duration_ms" in r for r in records)


def test_render_twice_deterministic(render_cfg):
    src = fb.simple_docx(n_paragraphs=3, tables=[[["a", "b"], ["c", "d"]]])
    first = rasterize(render_to_pdf(src, SourceKind.WORD, render_cfg), render_cfg)
    second = rasterize(render_to_pdf(src, SourceKind.WORD, render_cfg), render_cfg)
    assert len(first) == len(second)
    for a, b in zip(first, second):
        assert (a.width_px, a.height_px) == (b.width_px, b.height_px)
        assert np.array_equal(a.pixels, b.pixels)


def test_render_unconfigured_kind(render_cfg):
    cfg = RenderConfig(rasterize_cmd=render_cfg.rasterize_cmd)
    with pytest.raises(ConfigError):
        render_to_pdf(b"x", SourceKind.WORD, cfg)


def test_rasterize_three_page_pdf(render_cfg):
    pages = rasterize(fb.minimal_pdf(n_pages=3), render_cfg)
    assert [p.page_index for p in pages] == [0, 1, 2]


def test_rasterize_a4_at_150dpi(render_cfg):
    # 8.27in x 11.69in at 150 DPI, allowing 1px rounding.
    pages = rasterize(fb.minimal_pdf(n_pages=1), render_cfg)
    assert len(pages) == 1
    assert abs(pages[0].width_px - round(8.27 * 150)) <= 1
    assert abs(pages[0].height_px - round(11.69 * 150)) <= 1


def test_rasterize_blank_page_all_white(render_cfg):
    page = rasterize(fb.minimal_pdf(n_pages=1), render_cfg)[0]
    assert (page.pixels == 255).all()


def test_rasterize_respects_dpi(render_cfg):
    render_cfg.dpi = 75
    page = rasterize(fb.minimal_pdf(n_pages=1), render_cfg)[0]
    assert abs(page.width_px - round(8.27 * 75)) <= 1


def test_page_image_invariants():
    with pytest.raises(ValueError):
        PageImage(4, 4, np.zeros((4, 5, 3), dtype=np.uint8), 0)
    with pytest.raises(ValueError):
        PageImage(4, 4, np.zeros((4, 4, 3), dtype=np.float32), 0)
    with pytest.raises(ValueError):
        PageImage(0, 4, np.zeros((4, 0, 3), dtype=np.uint8), 0)


def test_pair_two_aligned_renders():
    ann = [_page(index=0), _page(index=1)]
    ctl = [_page(index=0), _page(index=1)]
    pairs = pair_pages(ann, ctl, "doc")
    assert len(pairs) == 2
    assert [p.page_index for p in pairs] == [0, 1]


def test_pair_count_mismatch():
    with pytest.raises(PageCountMismatch):
        pair_pages([_page(), _page(index=1)],
                   [_page(), _page(index=1), _page(index=2)], "doc")


def test_pair_dimension_mismatch_is_atomic():
    ann = [_page(index=0), _page(height=9, index=1)]
    ctl = [_page(index=0), _page(height=8, index=1)]
    with pytest.raises(AlignmentBroken):
        pair_pages(ann, ctl, "doc")


def test_pair_empty_lists_rejected():
    with pytest.raises(ValueError):
        pair_pages([], [], "doc")


def test_pair_invariant_enforced_on_construction():
    from tablesmith.rendering import PagePair

    with pytest.raises(AlignmentBroken):
        PagePair(annotated=_page(width=10), control=_page(width=11),
                 page_index=0, doc_id="d")
