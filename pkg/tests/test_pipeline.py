import json
import sys

import pytest

import fixture_builders as fb
from conftest import TOYTOOLS, toy_pipeline_config
from tablesmith.dataset import DETECTION, STRUCTURE
from tablesmith.errors import ConfigError
from tablesmith.ingest import SourceKind
from tablesmith.pipeline import load_records, run_pipeline
from tablesmith.rendering import RenderConfig

sys.path.insert(0, str(TOYTOOLS))
import toylayout  # noqa: E402


def _iou(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter) if inter else 0.0


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    counts = fb.make_corpus(root)
    return root, counts


@pytest.fixture(scope="module")
def pipeline_result(corpus, tmp_path_factory):
    root, counts = corpus
    out = tmp_path_factory.mktemp("out")
    stats, records = run_pipeline(root, toy_pipeline_config(), out, jobs=2)
    return root, counts, out, stats, records


def test_mini_corpus_table_counts(pipeline_result):
    root, counts, out, stats, records = pipeline_result
    assert sum(counts.values()) == 13
    assert stats.combined(stats.detection_tables) == 13
    assert stats.detection_tables["word"] == 8
    assert stats.detection_tables["latex"] == 5
    assert stats.combined(stats.structure_tables) == 13
    assert not stats.drops


def test_boxes_match_toy_layout_ground_truth(pipeline_result):
    root, counts, out, stats, records = pipeline_result
    det = [r for r in records if r.task == DETECTION]
    by_doc = {}
    for rec in det:
        by_doc.setdefault(rec.doc_id, []).extend(
            (rec.page_index, b.x, b.y, b.w, b.h) for b in rec.annotations)

    from tablesmith.ingest import scan_corpus, unpack_docx, repack_docx

    for doc in scan_corpus(root):
        if doc.kind == SourceKind.WORD:
            layout = toylayout.layout_docx(repack_docx(unpack_docx(doc)))
        else:
            layout = toylayout.layout_tex(doc.path.read_text())
        expected = layout.table_rects
        got = sorted(by_doc.get(doc.id, []))
        assert len(got) == len(expected)
        for (page_e, xe, ye, we, he), (page_g, xg, yg, wg, hg) in zip(
                sorted(expected), got):
            assert page_e == page_g
            assert _iou((xe, ye, we, he), (xg, yg, wg, hg)) >= 0.95


def test_structure_records_validate_and_align(pipeline_result):
    from tablesmith.structure import TagSequence

    root, counts, out, stats, records = pipeline_result
    struct = [r for r in records if r.task == STRUCTURE]
    assert struct
    for rec in struct:
        TagSequence.from_string(rec.target_tokens).validate()
        assert (out / rec.image_path).exists()


def test_images_and_records_on_disk(pipeline_result):
    root, counts, out, stats, records = pipeline_result
    for rec in records:
        assert (out / rec.image_path).exists()
    assert (out / "manifest.jsonl").exists()
    assert (out / "documents.jsonl").exists()


def test_empty_corpus(tmp_path):
    (tmp_path / "empty").mkdir()
    stats, records = run_pipeline(tmp_path / "empty", toy_pipeline_config(),
                                  tmp_path / "out")
    assert records == []
    assert stats.to_dict()["detection_total"] == 0


def test_compile_failure_drops_one_document(tmp_path):
    # 10-document corpus where exactly one tex fails to compile:
    # 9 documents emit, 1 drop recorded at the render stage.
    root = tmp_path / "corpus"
    fb.make_corpus(root)
    bad = root / "tex_03.tex"  # overwrite one fixture with a broken source
    bad.write_text("\\documentclass{article}\n\\begin{document}\n"
                   "\\FORCECOMPILEERROR\n"
                   "\\begin{tabular}{c} x \\\\ \\end{tabular}\n"
                   "\\end{document}\n")
    stats, records = run_pipeline(root, toy_pipeline_config(), tmp_path / "out")
    assert stats.drops == {"render": 1}
    assert len({r.doc_id for r in records}) == 9
    assert stats.combined(stats.detection_tables) == 12  # 13 minus the lost table


def test_resume_produces_identical_dataset(corpus, tmp_path):
    root, counts = corpus
    out = tmp_path / "out"
    cfg = toy_pipeline_config()
    stats1, records1 = run_pipeline(root, cfg, out)
    manifest_size = (out / "manifest.jsonl").stat().st_size
    stats2, records2 = run_pipeline(root, cfg, out)
    assert [r.to_dict() for r in records1] == [r.to_dict() for r in records2]
    assert stats1.to_dict() == stats2.to_dict()
    # Second run resumed from the manifest: no new render records appended.
    assert (out / "manifest.jsonl").stat().st_size == manifest_size


def test_resume_after_partial_run(corpus, tmp_path):
    root, counts = corpus
    out = tmp_path / "out"
    cfg = toy_pipeline_config()

    from tablesmith.ingest import scan_corpus
    from tablesmith.manifest import RunManifest
    from tablesmith.pipeline import process_document, write_documents

    docs = scan_corpus(root)
    manifest = RunManifest(out / "manifest.jsonl")
    write_documents(out, docs)
    for doc in docs[:4]:  # simulate an interrupted run
        process_document(doc, cfg, out, manifest)
    partial = load_records(out)
    assert partial

    stats, records = run_pipeline(root, cfg, out)
    fresh_out = tmp_path / "fresh"
    _, fresh_records = run_pipeline(root, cfg, fresh_out)
    assert [r.to_dict() for r in records] == [r.to_dict() for r in fresh_records]


def test_probe_failure_is_fatal_before_work(corpus, tmp_path):
    root, counts = corpus
    cfg = toy_pipeline_config()
    cfg.render = RenderConfig(word_to_pdf_cmd="missing-tool-xyz {input} {output}",
                              latex_to_pdf_cmd=cfg.render.latex_to_pdf_cmd,
                              rasterize_cmd=cfg.render.rasterize_cmd)
    out = tmp_path / "out"
    with pytest.raises(ConfigError):
        run_pipeline(root, cfg, out)
    assert not (out / "work").exists()


def test_zero_table_document_contributes_nothing(tmp_path):
    root = tmp_path / "corpus"
    root.mkdir()
    (root / "plain.docx").write_bytes(fb.simple_docx(n_paragraphs=3))
    stats, records = run_pipeline(root, toy_pipeline_config(), tmp_path / "out")
    assert records == []
    manifest = json.loads((tmp_path / "out" / "manifest.jsonl").read_text().splitlines()[-1])
    assert manifest["status"] == "ok"
