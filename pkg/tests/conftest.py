import sys
from pathlib import Path

import pytest

from tablesmith.config import PipelineConfig
from tablesmith.rendering import RenderConfig


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "acceptance" in report.keywords:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {outcome}", flush=True)

TESTS_DIR = Path(__file__).parent
TOYTOOLS = TESTS_DIR / "toytools"
FIXTURES = TESTS_DIR / "fixtures"


def toy_render_config(dpi=150) -> RenderConfig:
    py = sys.executable
    return RenderConfig(
        word_to_pdf_cmd=f"{py} {TOYTOOLS / 'word2pdf.py'} {{input}} {{output}}",
        latex_to_pdf_cmd=f"{py} {TOYTOOLS / 'tex2pdf.py'} {{input}} {{output}}",
        rasterize_cmd=f"{py} {TOYTOOLS / 'pdf2png.py'} {{input}} {{output_dir}} {{dpi}}",
        dpi=dpi,
        timeout_s=60.0,
    )


def toy_pipeline_config(dpi=150) -> PipelineConfig:
    py = sys.executable
    cfg = PipelineConfig(render=toy_render_config(dpi))
    cfg.latex_to_xml_cmd = f"{py} {TOYTOOLS / 'tex2xml.py'} {{input}} {{output}}"
    return cfg


@pytest.fixture
def render_cfg() -> RenderConfig:
    return toy_render_config()


@pytest.fixture
def pipe_cfg() -> PipelineConfig:
    return toy_pipeline_config()
