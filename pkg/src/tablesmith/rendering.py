"""Drive external converters and pair the resulting page images.

The converters (Word to PDF, LaTeX to PDF, PDF to page images) are a
user-supplied contract: command templates with ``{input}``/``{output}``
placeholders run inside a per-job temporary workspace with a wall-clock
timeout. Nothing is bundled; any toolchain that honors the placeholders
works. A rasterizer can alternatively be a built-in library selector
("pypdfium2" or "pymupdf") when that library is installed.
"""

import logging
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    AlignmentBroken,
    ConfigError,
    PageCountMismatch,
    RasterFailed,
    RenderFailed,
)
from .ingest import SourceKind

logger = logging.getLogger(__name__)

BUILTIN_RASTERIZERS = ("pypdfium2", "pymupdf")
_IMAGE_EXTS = (".png", ".ppm", ".pgm", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


@dataclass
class RenderConfig:
    """Command templates and rendering parameters for the external tools."""

    word_to_pdf_cmd: str = ""
    latex_to_pdf_cmd: str = ""
    rasterize_cmd: str = ""
    dpi: int = 150
    timeout_s: float = 120.0

    def validate(self) -> None:
        if self.dpi <= 0:
            raise ConfigError(f"dpi must be positive, got {self.dpi}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s}")
        for name, tpl in (("word_to_pdf_cmd", self.word_to_pdf_cmd),
                          ("latex_to_pdf_cmd", self.latex_to_pdf_cmd)):
            if tpl and not ("{input}" in tpl and "{output}" in tpl):
                raise ConfigError(f"{name} must contain {{input}} and {{output}} placeholders")
        if self.rasterize_cmd and self.rasterize_cmd not in BUILTIN_RASTERIZERS:
            if "{input}" not in self.rasterize_cmd or "{output_dir}" not in self.rasterize_cmd:
                raise ConfigError("rasterize_cmd must contain {input} and {output_dir} placeholders")

    def command_for(self, kind: SourceKind) -> str:
        return self.word_to_pdf_cmd if kind == SourceKind.WORD else self.latex_to_pdf_cmd


@dataclass
class PageImage:
    """One rendered page as row-major 8-bit RGB pixels."""

    width_px: int
    height_px: int
    pixels: np.ndarray  # shape (height_px, width_px, 3), dtype uint8
    page_index: int

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("page dimensions must be positive")
        if self.pixels.shape != (self.height_px, self.width_px, 3):
            raise ValueError(f"pixel buffer shape {self.pixels.shape} does not match "
                             f"{self.height_px}x{self.width_px}x3")
        if self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be uint8")

    @classmethod
    def from_file(cls, path, page_index: int) -> "PageImage":
        with Image.open(path) as img:
            return cls.from_pil(img, page_index)

    @classmethod
    def from_pil(cls, img: Image.Image, page_index: int) -> "PageImage":
        # Composite transparency over a white background before converting.
        if img.mode in ("RGBA", "LA") or (img.mode == "P" and "transparency" in img.info):
            rgba = img.convert("RGBA")
            base = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
            img = Image.alpha_composite(base, rgba)
        rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
        return cls(width_px=rgb.shape[1], height_px=rgb.shape[0], pixels=rgb,
                   page_index=page_index)

    def to_png(self, path) -> None:
        # Lossless is required for the diff stage; low compression for speed.
        Image.fromarray(self.pixels, "RGB").save(path, format="PNG", compress_level=1)


@dataclass
class PagePair:
    """Aligned annotated/control renders of the same page."""

    annotated: PageImage
    control: PageImage
    page_index: int
    doc_id: str

    def __post_init__(self):
        if (self.annotated.width_px != self.control.width_px
                or self.annotated.height_px != self.control.height_px):
            raise AlignmentBroken(
                f"page {self.page_index} of {self.doc_id}: "
                f"{self.annotated.width_px}x{self.annotated.height_px} vs "
                f"{self.control.width_px}x{self.control.height_px}")
        if self.annotated.page_index != self.control.page_index:
            raise AlignmentBroken(f"page index mismatch on {self.doc_id}")


def format_cmd(template: str, **subs) -> list[str]:
    return [token.format(**subs) for token in shlex.split(template)]


def run_cmd(argv: list[str], timeout_s: float, cwd=None) -> tuple[int, str, float]:
    start = time.monotonic()
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=timeout_s, cwd=cwd)
        return proc.returncode, proc.stderr.decode("utf-8", "replace"), time.monotonic() - start
    except subprocess.TimeoutExpired:
        return -1, f"timed out after {timeout_s}s", time.monotonic() - start
    except OSError as exc:
        return -1, str(exc), time.monotonic() - start


def _record(manifest, doc_id, stage, status, duration_s, reason=""):
    if manifest is not None:
        manifest.record(doc_id=doc_id, stage=stage, status=status,
                        duration_ms=int(duration_s * 1000),
                        **({"reason": reason[-400:]} if reason else {}))


def probe_render_tools(cfg: RenderConfig, need_word=False, need_latex=False,
                       need_raster=True) -> None:
    """Fail fast when a required tool is missing or misconfigured."""
    cfg.validate()
    checks = []
    if need_word:
        checks.append(("word_to_pdf_cmd", cfg.word_to_pdf_cmd))
    if need_latex:
        checks.append(("latex_to_pdf_cmd", cfg.latex_to_pdf_cmd))
    if need_raster and cfg.rasterize_cmd not in BUILTIN_RASTERIZERS:
        checks.append(("rasterize_cmd", cfg.rasterize_cmd))
    for name, tpl in checks:
        if not tpl:
            raise ConfigError(f"{name} is not configured")
        argv0 = shlex.split(tpl)[0]
        if shutil.which(argv0) is None and not Path(argv0).exists():
            raise ConfigError(f"{name} executable not found: {argv0}")
    if need_raster and cfg.rasterize_cmd in BUILTIN_RASTERIZERS:
        try:
            __import__(cfg.rasterize_cmd if cfg.rasterize_cmd != "pymupdf" else "fitz")
        except ImportError as exc:
            raise ConfigError(f"built-in rasterizer {cfg.rasterize_cmd} not installed") from exc


def render_to_pdf(doc_bytes: bytes, kind: SourceKind, cfg: RenderConfig,
                  manifest=None, doc_id: str = "", support_dir=None) -> bytes:
    """Convert one document to PDF inside a hermetic temp workspace.

    ``support_dir`` copies sibling resources (multi-file LaTeX projects)
    next to the input before invoking the tool. Nonzero exit, timeout, or
    a missing output file raise RenderFailed; outcome and tool stderr are
    recorded on the manifest either way.
    """
    template = cfg.command_for(kind)
    if not template:
        raise ConfigError(f"no converter configured for {kind.value} documents")

    suffix = ".docx" if kind == SourceKind.WORD else ".tex"
    with tempfile.TemporaryDirectory(prefix="tablesmith-render-") as tmp:
        tmpdir = Path(tmp)
        if support_dir is not None:
            shutil.copytree(support_dir, tmpdir, dirs_exist_ok=True)
        in_path = tmpdir / f"input{suffix}"
        out_path = tmpdir / "output.pdf"
        in_path.write_bytes(doc_bytes)
        argv = format_cmd(template, input=str(in_path), output=str(out_path))
        code, stderr, took = run_cmd(argv, cfg.timeout_s, cwd=tmpdir)
        if code != 0 or not out_path.exists():
            _record(manifest, doc_id, "render", "failed", took, stderr or "no output produced")
            raise RenderFailed(f"{argv[0]} failed for {doc_id or 'document'}: "
                               f"exit={code} stderr={stderr[-400:]}")
        _record(manifest, doc_id, "render", "ok", took)
        return out_path.read_bytes()


def _natural_key(path: Path):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", path.name)]


def rasterize(pdf_bytes: bytes, cfg: RenderConfig, manifest=None,
              doc_id: str = "") -> list[PageImage]:
    """Turn a PDF into one RGB PageImage per page at the configured DPI."""
    if cfg.rasterize_cmd in BUILTIN_RASTERIZERS:
        return _rasterize_builtin(pdf_bytes, cfg)
    if not cfg.rasterize_cmd:
        raise ConfigError("rasterize_cmd is not configured")

    with tempfile.TemporaryDirectory(prefix="tablesmith-raster-") as tmp:
        tmpdir = Path(tmp)
        in_path = tmpdir / "input.pdf"
        out_dir = tmpdir / "pages"
        out_dir.mkdir()
        in_path.write_bytes(pdf_bytes)
        argv = format_cmd(cfg.rasterize_cmd, input=str(in_path),
                           output_dir=str(out_dir), dpi=str(cfg.dpi))
        code, stderr, took = run_cmd(argv, cfg.timeout_s, cwd=tmpdir)
        files = sorted((p for p in out_dir.iterdir() if p.suffix.lower() in _IMAGE_EXTS),
                       key=_natural_key)
        if code != 0 or not files:
            _record(manifest, doc_id, "rasterize", "failed", took, stderr or "no pages produced")
            raise RasterFailed(f"rasterizer failed for {doc_id or 'document'}: "
                               f"exit={code} stderr={stderr[-400:]}")
        pages = [PageImage.from_file(p, i) for i, p in enumerate(files)]
        _record(manifest, doc_id, "rasterize", "ok", took)
        return pages


def _rasterize_builtin(pdf_bytes: bytes, cfg: RenderConfig) -> list[PageImage]:
    scale = cfg.dpi / 72.0
    if cfg.rasterize_cmd == "pypdfium2":
        try:
            import pypdfium2 as pdfium
        except ImportError as exc:
            raise RasterFailed("pypdfium2 is not installed") from exc
        doc = pdfium.PdfDocument(pdf_bytes)
        try:
            return [PageImage.from_pil(page.render(scale=scale).to_pil(), i)
                    for i, page in enumerate(doc)]
        finally:
            doc.close()
    try:
        import fitz
    except ImportError as exc:
        raise RasterFailed("pymupdf is not installed") from exc
    doc = fitz.open(stream=pdf_bytes, filetype="pdf")
    pages = []
    for i, page in enumerate(doc):
        pix = page.get_pixmap(matrix=fitz.Matrix(scale, scale), alpha=False)
        img = Image.frombytes("RGB", (pix.width, pix.height), pix.samples)
        pages.append(PageImage.from_pil(img, i))
    doc.close()
    return pages


def pair_pages(annotated_pages: list[PageImage], control_pages: list[PageImage],
               doc_id: str) -> list[PagePair]:
    """Pair pages by index, failing atomically on any count or size mismatch."""
    if not annotated_pages or not control_pages:
        raise ValueError("pair_pages requires nonempty page lists")
    if len(annotated_pages) != len(control_pages):
        raise PageCountMismatch(
            f"{doc_id}: {len(annotated_pages)} annotated vs {len(control_pages)} control pages")
    for a, c in zip(annotated_pages, control_pages):
        if a.width_px != c.width_px or a.height_px != c.height_px:
            raise AlignmentBroken(
                f"{doc_id} page {a.page_index}: {a.width_px}x{a.height_px} vs "
                f"{c.width_px}x{c.height_px}")
    return [PagePair(annotated=a, control=c, page_index=a.page_index, doc_id=doc_id)
            for a, c in zip(annotated_pages, control_pages)]
