"""Corpus discovery and Word archive handling.

Documents enter the pipeline as files already on disk: ``.docx`` archives
and ``.tex`` sources (a directory containing a top-level ``main.tex`` is
treated as one multi-file LaTeX project). Word archives are unpacked into
an in-memory package so the main document XML can be edited and the
archive repacked without touching any other entry.
"""

import binascii
import io
import logging
import os
import xml.etree.ElementTree as ET
import zipfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from .errors import DocumentCorrupt, MissingDocumentPart

logger = logging.getLogger(__name__)

WORD_EXTENSION = ".docx"
LATEX_EXTENSION = ".tex"
LATEX_PROJECT_MAIN = "main.tex"
MAIN_DOCUMENT_NAME = "word/document.xml"

DEFAULT_EXTENSIONS = frozenset({WORD_EXTENSION, LATEX_EXTENSION})


class SourceKind(str, Enum):
    WORD = "word"
    LATEX = "latex"


KIND_BY_EXTENSION = {WORD_EXTENSION: SourceKind.WORD, LATEX_EXTENSION: SourceKind.LATEX}


@dataclass(frozen=True)
class SourceDocument:
    """One crawled input file with a stable identity."""

    id: str
    kind: SourceKind
    path: Path
    declared_language: Optional[str] = None
    is_project: bool = False  # multi-file LaTeX project; siblings rendered too


@dataclass
class DocxPackage:
    """A ``.docx`` archive held in memory, entry order preserved."""

    parts: dict[str, bytes]
    main_document: str

    def main_bytes(self) -> bytes:
        return self.parts[self.main_document]

    def with_main(self, data: bytes) -> "DocxPackage":
        """Copy of the package with the main document part replaced."""
        parts = dict(self.parts)
        parts[self.main_document] = data
        return DocxPackage(parts=parts, main_document=self.main_document)


def _doc_id(root: Path, path: Path) -> str:
    rel = path.relative_to(root).as_posix()
    return "%s-%08x" % (path.stem, binascii.crc32(rel.encode("utf-8")))


def scan_corpus(root, filters=DEFAULT_EXTENSIONS, manifest=None) -> list[SourceDocument]:
    """Discover source documents under ``root``, ordered by path.

    ``filters`` is the set of accepted extensions. Unreadable individual
    files are skipped (and recorded on ``manifest`` when given); an
    unreadable root is fatal. The result depends only on directory
    content, so repeated scans over the same tree are identical.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"corpus root does not exist or is not a directory: {root}")

    docs = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        here = Path(dirpath)
        if LATEX_PROJECT_MAIN in filenames and here != root:
            # A project directory contributes exactly one LaTeX document.
            dirnames[:] = []
            main = here / LATEX_PROJECT_MAIN
            docs.append(SourceDocument(
                id=_doc_id(root, main), kind=SourceKind.LATEX, path=main, is_project=True))
            continue
        for name in sorted(filenames):
            path = here / name
            ext = path.suffix.lower()
            if ext not in filters or ext not in KIND_BY_EXTENSION:
                continue
            if not os.access(path, os.R_OK):
                logger.warning("skipping unreadable file: %s", path)
                if manifest is not None:
                    manifest.record(path=str(path), kind=KIND_BY_EXTENSION[ext].value,
                                    stage="scan", status="skipped", reason="unreadable")
                continue
            docs.append(SourceDocument(
                id=_doc_id(root, path), kind=KIND_BY_EXTENSION[ext], path=path))

    docs.sort(key=lambda d: str(d.path))
    if manifest is not None:
        for doc in docs:
            manifest.record(path=str(doc.path), kind=doc.kind.value,
                            stage="scan", status="ok", doc_id=doc.id)
    return docs


def unpack_docx(doc) -> DocxPackage:
    """Load every entry of a Word archive and locate the main document XML.

    Accepts a SourceDocument of kind word, a path, or raw archive bytes.
    """
    if isinstance(doc, SourceDocument):
        if doc.kind != SourceKind.WORD:
            raise ValueError(f"unpack_docx requires a word document, got {doc.kind}")
        data = doc.path.read_bytes()
    elif isinstance(doc, (str, Path)):
        data = Path(doc).read_bytes()
    else:
        data = bytes(doc)
    return _unpack_bytes(data)


def _unpack_bytes(data: bytes) -> DocxPackage:
    try:
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            names = zf.namelist()
            parts = {}
            for name in names:
                parts[name] = zf.read(name)
    except (zipfile.BadZipFile, zipfile.LargeZipFile, OSError, EOFError) as exc:
        raise DocumentCorrupt(f"cannot read docx archive: {exc}") from exc

    main = None
    if MAIN_DOCUMENT_NAME in parts:
        main = MAIN_DOCUMENT_NAME
    else:
        for name in parts:
            if name.endswith("document.xml") and not name.startswith("_rels"):
                main = name
                break
    if main is None:
        raise MissingDocumentPart("archive has no document.xml part")

    try:
        ET.fromstring(parts[main])
    except ET.ParseError as exc:
        raise DocumentCorrupt(f"main document XML is not well formed: {exc}") from exc

    return DocxPackage(parts=parts, main_document=main)


def repack_docx(pkg: DocxPackage) -> bytes:
    """Reassemble a package into archive bytes, entries in original order.

    Unedited entry bytes round-trip exactly; unpack(repack(pkg)) equals
    pkg on both entry names and contents.
    """
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, data in pkg.parts.items():
            zf.writestr(name, data)
    return buf.getvalue()
