"""Exception types raised across the toolchain."""


class TableSmithError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TableSmithError):
    """Invalid configuration or unusable external tool."""


class DocumentCorrupt(TableSmithError):
    """Archive cannot be read or its main XML is not well formed."""


class MissingDocumentPart(TableSmithError):
    """Word archive lacks a main document part."""


class XmlParseError(TableSmithError):
    """Markup is not well-formed XML or is not the expected element."""


class InvalidSpan(TableSmithError):
    """Byte span does not delimit a complete table element."""


class UnbalancedEnvironment(TableSmithError):
    """LaTeX begin/end tokens do not nest."""


class MissingPreamble(TableSmithError):
    """LaTeX source has no documentclass to inject definitions after."""


class AlreadyWrapped(TableSmithError):
    """Source already carries frame wrapping; refusing to wrap twice."""


class RenderFailed(TableSmithError):
    """External converter exited nonzero, timed out, or wrote no output."""


class RasterFailed(TableSmithError):
    """PDF could not be turned into page images."""


class PageCountMismatch(TableSmithError):
    """Annotated and control renders have different page counts."""


class AlignmentBroken(TableSmithError):
    """Paired pages have different pixel dimensions."""


class EmptyTable(TableSmithError):
    """Table markup contains no rows."""


class InvalidTagSequence(TableSmithError):
    """Token sequence violates the structure vocabulary grammar."""


class ArityMismatch(TableSmithError):
    """Row group count does not match the tag sequence's row count."""


class SplitTooLarge(TableSmithError):
    """Requested validation/test sizes exceed available records."""
