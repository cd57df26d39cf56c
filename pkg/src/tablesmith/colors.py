"""Sentinel border colors shared by the Word and LaTeX annotators."""

from dataclasses import dataclass


@dataclass(frozen=True)
class SentinelColor:
    """An RGB color reserved for table frames so labels survive rendering."""

    rgb: tuple[int, int, int]
    name: str

    def __post_init__(self):
        if len(self.rgb) != 3 or any(not 0 <= c <= 255 for c in self.rgb):
            raise ValueError(f"invalid RGB triple: {self.rgb!r}")

    @property
    def hex(self) -> str:
        """Uppercase RRGGBB form used in Office XML border attributes."""
        return "%02X%02X%02X" % tuple(self.rgb)


SENTINEL_GREEN = SentinelColor((0, 255, 0), "green")
SENTINEL_WHITE = SentinelColor((255, 255, 255), "white")

# LaTeX color names for the two variants. Equal length keeps the annotated
# and control sources byte-aligned everywhere except the name itself.
LATEX_GREEN_NAME = "bordergreen"
LATEX_WHITE_NAME = "borderwhite"


def channel_distance(a: tuple[int, int, int], b: tuple[int, int, int]) -> int:
    """Largest per-channel absolute difference between two RGB triples."""
    return max(abs(x - y) for x, y in zip(a, b))
