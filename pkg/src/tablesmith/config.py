"""Pipeline configuration, loadable from TOML or JSON."""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .colors import SENTINEL_GREEN, SENTINEL_WHITE, SentinelColor, channel_distance
from .docx_borders import DEFAULT_BORDER_SZ
from .errors import ConfigError
from .extraction import DEFAULT_DIFF_TOL, DEFAULT_MIN_BOX_PX, DEFAULT_SENTINEL_TOL
from .rendering import RenderConfig


@dataclass
class PipelineConfig:
    render: RenderConfig = field(default_factory=RenderConfig)
    latex_to_xml_cmd: str = ""  # structure labels for LaTeX need external XML
    annotated_color: SentinelColor = SENTINEL_GREEN
    control_color: SentinelColor = SENTINEL_WHITE
    diff_tol: int = DEFAULT_DIFF_TOL
    sentinel_tol: int = DEFAULT_SENTINEL_TOL
    min_box_px: int = DEFAULT_MIN_BOX_PX
    border_sz: int = DEFAULT_BORDER_SZ
    drop_noise_tables: bool = True

    def validate(self) -> None:
        self.render.validate()
        if self.diff_tol < 0 or self.sentinel_tol < 0 or self.min_box_px < 1:
            raise ConfigError("tolerances must be nonnegative and min_box_px at least 1")
        if channel_distance(self.annotated_color.rgb, self.control_color.rgb) < self.diff_tol:
            raise ConfigError("annotated and control colors are not distinguishable "
                              "at the configured diff tolerance")
        if self.latex_to_xml_cmd and ("{input}" not in self.latex_to_xml_cmd
                                      or "{output}" not in self.latex_to_xml_cmd):
            raise ConfigError("latex_to_xml_cmd must contain {input} and {output} placeholders")


def _load_toml(path: Path) -> dict:
    try:
        import tomllib
    except ImportError:
        try:
            import tomli as tomllib
        except ImportError as exc:
            raise ConfigError("TOML config requires Python 3.11+ or the tomli package; "
                              "use a .json config instead") from exc
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_config(path) -> PipelineConfig:
    """Read a config file. Sections: [render], [labels], [structure].

    JSON files use the same nesting with those keys at the top level.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix.lower() == ".json":
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
    else:
        raw = _load_toml(path)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    render = raw.get("render", {})
    for key in ("word_to_pdf_cmd", "latex_to_pdf_cmd", "rasterize_cmd"):
        if key in render:
            setattr(cfg.render, key, str(render[key]))
    if "dpi" in render:
        cfg.render.dpi = int(render["dpi"])
    if "timeout_s" in render:
        cfg.render.timeout_s = float(render["timeout_s"])

    labels = raw.get("labels", {})
    for key in ("diff_tol", "sentinel_tol", "min_box_px", "border_sz"):
        if key in labels:
            setattr(cfg, key, int(labels[key]))
    if "drop_noise_tables" in labels:
        cfg.drop_noise_tables = bool(labels["drop_noise_tables"])
    if "annotated_rgb" in labels:
        cfg.annotated_color = SentinelColor(tuple(labels["annotated_rgb"]), "annotated")
    if "control_rgb" in labels:
        cfg.control_color = SentinelColor(tuple(labels["control_rgb"]), "control")

    structure = raw.get("structure", {})
    if "latex_to_xml_cmd" in structure:
        cfg.latex_to_xml_cmd = str(structure["latex_to_xml_cmd"])

    cfg.validate()
    return cfg
