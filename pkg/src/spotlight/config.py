"""Run configuration: presets, JSON loading and validation."""
import json
from dataclasses import asdict, dataclass, fields
from typing import Optional, Union

from .errors import ConfigError
from .tomo import FanBeamGeometry, Roi

PRESETS = {
    # 64 x 64 grid, 16 x 16 ROI, 60 angles: runs in well under a minute
    "desk": {"grid_n": 64, "roi_size": 16, "n_angles": 60},
    # 128 x 128 grid, 40 x 40 ROI, 120 angles: full-scale configuration
    "large": {"grid_n": 128, "roi_size": 40, "n_angles": 120},
}


@dataclass
class RunConfig:
    preset: str = "desk"
    grid_n: int = 64
    roi: Optional[dict] = None
    roi_size: int = 16
    n_angles: int = 60
    pixel_size: float = 1.9
    source_radius: Optional[float] = None
    detector_count: Optional[int] = None
    detector_span: Optional[float] = None
    phantom: str = "default"
    phantom_scale: float = 0.01
    noise_sigma: float = 0.0031
    sigma: Union[str, float] = "estimate"
    zeta: float = 2.5e-4
    seed: int = 0
    method: str = "projected"
    basis: str = "truncated:auto"
    rule: str = "smallest-below-one"
    solver: str = "auto"
    r_list: Optional[Union[str, list]] = None
    curve_cap: Optional[int] = None

    @classmethod
    def from_sources(cls, file_values=None, overrides=None):
        """Preset defaults < config file < command-line overrides."""
        merged = {}
        for src in (file_values or {}, overrides or {}):
            merged.update({k: v for k, v in src.items() if v is not None})
        preset = merged.get("preset", "desk")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}", "preset")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}", unknown[0])
        values = dict(PRESETS[preset])
        values.update(merged)
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides=None):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}", "config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}", "config") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object", "config")
        return cls.from_sources(data, overrides)

    def validate(self):
        def positive(name, integer=False):
            v = getattr(self, name)
            if integer and (not isinstance(v, int) or isinstance(v, bool)):
                raise ConfigError(f"{name} must be an integer", name)
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}", name)

        positive("grid_n", integer=True)
        if self.grid_n < 8:
            raise ConfigError("grid_n must be >= 8", "grid_n")
        positive("n_angles", integer=True)
        positive("pixel_size")
        positive("phantom_scale")
        positive("noise_sigma")
        positive("zeta")
        if self.roi is None:
            positive("roi_size", integer=True)
        if self.sigma != "estimate":
            if not isinstance(self.sigma, (int, float)) or not self.sigma > 0:
                raise ConfigError("sigma must be 'estimate' or a positive number", "sigma")
        if self.phantom != "default":
            raise ConfigError(f"unknown phantom {self.phantom!r}", "phantom")
        if self.method not in ("naive", "marginal", "full", "projected"):
            raise ConfigError(f"unknown method {self.method!r}", "method")
        if self.rule not in ("smallest-below-one", "argmin"):
            raise ConfigError(f"unknown rule {self.rule!r}", "rule")
        if self.solver not in ("auto", "direct", "cg"):
            raise ConfigError(f"unknown solver {self.solver!r}", "solver")
        from .pipeline import parse_basis_spec
        try:
            parse_basis_spec(self.basis)
        except ValueError as exc:
            raise ConfigError(str(exc), "basis") from exc
        self.make_roi().validate(self.grid_n)
        self.make_geometry().validate(self.grid_n, self.pixel_size)

    def make_roi(self):
        if self.roi is not None:
            try:
                return Roi(**{k: int(self.roi[k]) for k in ("row", "col", "height", "width")})
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError("roi needs integer row, col, height, width", "roi") from exc
        if self.roi_size > self.grid_n:
            raise ConfigError("roi_size larger than the grid", "roi_size")
        return Roi.centered(self.grid_n, self.roi_size)

    def make_geometry(self):
        g = FanBeamGeometry.default(self.grid_n, self.n_angles, self.pixel_size)
        return FanBeamGeometry(
            n_angles=self.n_angles,
            source_radius=g.source_radius if self.source_radius is None else float(self.source_radius),
            detector_count=g.detector_count if self.detector_count is None else int(self.detector_count),
            detector_span=g.detector_span if self.detector_span is None else float(self.detector_span),
        )

    def to_dict(self):
        return asdict(self)
