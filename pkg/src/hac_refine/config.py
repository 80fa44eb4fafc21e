"""Single-JSON pipeline configuration with strict validation.

Every tunable (tolerances, weights, thresholds, kernel widths) lives here
with its module default; unknown keys are rejected so typos fail loudly
instead of silently running defaults.
"""

import json
from dataclasses import dataclass, fields

from .errors import ConfigError
from .gauss import HeatKernelSpec, KernelSpec
from .hybrid_ac import HybridACParams


@dataclass(frozen=True)
class PathsConfig:
    input_dir: str
    output_dir: str
    bbox_csv: str = None


@dataclass(frozen=True)
class GateConfig:
    tol_mm: float = 1.0
    bin_thresh: float = 0.5
    threshold: float = 0.2

    def __post_init__(self):
        if not self.tol_mm > 0:
            raise ConfigError(f"uncertainty.tol_mm must be positive, got {self.tol_mm}")
        if not 0.0 < self.bin_thresh < 1.0:
            raise ConfigError(f"uncertainty.bin_thresh must be in (0,1), got {self.bin_thresh}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"uncertainty.threshold must be in [0,1], got {self.threshold}")


@dataclass(frozen=True)
class OutputConfig:
    policy: str = "both"  # or "refined-only"

    def __post_init__(self):
        if self.policy not in ("both", "refined-only"):
            raise ConfigError(f"output.policy must be 'both' or 'refined-only', got {self.policy!r}")


@dataclass(frozen=True)
class PhantomGenConfig:
    """Cohort generator knobs; member jitter is derived per case and seed."""

    n_cases: int = 3
    seed: int = 1234
    shape: tuple = (64, 64, 64)
    spacing: tuple = (1.0, 1.0, 1.0)
    radius_mm: float = 12.0
    center_mm: tuple = None  # grid center when omitted
    pet_contrast: tuple = (4.0, 1.0)
    noise_sigma: float = 0.2
    ct_edge_strength: float = 1.0
    prob_blur_sigma: float = 1.5
    member_shift_mm: float = 2.0
    member_radius_scale: tuple = (0.95, 1.05)

    def __post_init__(self):
        if self.n_cases < 1:
            raise ConfigError(f"phantom.n_cases must be >= 1, got {self.n_cases}")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if self.center_mm is not None:
            object.__setattr__(self, "center_mm", tuple(float(c) for c in self.center_mm))
        object.__setattr__(self, "pet_contrast", tuple(float(v) for v in self.pet_contrast))
        object.__setattr__(
            self, "member_radius_scale", tuple(float(v) for v in self.member_radius_scale)
        )


# JSON keys of the hybrid_ac section and how they build HybridACParams
_HAC_KEYS = (
    "sigma_vox", "truncate", "tau", "edge_sigma", "edge_beta",
    "w_pet", "w_ct", "w_cnn", "max_iter", "eps", "fixed_c",
)


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig
    target_spacing: tuple = (1.0, 1.0, 1.0)
    uncertainty: GateConfig = GateConfig()
    hybrid_ac: HybridACParams = HybridACParams()
    output: OutputConfig = OutputConfig()
    phantom: PhantomGenConfig = PhantomGenConfig()


def _check_keys(section, data, allowed):
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")


def _dataclass_from(section, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be a JSON object")
    names = [f.name for f in fields(cls)]
    _check_keys(section, data, names)
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {section} section: {exc}") from exc


def _hybrid_ac_from(data):
    if not isinstance(data, dict):
        raise ConfigError("hybrid_ac must be a JSON object")
    _check_keys("hybrid_ac", data, _HAC_KEYS)
    kernel_kw = {}
    if "sigma_vox" in data:
        kernel_kw["sigma_vox"] = data["sigma_vox"]
    if "truncate" in data:
        kernel_kw["truncate"] = data["truncate"]
    params_kw = {
        k: v for k, v in data.items() if k not in ("sigma_vox", "truncate", "tau")
    }
    if "fixed_c" in params_kw and params_kw["fixed_c"] is not None:
        params_kw["fixed_c"] = tuple(params_kw["fixed_c"])
    try:
        return HybridACParams(
            k_pet=KernelSpec(**kernel_kw),
            heat=HeatKernelSpec(tau=data.get("tau", 1.0)),
            **params_kw,
        )
    except ValueError as exc:
        raise ConfigError(f"bad hybrid_ac section: {exc}") from exc


def _target_spacing_from(value):
    if isinstance(value, (int, float)):
        return (float(value),) * 3
    if isinstance(value, (list, tuple)) and len(value) == 3:
        return tuple(float(v) for v in value)
    raise ConfigError(f"target_spacing must be a number or length-3 list, got {value!r}")


def parse_config(data) -> PipelineConfig:
    """Build a validated PipelineConfig from a parsed JSON document."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(
        "config",
        data,
        ("paths", "target_spacing", "uncertainty", "hybrid_ac", "output", "phantom"),
    )
    if "paths" not in data:
        raise ConfigError("config needs a 'paths' section")
    kwargs = {"paths": _dataclass_from("paths", PathsConfig, data["paths"])}
    if "target_spacing" in data:
        kwargs["target_spacing"] = _target_spacing_from(data["target_spacing"])
    if "uncertainty" in data:
        kwargs["uncertainty"] = _dataclass_from("uncertainty", GateConfig, data["uncertainty"])
    if "hybrid_ac" in data:
        kwargs["hybrid_ac"] = _hybrid_ac_from(data["hybrid_ac"])
    if "output" in data:
        kwargs["output"] = _dataclass_from("output", OutputConfig, data["output"])
    if "phantom" in data:
        kwargs["phantom"] = _dataclass_from("phantom", PhantomGenConfig, data["phantom"])
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    """Read and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)
