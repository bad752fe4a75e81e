"""JSON experiment configuration.

Lengths are given in wavelengths and powers/SINRs in dB; everything is
converted to meters and linear ratios on load. Unknown keys are rejected so
typos surface as errors instead of silently falling back to defaults.
"""
from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Tuple

import numpy as np

from .baselines import BaselineKind, GaParams
from .hris_opt import AgdParams, FgsParams, PenaltyParams
from .orchestrator import OptimizerConfig
from .scene import ArrayLayout, ChannelModel, Scene
from .units import db_to_linear


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class SweepKind(enum.Enum):
    NONE = "none"
    POWER = "power"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class SceneConfig:
    wavelength_m: float = 0.1
    bs_center: Tuple[float, float, float] = (0.0, 0.0, 300.0)
    num_antennas: int = 8
    antenna_spacing: float = 0.5
    hris_center: Tuple[float, float, float] = (0.0, 100.0, 30.0)
    num_elements: int = 16
    element_spacing: float = 1.0
    hris_layout: str = "upa"
    users: Tuple[Tuple[float, float, float], ...] = ((75.0, 100.0, 0.0),)
    grid_origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    grid_shape: Tuple[int, int] = (1, 1)
    grid_spacing: float = 1.0
    target_cell: Tuple[int, int] = (0, 0)
    noise_db: float = 0.0
    p_t_db: float = 0.0
    channel_model: str = "los_phase"

    def build(self, seed: int = 0, p_t_db: Optional[float] = None) -> Scene:
        lam = self.wavelength_m
        bs = ArrayLayout.ula(np.array(self.bs_center) * lam, self.num_antennas,
                             self.antenna_spacing * lam, lam, axis="y")
        hc = np.array(self.hris_center) * lam
        if self.hris_layout == "upa":
            hris = ArrayLayout.upa_yoz(hc, self.num_elements, self.element_spacing * lam, lam)
        else:
            hris = ArrayLayout.ula(hc, self.num_elements, self.element_spacing * lam, lam, axis="y")
        P, Q = self.grid_shape
        p, q = np.meshgrid(np.arange(P), np.arange(Q), indexing="ij")
        offs = np.stack([q, p, np.zeros_like(p)], axis=-1) * self.grid_spacing
        grid = (np.array(self.grid_origin) + offs) * lam
        return Scene(
            bs=bs, hris=hris, users=np.array(self.users, float).reshape(-1, 3) * lam,
            detect_grid=grid, target_cell=tuple(self.target_cell),
            noise_power=db_to_linear(self.noise_db),
            per_antenna_power=db_to_linear(self.p_t_db if p_t_db is None else p_t_db),
            channel_model=ChannelModel(self.channel_model), seed=seed)


@dataclass(frozen=True)
class OptimizerSettings:
    gamma_c_db: float = 5.0
    lambda1: float = 10.0
    lambda2: float = 1.0
    alpha1: float = 4.0
    alpha2: int = 10
    max_iters: int = 1000
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_backoff: float = 0.5
    lr_recover: float = 1.2
    z_max: int = 10
    m_max: Optional[int] = None
    use_fgs: bool = True
    epsilon: float = 1e-3
    max_outer: int = 20
    bisect_tol: float = 1e-9
    bisect_rtol: float = 1e-7
    solver: str = "CLARABEL"

    def build(self, gamma_c_db: Optional[float] = None) -> OptimizerConfig:
        g_db = self.gamma_c_db if gamma_c_db is None else gamma_c_db
        return OptimizerConfig(
            gamma_c=db_to_linear(g_db),
            penalty=PenaltyParams(self.lambda1, self.lambda2, self.alpha1, self.alpha2,
                                  db_to_linear(g_db)),
            agd=AgdParams(self.max_iters, self.learning_rate, self.adam_beta1,
                          self.adam_beta2, self.adam_eps, self.lr_backoff, self.lr_recover),
            fgs=FgsParams(self.z_max, self.m_max) if self.use_fgs else None,
            epsilon=self.epsilon, max_outer=self.max_outer, bisect_tol=self.bisect_tol,
            bisect_rtol=self.bisect_rtol, solver=self.solver)


@dataclass(frozen=True)
class SweepConfig:
    kind: SweepKind = SweepKind.NONE
    values_db: Tuple[float, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = SceneConfig()
    optimizer: OptimizerSettings = OptimizerSettings()
    ga: GaParams = GaParams()
    sweep: SweepConfig = SweepConfig()
    systems: Tuple[BaselineKind, ...] = (BaselineKind.HRIS,)
    seed: int = 0
    output_dir: str = "out"
    monte_carlo_samples: int = 100000

    def build_scene(self, p_t_db: Optional[float] = None) -> Scene:
        return self.scene.build(self.seed, p_t_db)

    def build_optimizer(self, gamma_c_db: Optional[float] = None) -> OptimizerConfig:
        return self.optimizer.build(gamma_c_db)

    def ga_params(self) -> GaParams:
        return dataclasses.replace(self.ga, seed=self.seed)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=int(seed))


# -- parsing ----------------------------------------------------------------

_SCENE_KEYS = {
    "wavelength_m": "wavelength_m", "bs_center_wavelengths": "bs_center",
    "num_antennas": "num_antennas", "antenna_spacing_wavelengths": "antenna_spacing",
    "hris_center_wavelengths": "hris_center", "num_elements": "num_elements",
    "element_spacing_wavelengths": "element_spacing", "hris_layout": "hris_layout",
    "users_wavelengths": "users", "grid_origin_wavelengths": "grid_origin",
    "grid_shape": "grid_shape", "grid_spacing_wavelengths": "grid_spacing",
    "target_cell": "target_cell", "noise_db": "noise_db", "p_t_db": "p_t_db",
    "channel_model": "channel_model",
}


def _check_keys(obj: dict, allowed, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(where, "expected an object")
    for k in obj:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}" if where else k, "unknown field")


def _num(v, name, integer=False, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(name, f"expected an integer, got {v!r}")
    if not np.isfinite(v):
        raise ConfigError(name, "must be finite")
    if positive and not v > 0:
        raise ConfigError(name, f"must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(name, f"must be >= 0, got {v!r}")
    return int(v) if integer else float(v)


def _vec3(v, name):
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise ConfigError(name, "expected [x, y, z]")
    return tuple(_num(x, f"{name}[{i}]") for i, x in enumerate(v))


def _parse_scene(obj: dict) -> SceneConfig:
    _check_keys(obj, _SCENE_KEYS, "scene")
    kw = {}
    for key, attr in _SCENE_KEYS.items():
        if key not in obj:
            continue
        v, name = obj[key], f"scene.{key}"
        if attr in ("bs_center", "hris_center", "grid_origin"):
            kw[attr] = _vec3(v, name)
        elif attr == "users":
            if not isinstance(v, list) or not v:
                raise ConfigError(name, "need at least one user")
            kw[attr] = tuple(_vec3(u, f"{name}[{i}]") for i, u in enumerate(v))
        elif attr in ("num_antennas", "num_elements"):
            kw[attr] = _num(v, name, integer=True, positive=True)
        elif attr in ("grid_shape", "target_cell"):
            if not isinstance(v, list) or len(v) != 2:
                raise ConfigError(name, "expected two integers")
            kw[attr] = tuple(_num(x, f"{name}[{i}]", integer=True, nonneg=True)
                             for i, x in enumerate(v))
        elif attr == "hris_layout":
            if v not in ("upa", "ula"):
                raise ConfigError(name, "must be 'upa' or 'ula'")
            kw[attr] = v
        elif attr == "channel_model":
            if v not in [m.value for m in ChannelModel]:
                raise ConfigError(name, f"must be one of {[m.value for m in ChannelModel]}")
            kw[attr] = v
        elif attr in ("wavelength_m", "antenna_spacing", "element_spacing", "grid_spacing"):
            kw[attr] = _num(v, name, positive=True)
        else:
            kw[attr] = _num(v, name)
    sc = SceneConfig(**kw)
    if sc.hris_layout == "upa" and round(np.sqrt(sc.num_elements)) ** 2 != sc.num_elements:
        raise ConfigError("scene.num_elements", "a planar HRIS needs a square element count")
    P, Q = sc.grid_shape
    if P < 1 or Q < 1:
        raise ConfigError("scene.grid_shape", "rows and columns must be >= 1")
    if not (sc.target_cell[0] < P and sc.target_cell[1] < Q):
        raise ConfigError("scene.target_cell", f"outside the {P}x{Q} grid")
    return sc


def _parse_dataclass(obj: dict, cls, where: str, rules: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(obj, names, where)
    kw = {}
    for k, v in obj.items():
        name = f"{where}.{k}"
        rule = rules.get(k, {})
        if v is None and rule.get("nullable"):
            kw[k] = None
        elif rule.get("type") is str:
            if not isinstance(v, str):
                raise ConfigError(name, "expected a string")
            kw[k] = v
        elif rule.get("type") is bool:
            if not isinstance(v, bool):
                raise ConfigError(name, "expected true or false")
            kw[k] = v
        else:
            kw[k] = _num(v, name, **{r: rule[r] for r in ("integer", "positive", "nonneg") if r in rule})
    try:
        return cls(**kw)
    except ValueError as e:
        raise ConfigError(where, str(e)) from None


_OPT_RULES = {
    "alpha2": {"integer": True, "positive": True}, "max_iters": {"integer": True, "nonneg": True},
    "z_max": {"integer": True, "positive": True},
    "m_max": {"integer": True, "positive": True, "nullable": True},
    "max_outer": {"integer": True, "positive": True}, "solver": {"type": str},
    "use_fgs": {"type": bool}, "lambda1": {"positive": True}, "lambda2": {"positive": True},
    "learning_rate": {"positive": True}, "epsilon": {"positive": True},
    "bisect_tol": {"positive": True}, "bisect_rtol": {"nonneg": True},
}
_GA_RULES = {
    "population": {"integer": True, "positive": True}, "generations": {"integer": True, "nonneg": True},
    "tournament": {"integer": True, "positive": True}, "seed": {"integer": True, "nonneg": True},
    "mutation_rate": {"nullable": True, "nonneg": True}, "mutation_sigma": {"nonneg": True},
}


def _parse_sweep(obj) -> SweepConfig:
    _check_keys(obj, {"kind", "values_db"}, "sweep")
    try:
        kind = SweepKind(obj.get("kind", "none"))
    except ValueError:
        raise ConfigError("sweep.kind", f"must be one of {[k.value for k in SweepKind]}") from None
    vals = obj.get("values_db", [])
    if not isinstance(vals, list):
        raise ConfigError("sweep.values_db", "expected a list")
    vals = tuple(_num(v, f"sweep.values_db[{i}]") for i, v in enumerate(vals))
    if kind is not SweepKind.NONE and not vals:
        raise ConfigError("sweep.values_db", "must be non-empty for a power or threshold sweep")
    return SweepConfig(kind, vals)


def parse_systems(items) -> Tuple[BaselineKind, ...]:
    if isinstance(items, str):
        items = [s for s in items.split(",") if s.strip()]
    if not isinstance(items, (list, tuple)) or not items:
        raise ConfigError("systems", "need a non-empty list")
    out = []
    for s in items:
        try:
            k = BaselineKind(str(s).strip().upper())
        except ValueError:
            raise ConfigError("systems", f"unknown system {s!r}; choose from "
                              f"{[k.value for k in BaselineKind]}") from None
        if k not in out:
            out.append(k)
    return tuple(out)


def parse_config(obj: Any) -> ExperimentConfig:
    _check_keys(obj, {"scene", "optimizer", "ga", "sweep", "systems", "seed", "output_dir",
                      "monte_carlo_samples", "description"}, "")
    kw = {}
    if "scene" in obj:
        kw["scene"] = _parse_scene(obj["scene"])
    if "optimizer" in obj:
        kw["optimizer"] = _parse_dataclass(obj["optimizer"], OptimizerSettings, "optimizer", _OPT_RULES)
    if "ga" in obj:
        kw["ga"] = _parse_dataclass(obj["ga"], GaParams, "ga", _GA_RULES)
    if "sweep" in obj:
        kw["sweep"] = _parse_sweep(obj["sweep"])
    if "systems" in obj:
        kw["systems"] = parse_systems(obj["systems"])
    if "seed" in obj:
        kw["seed"] = _num(obj["seed"], "seed", integer=True, nonneg=True)
    if "output_dir" in obj:
        if not isinstance(obj["output_dir"], str):
            raise ConfigError("output_dir", "expected a string")
        kw["output_dir"] = obj["output_dir"]
    if "monte_carlo_samples" in obj:
        kw["monte_carlo_samples"] = _num(obj["monte_carlo_samples"], "monte_carlo_samples",
                                         integer=True, positive=True)
    cfg = ExperimentConfig(**kw)
    try:
        cfg.build_scene()
    except ValueError as e:
        raise ConfigError("scene", str(e)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("--config", f"cannot read {path}: {e.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"invalid JSON at line {e.lineno}: {e.msg}") from None
    return parse_config(obj)


def bundled_config_path(name: str = "table1.cfg") -> Path:
    """Path of a config shipped with the package (table1, power_sweep, threshold_sweep)."""
    return Path(str(resources.files("hris_dfrc") / "data" / name))


def load_bundled(name: str = "table1.cfg") -> ExperimentConfig:
    return load_config(bundled_config_path(name))
