# tll_sizer/run_config.py
"""Run-level parameters: dataclass defaults, overridden by a JSON file, overridden by flags."""
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .dynamics import ControlSystem, PendulumParams, estimate_bounds, pendulum_interval_bounds, pendulum_system
from .errors import ConfigError
from .sizing import ROUNDING_MODES, SystemBounds
from .utils import Box, DomainBox

logger = logging.getLogger(__name__)

SYSTEMS = ('pendulum', 'bounds')
BOUNDS_MODES = ('interval', 'sampled')
ORACLES = ('expert', 'grid_distance')


@dataclass
class RunConfig:
    system: str = 'pendulum'
    pendulum: PendulumParams = field(default_factory=PendulumParams)
    bounds: Optional[Dict[str, float]] = None
    bounds_mode: str = 'interval'

    domain_lower: Tuple[float, ...] = (-1.0, -1.0)
    domain_upper: Tuple[float, ...] = (1.0, 1.0)
    control_lower: Tuple[float, ...] = (-6.0,)
    control_upper: Tuple[float, ...] = (6.0,)
    target_lower: Tuple[float, ...] = (-1.0, -0.5)
    target_upper: Tuple[float, ...] = (1.0, 0.5)

    k_cont: float = 0.1
    delta: Optional[float] = None
    mu: Optional[float] = None
    eta: Optional[float] = None
    eta_scale: float = 1.0
    rho: float = 0.5
    rounding: str = 'ceil'
    table_rounding: str = 'floor'
    oracle: str = 'expert'
    gains: Tuple[float, float] = (4.0, 4.0)
    clamp: bool = True

    seed: int = 0
    sup_samples: int = 10_000
    equivalence_samples: int = 20_000
    lattice_verify_samples: int = 10_000
    deviation_samples: int = 100
    invariance_samples: int = 100
    bound_grid: int = 21
    safety: float = 1.1

    horizon: float = 10.0
    dt: float = 1e-3
    hold: Optional[float] = None
    x0: List[Tuple[float, ...]] = field(default_factory=lambda: [(0.7, 0.5), (-0.4, 1.0)])
    artifact: Optional[str] = None

    check_sim: bool = False
    quantize_pitch: float = 0.25
    strict_labels: bool = False
    s_file: Optional[str] = None
    t_file: Optional[str] = None

    output_dir: str = 'out'
    format: str = 'markdown'

    # --- Derived objects ---

    def domain(self) -> DomainBox:
        return DomainBox(tuple(self.domain_lower), tuple(self.domain_upper), m=len(self.control_lower))

    def control_box(self) -> Box:
        return Box(tuple(self.control_lower), tuple(self.control_upper))

    def target_box(self) -> Box:
        return Box(tuple(self.target_lower), tuple(self.target_upper))

    def plant(self) -> Optional[ControlSystem]:
        if self.system != 'pendulum':
            return None
        return pendulum_system(self.pendulum, self.domain(), self.control_box())

    def system_bounds(self) -> SystemBounds:
        """Bounds driving the sizing chain for this run."""
        if self.system == 'bounds':
            b = self.bounds or {}
            return SystemBounds(k_x=b['k_x'], k_u=b['k_u'], k_vf=b['k_vf'], k_cont=self.k_cont, delta=self.delta)
        if self.bounds_mode == 'sampled':
            return estimate_bounds(self.plant(), self.bound_grid, self.k_cont, self.delta, safety=self.safety)
        k_x, k_u, k_vf = pendulum_interval_bounds(self.pendulum, self.domain(), self.control_box())
        return SystemBounds(k_x=k_x, k_u=k_u, k_vf=k_vf, k_cont=self.k_cont, delta=self.delta)

    # --- Validation ---

    def validate(self, require_sizing: bool = False) -> 'RunConfig':
        if self.system not in SYSTEMS:
            raise ConfigError(f"Unknown system '{self.system}', expected one of {SYSTEMS}")
        if self.bounds_mode not in BOUNDS_MODES:
            raise ConfigError(f"Unknown bounds_mode '{self.bounds_mode}', expected one of {BOUNDS_MODES}")
        if self.oracle not in ORACLES:
            raise ConfigError(f"Unknown oracle '{self.oracle}', expected one of {ORACLES}")
        if self.table_rounding not in ROUNDING_MODES:
            raise ConfigError(f"Unknown table_rounding '{self.table_rounding}', expected one of {ROUNDING_MODES}")
        if self.rounding not in ROUNDING_MODES:
            raise ConfigError(f"Unknown rounding '{self.rounding}', expected one of {ROUNDING_MODES}")
        if self.system == 'bounds':
            missing = [k for k in ('k_x', 'k_u', 'k_vf') if not self.bounds or k not in self.bounds]
            if missing:
                raise ConfigError(f"system 'bounds' requires bounds {missing}")

        positive = {'k_cont': self.k_cont, 'eta_scale': self.eta_scale, 'horizon': self.horizon,
                    'dt': self.dt, 'quantize_pitch': self.quantize_pitch, 'safety': self.safety}
        for name in ('delta', 'mu', 'eta', 'hold'):
            if getattr(self, name) is not None:
                positive[name] = getattr(self, name)
        for name, value in positive.items():
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be positive and finite, got {value}")
        for name in ('sup_samples', 'equivalence_samples', 'deviation_samples', 'invariance_samples'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.bound_grid < 2:
            raise ConfigError(f"bound_grid must be >= 2, got {self.bound_grid}")
        if not 0 < self.rho < 1:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}")
        if self.horizon < self.dt:
            raise ConfigError(f"horizon {self.horizon} is shorter than dt {self.dt}")
        if self.format not in ('markdown', 'json'):
            raise ConfigError(f"Unknown format '{self.format}'")

        try:
            domain = self.domain()
            self.control_box()
            target = self.target_box()
        except ValueError as e:
            raise ConfigError(str(e))
        if target.dim != domain.n:
            raise ConfigError(f"target box has dimension {target.dim}, state dimension is {domain.n}")
        if self.system == 'pendulum' and (domain.n != 2 or domain.m != 1):
            raise ConfigError("The pendulum has n=2 states and m=1 input")
        for point in self.x0:
            if len(point) != domain.n:
                raise ConfigError(f"Initial condition {point} does not have {domain.n} coordinates")

        if require_sizing:
            if self.delta is None and self.mu is None:
                raise ConfigError("Sizing needs either --delta or --mu")
            if self.delta is not None and self.mu is not None:
                raise ConfigError("Give exactly one of --delta or --mu, not both")
        return self


def _coerce(name: str, value: Any) -> Any:
    if name == 'pendulum' and isinstance(value, dict):
        try:
            return PendulumParams(**value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid pendulum parameters: {e}")
    if name == 'x0':
        return [tuple(float(v) for v in point) for point in value]
    if name in ('domain_lower', 'domain_upper', 'control_lower', 'control_upper',
                'target_lower', 'target_upper', 'gains'):
        return tuple(float(v) for v in value)
    return value


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None,
                    defaults: Optional[Dict[str, Any]] = None) -> RunConfig:
    """defaults < JSON file < overrides; None-valued overrides are ignored."""
    names = {f.name for f in dataclasses.fields(RunConfig)}
    values: Dict[str, Any] = {}
    layers = [defaults or {}]
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                file_values = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(file_values, dict):
            raise ConfigError(f"Config file {path} must contain a JSON object")
        layers.append(file_values)
    layers.append({k: v for k, v in (overrides or {}).items() if v is not None})

    for layer in layers:
        unknown = set(layer) - names
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        for name, value in layer.items():
            values[name] = _coerce(name, value)
    try:
        return RunConfig(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid configuration: {e}")
