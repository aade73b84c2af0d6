# tll_sizer/dynamics.py
"""Plant models, Lipschitz bound estimation, fixed-step RK4 closed-loop
simulation and the deviation / invariance checks built on it."""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DivergedError, NonFiniteError
from .sizing import SystemBounds
from .utils import Box, DomainBox, grid_points, halton_points, write_csv

logger = logging.getLogger(__name__)

Controller = Callable[[np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]
Jacobian = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

DIVERGENCE_FACTOR = 1e3
FD_STEP = 1e-6
DEFAULT_SAFETY = 1.1
STEP_SNAP = 1e-9


@dataclass(frozen=True)
class ControlSystem:
    domain: DomainBox
    control_box: Box
    vector_field: VectorField
    jacobian: Optional[Jacobian] = None
    name: str = 'system'

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def m(self) -> int:
        return self.domain.m


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        if not (len(self.t) == len(self.x) == len(self.u)):
            raise ValueError("Trajectory arrays must have equal length")

    @property
    def final_state(self) -> np.ndarray:
        return self.x[-1]

    def header(self) -> List[str]:
        return (['t'] + [f'x{k + 1}' for k in range(self.x.shape[1])]
                + [f'u{k + 1}' for k in range(self.u.shape[1])])

    def to_csv(self, path: str) -> str:
        return write_csv(path, self.header(), np.hstack([self.t[:, None], self.x, self.u]))

    def enters_and_remains(self, target: Box) -> Tuple[bool, Optional[float]]:
        """Whether the trajectory reaches `target` and never leaves it afterwards, and the entry time."""
        inside = np.all((self.x >= target.lower_array) & (self.x <= target.upper_array), axis=1)
        if not inside[-1]:
            return False, None
        outside = np.flatnonzero(~inside)
        entry = 0 if outside.size == 0 else int(outside[-1]) + 1
        return True, float(self.t[entry])


# --- Pendulum ---

@dataclass(frozen=True)
class PendulumParams:
    mass: float = 0.5
    length: float = 0.5
    friction: float = 2.0
    gravity: float = 9.8

    def __post_init__(self):
        for name in ('mass', 'length', 'friction', 'gravity'):
            if not getattr(self, name) > 0:
                raise ValueError(f"PendulumParams.{name} must be positive, got {getattr(self, name)}")

    def to_dict(self) -> Dict[str, float]:
        return {'mass': self.mass, 'length': self.length, 'friction': self.friction, 'gravity': self.gravity}


def pendulum_field(p: PendulumParams, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    x1, x2 = float(x[0]), float(x[1])
    u1 = float(np.ravel(u)[0])
    ml = p.mass * p.length
    return np.array([x2,
                     (p.gravity / p.length) * math.sin(x1)
                     - (p.friction / (ml * p.length)) * x2
                     + (1.0 / ml) * math.cos(x1) * u1])


def pendulum_jacobian(p: PendulumParams, x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x1 = float(x[0])
    u1 = float(np.ravel(u)[0])
    ml = p.mass * p.length
    A = np.array([[0.0, 1.0],
                  [(p.gravity / p.length) * math.cos(x1) - (1.0 / ml) * math.sin(x1) * u1,
                   -p.friction / (ml * p.length)]])
    B = np.array([[0.0], [math.cos(x1) / ml]])
    return A, B


def pendulum_system(p: PendulumParams, domain: Optional[DomainBox] = None,
                    control_box: Optional[Box] = None) -> ControlSystem:
    domain = domain or DomainBox((-1.0, -1.0), (1.0, 1.0), m=1)
    control_box = control_box or Box((-6.0,), (6.0,))
    return ControlSystem(domain=domain, control_box=control_box,
                         vector_field=lambda x, u: pendulum_field(p, x, u),
                         jacobian=lambda x, u: pendulum_jacobian(p, x, u),
                         name='pendulum')


def pendulum_interval_bounds(p: PendulumParams, domain: DomainBox, control_box: Box) -> Tuple[float, float, float]:
    """Coarse interval bounds (K_x, K_u, K_vf) of the pendulum on X x U."""
    ml = p.mass * p.length
    damping = p.friction / (ml * p.length)
    x1_max = float(np.max(np.abs([domain.lower[0], domain.upper[0]])))
    x2_max = float(np.max(np.abs([domain.lower[1], domain.upper[1]])))
    u_max = float(np.max(np.abs(np.concatenate([control_box.lower_array, control_box.upper_array]))))
    k_vf = p.gravity / p.length + damping * x2_max + u_max / ml
    k_x = p.gravity / p.length + (u_max / ml) * math.sin(min(x1_max, math.pi / 2)) + damping
    k_u = 1.0 / ml
    return k_x, k_u, k_vf


def expert_controller(p: PendulumParams, gains: Tuple[float, float] = (4.0, 4.0),
                      control_box: Optional[Box] = None) -> Controller:
    """Feedback-linearizing PD law, saturated into the control box."""
    control_box = control_box or Box((-6.0,), (6.0,))
    k1, k2 = gains
    ml = p.mass * p.length
    damping = p.friction / (ml * p.length)

    def controller(x: np.ndarray) -> np.ndarray:
        x1, x2 = float(x[0]), float(x[1])
        u = (ml / math.cos(x1)) * (-(p.gravity / p.length) * math.sin(x1) + damping * x2 - k1 * x1 - k2 * x2)
        return control_box.clamp(np.array([u]))

    return controller


def constant_offset(controller: Controller, kappa: float) -> Controller:
    return lambda x: np.asarray(controller(x), dtype=float) + kappa


# --- Bound estimation ---

def _finite_difference_jacobian(sys: ControlSystem, x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    A = np.empty((sys.n, sys.n))
    B = np.empty((sys.n, sys.m))
    for j in range(sys.n):
        e = np.zeros(sys.n)
        e[j] = FD_STEP
        A[:, j] = (sys.vector_field(x + e, u) - sys.vector_field(x - e, u)) / (2 * FD_STEP)
    for j in range(sys.m):
        e = np.zeros(sys.m)
        e[j] = FD_STEP
        B[:, j] = (sys.vector_field(x, u + e) - sys.vector_field(x, u - e)) / (2 * FD_STEP)
    return A, B


def estimate_bounds(sys: ControlSystem, grid_per_axis: int, k_cont: float,
                    delta: Optional[float] = None, safety: float = DEFAULT_SAFETY) -> SystemBounds:
    """Sampled K_x, K_u (max inf-norm of the Jacobians) and K_vf (max |f|, inflated by `safety`)."""
    if grid_per_axis < 2:
        raise ValueError(f"grid_per_axis must be >= 2, got {grid_per_axis}")
    joint = Box(sys.domain.lower + sys.control_box.lower, sys.domain.upper + sys.control_box.upper)
    jacobian = sys.jacobian or (lambda x, u: _finite_difference_jacobian(sys, x, u))

    k_x = k_u = k_vf = 0.0
    for sample in grid_points(joint, grid_per_axis):
        x, u = sample[:sys.n], sample[sys.n:]
        rate = np.asarray(sys.vector_field(x, u), dtype=float)
        A, B = jacobian(x, u)
        if not (np.all(np.isfinite(rate)) and np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise NonFiniteError(f"Non-finite vector field or Jacobian at x={x.tolist()}, u={u.tolist()}")
        k_vf = max(k_vf, float(np.max(np.abs(rate))))
        k_x = max(k_x, float(np.max(np.sum(np.abs(A), axis=1))))
        k_u = max(k_u, float(np.max(np.sum(np.abs(B), axis=1))))
    logger.info(f"Sampled bounds on {grid_per_axis}^{joint.dim} grid: K_x={k_x:.6g}, K_u={k_u:.6g}, "
                f"max|f|={k_vf:.6g} (x{safety} safety)")
    return SystemBounds(k_x=k_x, k_u=k_u, k_vf=k_vf * safety, k_cont=k_cont, delta=delta)


def measure_lipschitz(controller: Controller, domain: Box, grid_per_axis: int = 41) -> float:
    """Finite-difference sup-norm Lipschitz constant over neighbouring grid points (diagonals included)."""
    points = grid_points(domain, grid_per_axis)
    shape = (grid_per_axis,) * domain.dim
    values = np.array([np.atleast_1d(controller(p)) for p in points]).reshape(shape + (-1,))
    coords = points.reshape(shape + (domain.dim,))
    best = 0.0
    for offset in itertools.product((-1, 0, 1), repeat=domain.dim):
        nonzero = [o for o in offset if o]
        if not nonzero or nonzero[0] < 0:
            continue
        slicer_a = tuple(slice(max(0, -o), grid_per_axis - max(0, o)) for o in offset)
        slicer_b = tuple(slice(max(0, o), grid_per_axis - max(0, -o)) for o in offset)
        du = np.max(np.abs(values[slicer_b] - values[slicer_a]), axis=-1)
        dx = np.max(np.abs(coords[slicer_b] - coords[slicer_a]), axis=-1)
        best = max(best, float(np.max(du / dx)))
    return best


# --- Simulation ---

def _rk4_step(rate: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    k1 = rate(x)
    k2 = rate(x + h / 2 * k1)
    k3 = rate(x + h / 2 * k2)
    k4 = rate(x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate(sys: ControlSystem, controller: Controller, x0: Sequence[float], horizon: float, dt: float,
             hold: Optional[float] = None) -> Trajectory:
    """Fixed-step RK4 closed loop; with `hold` the control is a zero-order hold refreshed every `hold` seconds.

    When `horizon` is not a multiple of `dt` the last step is shortened so the
    trajectory ends exactly at `horizon`.
    """
    if not dt > 0 or horizon < dt:
        raise ValueError(f"Need dt > 0 and horizon >= dt, got dt={dt}, horizon={horizon}")
    steps = int(math.floor(horizon / dt + STEP_SNAP))
    t = np.arange(steps + 1) * dt
    if horizon - t[-1] > STEP_SNAP * dt:
        t = np.append(t, horizon)
    hold_steps = None
    if hold is not None:
        hold_steps = max(1, int(round(hold / dt)))
    limit = DIVERGENCE_FACTOR * sys.domain.ext

    x = np.asarray(x0, dtype=float).copy()
    xs = np.empty((len(t), sys.n))
    us = np.empty((len(t), sys.m))
    held = None
    for k in range(len(t)):
        if hold_steps is not None and k % hold_steps == 0:
            held = np.atleast_1d(np.asarray(controller(x), dtype=float))
        u_now = held if hold_steps is not None else np.atleast_1d(np.asarray(controller(x), dtype=float))
        xs[k], us[k] = x, u_now
        if k == len(t) - 1:
            break
        h = t[k + 1] - t[k]
        if hold_steps is not None:
            u_fixed = held
            x = _rk4_step(lambda z: np.asarray(sys.vector_field(z, u_fixed), dtype=float), x, h)
        else:
            x = _rk4_step(lambda z: np.asarray(sys.vector_field(z, controller(z)), dtype=float), x, h)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > limit:
            raise DivergedError(f"Trajectory from {list(x0)} diverged at t={t[k + 1]:.6g}", time=float(t[k + 1]))
    return Trajectory(t=t, x=xs, u=us)


# --- Checks ---

@dataclass(frozen=True)
class DeviationReport:
    max_deviation: float
    max_control_gap: float
    worst_initial: Tuple[float, ...]
    num_samples: int
    # sup over both closed loops and t <= tau of |x(t) - x0|
    max_excursion: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {'max_deviation': self.max_deviation, 'max_control_gap': self.max_control_gap,
                'max_excursion': self.max_excursion, 'worst_initial': list(self.worst_initial),
                'num_samples': self.num_samples}


def deviation_check(sys: ControlSystem, psi: Controller, upsilon: Controller, tau: float,
                    init_samples: np.ndarray, dt: Optional[float] = None) -> DeviationReport:
    """Max sup-norm gap at tau between the closed loops under psi and upsilon."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    dt = dt or tau / 100
    worst, worst_x0, control_gap, excursion = 0.0, None, 0.0, 0.0
    for x0 in np.atleast_2d(init_samples):
        a = simulate(sys, psi, x0, tau, dt)
        b = simulate(sys, upsilon, x0, tau, dt)
        gap = float(np.max(np.abs(a.final_state - b.final_state)))
        control_gap = max(control_gap, float(np.max(np.abs(a.u - b.u))))
        excursion = max(excursion, float(np.max(np.abs(a.x - x0))), float(np.max(np.abs(b.x - x0))))
        if worst_x0 is None or gap > worst:
            worst, worst_x0 = gap, x0
    return DeviationReport(max_deviation=worst, max_control_gap=control_gap, max_excursion=excursion,
                           worst_initial=tuple(float(v) for v in worst_x0),
                           num_samples=len(np.atleast_2d(init_samples)))


@dataclass(frozen=True)
class InvarianceReport:
    verdict: bool
    edge_ok: bool
    interior_ok: bool
    worst_state: Tuple[float, ...]
    worst_margin: float
    num_edge: int
    num_interior: int

    def to_dict(self) -> Dict[str, Any]:
        return {'verdict': self.verdict, 'edge_ok': self.edge_ok, 'interior_ok': self.interior_ok,
                'worst_state': list(self.worst_state), 'worst_margin': self.worst_margin,
                'num_edge': self.num_edge, 'num_interior': self.num_interior}


def _edge_samples(domain: Box, delta: float, num_samples: int, seed: int) -> np.ndarray:
    """Points within delta of the boundary: Halton points with one coordinate pushed into a face band."""
    points = halton_points(domain, num_samples, seed=seed)
    rng = np.random.default_rng(seed)
    for k, p in enumerate(points):
        axis = k % domain.dim
        offset = rng.uniform(0.0, delta)
        p[axis] = domain.lower[axis] + offset if (k // domain.dim) % 2 == 0 else domain.upper[axis] - offset
    return points


def invariance_check(sys: ControlSystem, controller: Controller, domain: Box, delta: float, tau: float,
                     samples: int = 200, horizon_periods: int = 5, seed: int = 0,
                     dt: Optional[float] = None) -> InvarianceReport:
    """Samples edge and interior starts and checks delta,tau positive invariance of `domain`."""
    if not 0 < delta < domain.ext / 2:
        raise ValueError(f"delta must lie in (0, ext/2), got {delta}")
    dt = dt or tau / 100
    worst_margin, worst_state = math.inf, None

    edge_ok = True
    edge_starts = _edge_samples(domain, delta, samples, seed)
    for x0 in edge_starts:
        traj = simulate(sys, controller, x0, tau, dt)
        margin = float(domain.boundary_distance(traj.final_state)) - delta
        if margin < worst_margin:
            worst_margin, worst_state = margin, x0
        if margin <= 0:
            edge_ok = False

    interior_ok = True
    candidates = halton_points(domain, samples, seed=seed + 1)
    interior_starts = candidates[domain.boundary_distance(candidates) > delta]
    for x0 in interior_starts:
        traj = simulate(sys, controller, x0, horizon_periods * tau, dt)
        margin = float(np.min(domain.boundary_distance(traj.x))) - delta
        if margin < worst_margin:
            worst_margin, worst_state = margin, x0
        if margin <= 0:
            interior_ok = False

    verdict = edge_ok and interior_ok
    logger.info(f"Invariance check: edge_ok={edge_ok}, interior_ok={interior_ok}, worst margin {worst_margin:.4g}")
    return InvarianceReport(verdict=verdict, edge_ok=edge_ok, interior_ok=interior_ok,
                            worst_state=tuple(float(v) for v in worst_state), worst_margin=worst_margin,
                            num_edge=len(edge_starts), num_interior=len(interior_starts))
