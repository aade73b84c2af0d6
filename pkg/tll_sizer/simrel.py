# tll_sizer/simrel.py
"""Finite metric transition systems, delta-perturbation and the
abstract-disturbance simulation check."""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Set, Tuple

import numpy as np

from .dynamics import ControlSystem, Controller, simulate

logger = logging.getLogger(__name__)

Transition = Tuple[int, int, int]


@dataclass(frozen=True)
class FiniteTransitionSystem:
    """States are points of R^n under the sup-norm; transitions are (source, label, target) index triples."""
    states: np.ndarray
    labels: Tuple[str, ...]
    transitions: FrozenSet[Transition]

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        object.__setattr__(self, 'states', states)
        object.__setattr__(self, 'labels', tuple(self.labels))
        object.__setattr__(self, 'transitions', frozenset(tuple(int(v) for v in t) for t in self.transitions))
        if states.shape[0] < 1:
            raise ValueError("A transition system needs at least one state")
        for x, u, y in self.transitions:
            if not (0 <= x < self.num_states and 0 <= y < self.num_states and 0 <= u < len(self.labels)):
                raise ValueError(f"Transition {(x, u, y)} is out of range")

    @property
    def num_states(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def successors(self, x: int) -> List[Tuple[int, int]]:
        return sorted((u, y) for (s, u, y) in self.transitions if s == x)

    def distances_to(self, other: 'FiniteTransitionSystem') -> np.ndarray:
        """Sup-norm distance matrix, rows indexed by self, columns by other."""
        return np.max(np.abs(self.states[:, None, :] - other.states[None, :, :]), axis=2)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': 'transition_system',
                'states': [[float(v) for v in s] for s in self.states],
                'labels': list(self.labels),
                'transitions': [list(t) for t in sorted(self.transitions)]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FiniteTransitionSystem':
        return cls(np.array(data['states'], dtype=float), tuple(data['labels']),
                   frozenset(tuple(t) for t in data['transitions']))


@dataclass(frozen=True)
class SimRelation:
    pairs: FrozenSet[Tuple[int, int]]
    delta: float
    strict_labels: bool = False

    def verify(self, S: FiniteTransitionSystem, T: FiniteTransitionSystem) -> bool:
        """Direct re-check of closeness, totality and the perturbed transfer condition."""
        dist = S.distances_to(T)
        if any(dist[x, y] > self.delta for x, y in self.pairs):
            return False
        if {x for x, _ in self.pairs} != set(range(S.num_states)):
            return False
        perturbed = perturb(S, self.delta)
        for x, y in self.pairs:
            for u, x_next in perturbed.successors(x):
                if not any((x_next, y_next) in self.pairs
                           for v, y_next in T.successors(y)
                           if not self.strict_labels or T.labels[v] == S.labels[u]):
                    return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {'pairs': [list(p) for p in sorted(self.pairs)], 'delta': self.delta,
                'strict_labels': self.strict_labels}


@dataclass(frozen=True)
class Deletion:
    pair: Tuple[int, int]
    label: int
    target: int

    def to_dict(self) -> Dict[str, Any]:
        return {'pair': list(self.pair), 'label': self.label, 'unmatched_target': self.target}


@dataclass(frozen=True)
class SimulationResult:
    success: bool
    relation: Optional[SimRelation]
    counterexample: Optional[int]
    trace: Tuple[Deletion, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict[str, Any]:
        return {'success': self.success,
                'relation': self.relation.to_dict() if self.relation else None,
                'counterexample': self.counterexample,
                'trace': [d.to_dict() for d in self.trace]}


# --- Construction ---

def _nearest_grid_index(value: np.ndarray, lower: np.ndarray, pitch: float, counts: np.ndarray) -> np.ndarray:
    # exact halves round down, giving the lexicographically smallest neighbour
    k = np.ceil((value - lower) / pitch - 0.5)
    return np.clip(k, 0, counts - 1).astype(int)


def quantize_embedding(sys: ControlSystem, controller: Controller, tau: float, pitch: float,
                       dt: Optional[float] = None) -> FiniteTransitionSystem:
    """tau-sampled closed-loop jumps from grid states, snapped back onto the grid."""
    if not pitch > 0:
        raise ValueError(f"Grid pitch must be positive, got {pitch}")
    dt = dt or tau / 100
    lower = sys.domain.lower_array
    counts = np.floor(sys.domain.widths / pitch + 1e-9).astype(int) + 1
    axes = [lower[k] + pitch * np.arange(counts[k]) for k in range(sys.n)]
    states = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing='ij')], axis=-1)

    labels, transitions = [], set()
    for i, x in enumerate(states):
        end = simulate(sys, controller, x, tau, dt).final_state
        target = int(np.ravel_multi_index(tuple(_nearest_grid_index(end, lower, pitch, counts)), tuple(counts)))
        labels.append(f"u[{i}]")
        transitions.add((i, i, target))
    logger.info(f"Quantized embedding with {len(states)} states at pitch {pitch}")
    return FiniteTransitionSystem(states, tuple(labels), frozenset(transitions))


def perturb(S: FiniteTransitionSystem, delta: float) -> FiniteTransitionSystem:
    """Adds (x, u, x') whenever some (x, u, x'') has d(x'', x') <= delta."""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    dist = S.distances_to(S)
    transitions = set(S.transitions)
    for x, u, target in S.transitions:
        for other in np.flatnonzero(dist[target] <= delta):
            transitions.add((x, u, int(other)))
    return FiniteTransitionSystem(S.states, S.labels, frozenset(transitions))


# --- Decision procedure ---

def check_ad_sim(S: FiniteTransitionSystem, T: FiniteTransitionSystem, delta: float,
                 strict_labels: bool = False) -> SimulationResult:
    """Greatest abstract-disturbance simulation relation of S by T, or a counterexample."""
    if S.dim != T.dim:
        raise ValueError(f"State dimensions differ: {S.dim} vs {T.dim}")
    perturbed = perturb(S, delta)
    dist = S.distances_to(T)
    relation: Set[Tuple[int, int]] = {(int(x), int(y)) for x, y in zip(*np.nonzero(dist <= delta))}

    s_succ = {x: perturbed.successors(x) for x in range(S.num_states)}
    t_succ = {y: T.successors(y) for y in range(T.num_states)}

    def unmatched(x: int, y: int) -> Optional[Tuple[int, int]]:
        for u, x_next in s_succ[x]:
            matched = any((x_next, y_next) in relation
                          for v, y_next in t_succ[y]
                          if not strict_labels or T.labels[v] == S.labels[u])
            if not matched:
                return u, x_next
        return None

    trace: List[Deletion] = []
    changed = True
    while changed:
        changed = False
        for pair in sorted(relation):
            witness = unmatched(*pair)
            if witness is not None:
                relation.discard(pair)
                trace.append(Deletion(pair=pair, label=witness[0], target=witness[1]))
                changed = True

    partners = defaultdict(list)
    for x, y in relation:
        partners[x].append(y)
    missing = [x for x in range(S.num_states) if not partners[x]]
    logger.debug(f"Simulation check: {len(relation)} pairs kept, {len(trace)} deleted")
    if missing:
        return SimulationResult(success=False, relation=None, counterexample=missing[0], trace=tuple(trace))
    return SimulationResult(success=True,
                            relation=SimRelation(frozenset(relation), delta, strict_labels),
                            counterexample=None, trace=tuple(trace))
