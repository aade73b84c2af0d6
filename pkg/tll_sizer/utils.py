# tll_sizer/utils.py
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .errors import ArtifactError

logger = logging.getLogger(__name__)

INT64_MAX = 2**63 - 1


# --- Boxes ---

@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower, upper] in R^d, measured in the sup-norm."""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if not lower or len(lower) != len(upper):
            raise ValueError(f"Box bounds must be non-empty and of equal length, got {lower} / {upper}")
        for lo, hi in zip(lower, upper):
            if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
                raise ValueError(f"Box requires finite lower < upper on every axis, got [{lo}, {hi}]")
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.array(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.array(self.upper, dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return self.upper_array - self.lower_array

    @property
    def ext(self) -> float:
        """Largest per-axis width."""
        return float(np.max(self.widths))

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower_array) and np.all(x <= self.upper_array))

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower_array, self.upper_array)

    def boundary_distance(self, x: np.ndarray) -> np.ndarray:
        """Sup-norm distance to the box boundary; negative outside the box."""
        x = np.asarray(x, dtype=float)
        gaps = np.minimum(x - self.lower_array, self.upper_array - x)
        return np.min(gaps, axis=-1)

    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*[(lo, hi) for lo, hi in zip(self.lower, self.upper)], indexing='ij')
        return np.stack([g.ravel() for g in grids], axis=-1)

    def to_dict(self) -> Dict[str, Any]:
        return {'lower': list(self.lower), 'upper': list(self.upper)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Box':
        return cls(tuple(data['lower']), tuple(data['upper']))


@dataclass(frozen=True)
class DomainBox(Box):
    """State box X together with the control dimension m it is paired with."""
    m: int = 1

    def __post_init__(self):
        super().__post_init__()
        if int(self.m) < 1:
            raise ValueError(f"Control dimension must be >= 1, got {self.m}")
        object.__setattr__(self, 'm', int(self.m))

    @property
    def n(self) -> int:
        return self.dim

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data['m'] = self.m
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DomainBox':
        return cls(tuple(data['lower']), tuple(data['upper']), int(data.get('m', 1)))


# --- Sampling ---

def halton_points(box: Box, num_samples: int, seed: int = 0) -> np.ndarray:
    """Seeded scrambled Halton points inside `box`, shape (num_samples, dim)."""
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    sampler = qmc.Halton(d=box.dim, scramble=True, seed=seed)
    unit = sampler.random(num_samples)
    return qmc.scale(unit, box.lower_array, box.upper_array)


def grid_points(box: Box, points_per_axis: int) -> np.ndarray:
    """Regular tensor grid including the box corners, shape (points_per_axis**dim, dim)."""
    if points_per_axis < 2:
        raise ValueError(f"points_per_axis must be >= 2, got {points_per_axis}")
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.stack([g.ravel() for g in mesh], axis=-1)


# --- Serialization ---

def dumps_canonical(data: Dict[str, Any]) -> str:
    """JSON text with sorted keys and shortest round-trip float repr."""
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str, data: Dict[str, Any]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dumps_canonical(data))
    logger.debug(f"Wrote {data.get('kind', 'json')} artifact to {path}")
    return path


def read_json(path: str, expected_kind: str = None) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ArtifactError(f"Artifact not found: {path}")
    except json.JSONDecodeError as e:
        raise ArtifactError(f"Artifact {path} is not valid JSON: {e}")
    if expected_kind is not None and data.get('kind') != expected_kind:
        raise ArtifactError(f"Artifact {path} has kind '{data.get('kind')}', expected '{expected_kind}'")
    return data


def write_csv(path: str, header: Sequence[str], rows: np.ndarray) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.savetxt(path, np.atleast_2d(rows), fmt='%.12g', delimiter=',',
               header=','.join(header), comments='')
    return path


def as_float_list(values: np.ndarray) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]
