# tll_sizer/cpwa.py
"""Grid CPWA approximation of a controller.

Each grid center carries a plateau (a shrunken sup-norm ball, radius rho*eta/2)
on which the approximation equals the controller value at that center. Between
plateaus the corner interpolation Gamma blends the surrounding plateau values.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidPitchError, OracleRangeWarning, OutOfDomainError, UnsupportedDimensionError
from .tll import AffinePiece
from .utils import Box, DomainBox, as_float_list, halton_points

logger = logging.getLogger(__name__)

DEFAULT_RHO = 0.5

Oracle = Callable[[np.ndarray], np.ndarray]


# --- Partition ---

@dataclass(frozen=True)
class Partition:
    domain: DomainBox
    eta: float
    rho: float
    counts: Tuple[int, ...]
    pitch: Tuple[float, ...]

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def num_centers(self) -> int:
        return int(np.prod(self.counts))

    @property
    def pitch_array(self) -> np.ndarray:
        return np.array(self.pitch, dtype=float)

    def center(self, index: Sequence[int]) -> np.ndarray:
        idx = np.asarray(index, dtype=float)
        return self.domain.lower_array + self.pitch_array * (idx + 0.5)

    @property
    def centers(self) -> np.ndarray:
        """Center coordinates, shape counts + (n,)."""
        axes = [lo + h * (np.arange(c) + 0.5) for lo, h, c in zip(self.domain.lower, self.pitch, self.counts)]
        mesh = np.meshgrid(*axes, indexing='ij')
        return np.stack(mesh, axis=-1)

    def neighbors(self, index: Sequence[int]) -> List[Tuple[int, ...]]:
        """Centers whose balls share a face of any dimension with the ball at `index`."""
        result = []
        for offset in np.ndindex(*([3] * self.n)):
            delta = np.array(offset) - 1
            if not delta.any():
                continue
            other = np.asarray(index) + delta
            if np.all(other >= 0) and np.all(other < np.array(self.counts)):
                result.append(tuple(int(v) for v in other))
        return result

    def cell_coordinates(self, x: np.ndarray) -> np.ndarray:
        """Coordinates in units of pitch with center i at integer i."""
        return (np.asarray(x, dtype=float) - self.domain.lower_array) / self.pitch_array - 0.5

    def to_points(self, s: np.ndarray) -> np.ndarray:
        return self.domain.lower_array + self.pitch_array * (np.asarray(s, dtype=float) + 0.5)


def make_partition(domain: DomainBox, eta: float, rho: float = DEFAULT_RHO) -> Partition:
    if not (eta > 0 and math.isfinite(eta)):
        raise InvalidPitchError(f"eta must be positive and finite, got {eta}")
    if eta > domain.ext:
        raise InvalidPitchError(f"eta={eta} exceeds ext(X)={domain.ext}")
    if not 0 < rho < 1:
        raise InvalidPitchError(f"rho must lie in (0, 1), got {rho}")

    counts, pitch = [], []
    for width in domain.widths:
        ratio = width / eta
        count = max(1, math.ceil(ratio - 1e-12 * ratio))
        counts.append(count)
        pitch.append(float(width / count))
    if any(h < eta * (1 - 1e-12) for h in pitch):
        logger.debug(f"Pitch shrunk from eta={eta} to {pitch} to tile the domain exactly")
    return Partition(domain=domain, eta=float(eta), rho=float(rho), counts=tuple(counts), pitch=tuple(pitch))


# --- Gap regions ---

@dataclass(frozen=True, order=True)
class GapIndex:
    center_index: Tuple[int, ...]
    iota: Tuple[int, ...]

    @property
    def dim(self) -> int:
        return sum(1 for v in self.iota if v != 0)


def _axis_options(s: float, count: int, r: float) -> List[Tuple[int, int]]:
    """All (center, iota) pairs along one axis whose interval contains s."""
    options = []
    for i in range(count):
        intervals = [(0, i - r, i + r)]
        intervals.append((+1, i + r, i + 0.5 if i == count - 1 else i + 1 - r))
        intervals.append((-1, i - 0.5 if i == 0 else i - 1 + r, i - r))
        for iota, lo, hi in intervals:
            if lo - 1e-12 <= s <= hi + 1e-12:
                options.append((i, iota))
    return options


def classify(partition: Partition, x: np.ndarray, clamp: bool = True) -> GapIndex:
    """Canonical (smallest lexicographic) gap index of the region containing x."""
    x = np.asarray(x, dtype=float)
    if not partition.domain.contains(x):
        if not clamp:
            raise OutOfDomainError(f"Point {x.tolist()} lies outside the domain box")
        x = partition.domain.clamp(x)
    s = partition.cell_coordinates(x)
    r = partition.rho / 2.0
    centers, iotas = [], []
    for k in range(partition.n):
        options = _axis_options(float(s[k]), partition.counts[k], r)
        center, iota = min(options)
        centers.append(center)
        iotas.append(iota)
    return GapIndex(tuple(centers), tuple(iotas))


# --- Corner interpolation ---

@dataclass(frozen=True)
class GammaFunction:
    """Corner values of the unit k-cube, array of shape (2,) * k."""
    corner_values: np.ndarray

    @property
    def dim(self) -> int:
        return self.corner_values.ndim


def _gamma_recursive(values: np.ndarray, x: np.ndarray) -> float:
    if x.size == 1:
        return float((1.0 - x[0]) * values[0] + x[0] * values[1])
    d = x - 0.5
    radius = float(np.max(np.abs(d)))
    average = float(np.mean(values))
    if radius == 0.0:
        return average
    j = int(np.argmax(np.abs(d)))
    side = 1 if d[j] > 0 else 0
    boundary = 0.5 + d * (0.5 / radius)
    lam = 1.0 - 2.0 * radius
    face = np.take(values, side, axis=j)
    return lam * average + (1.0 - lam) * _gamma_recursive(face, np.delete(boundary, j))


def gamma_eval(g: GammaFunction, x: np.ndarray) -> float:
    """Corner interpolation at x in [0,1]^k: radial blend of the cube average and the boundary face value."""
    if g.dim == 0:
        return float(g.corner_values)
    x = np.asarray(x, dtype=float).ravel()
    if x.size != g.dim:
        raise ValueError(f"Point has {x.size} coordinates, Gamma has dimension {g.dim}")
    return _gamma_recursive(np.asarray(g.corner_values, dtype=float), x)


def _corner_bits(k: int) -> np.ndarray:
    """bits[c, j] = coordinate j of corner c, corner order row-major over (2,)*k."""
    return np.array(list(np.ndindex(*([2] * k))), dtype=bool).reshape(2 ** k, k)


def gamma_eval_batch(corners: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Closed form of gamma_eval for many cubes.

    corners: (P, 2**k, m) corner values in row-major corner order; t: (P, k).
    """
    P, num_corners, m = corners.shape
    k = t.shape[1]
    if k == 0:
        return corners[:, 0, :]
    bits = _corner_bits(k)
    d = t - 0.5
    radii = np.abs(d)
    order = np.argsort(-radii, axis=1, kind='stable')
    sorted_radii = np.take_along_axis(radii, order, axis=1)
    sides = d > 0

    levels = np.concatenate([np.full((P, 1), 0.5), sorted_radii, np.zeros((P, 1))], axis=1)
    mask = np.ones((P, num_corners), dtype=bool)
    rows = np.arange(P)
    result = np.zeros((P, m))
    for level in range(1, k + 2):
        weight = 2.0 * (levels[:, level - 1] - levels[:, level])
        active = mask.sum(axis=1)
        face_mean = np.einsum('pc,pcm->pm', mask.astype(float), corners) / active[:, None]
        result += weight[:, None] * face_mean
        if level <= k:
            j = order[:, level - 1]
            mask &= bits[:, j].T == sides[rows, j][:, None]
    return result


# --- Grid CPWA ---

@dataclass(frozen=True)
class GridCPWA:
    partition: Partition
    values: np.ndarray
    control_box: Box
    clamp: bool = True
    clamped_count: int = field(default=0, compare=False)

    def __post_init__(self):
        expected = tuple(self.partition.counts) + (self.m,)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} does not match grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridCPWA values must be finite")

    @property
    def m(self) -> int:
        return self.partition.domain.m

    @property
    def n(self) -> int:
        return self.partition.n

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return cpwa_eval(self, x)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': 'grid_cpwa',
            'domain': self.partition.domain.to_dict(),
            'control_box': self.control_box.to_dict(),
            'eta': self.partition.eta,
            'rho': self.partition.rho,
            'counts': list(self.partition.counts),
            'pitch': list(self.partition.pitch),
            'values': as_float_list(self.values),
            'clamp': self.clamp,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GridCPWA':
        domain = DomainBox.from_dict(data['domain'])
        partition = Partition(domain=domain, eta=float(data['eta']), rho=float(data['rho']),
                              counts=tuple(int(c) for c in data['counts']),
                              pitch=tuple(float(h) for h in data['pitch']))
        values = np.array(data['values'], dtype=float).reshape(tuple(partition.counts) + (domain.m,))
        return cls(partition=partition, values=values, control_box=Box.from_dict(data['control_box']),
                   clamp=bool(data.get('clamp', True)))


def build_grid_cpwa(oracle: Oracle, partition: Partition, control_box: Box, clamp: bool = True) -> GridCPWA:
    """Samples the oracle at every center; values outside the control box are clamped and reported."""
    m = partition.domain.m
    if control_box.dim != m:
        raise ValueError(f"Control box has dimension {control_box.dim}, expected m={m}")
    values = np.empty(tuple(partition.counts) + (m,))
    clamped = 0
    for index in np.ndindex(*partition.counts):
        raw = np.atleast_1d(np.asarray(oracle(partition.center(index)), dtype=float))
        if raw.shape != (m,) or not np.all(np.isfinite(raw)):
            raise ValueError(f"Oracle returned {raw} at center {index}, expected {m} finite values")
        inside = control_box.clamp(raw)
        if not np.array_equal(inside, raw):
            clamped += 1
            logger.warning(f"Oracle value {raw.tolist()} at center {index} outside U, clamped")
        values[index] = inside
    if clamped:
        warnings.warn(f"{clamped} oracle samples fell outside the control box and were clamped",
                      OracleRangeWarning, stacklevel=2)
    logger.info(f"Sampled oracle on {partition.num_centers} centers (grid {list(partition.counts)})")
    return GridCPWA(partition=partition, values=values, control_box=control_box, clamp=clamp,
                    clamped_count=clamped)


def _local_cube(partition: Partition, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower/upper surrounding center indices and the local cube coordinate t in [0,1]^n."""
    counts = np.array(partition.counts)
    s = np.clip(partition.cell_coordinates(points), 0.0, counts - 1)
    lower = np.minimum(np.floor(s), np.maximum(counts - 2, 0)).astype(int)
    frac = s - lower
    r = partition.rho / 2.0
    t = np.clip((frac - r) / (1.0 - 2.0 * r), 0.0, 1.0)
    upper = np.minimum(lower + 1, counts - 1)
    return lower, upper, t


def cpwa_eval(c: GridCPWA, x: np.ndarray) -> np.ndarray:
    """Evaluates the grid CPWA; (n,) -> (m,) or (P, n) -> (P, m)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    points = np.atleast_2d(x)
    domain = c.partition.domain
    outside = np.any((points < domain.lower_array) | (points > domain.upper_array), axis=1)
    if outside.any():
        if not c.clamp:
            raise OutOfDomainError(f"{int(outside.sum())} points lie outside the domain box")
        points = np.clip(points, domain.lower_array, domain.upper_array)

    lower, upper, t = _local_cube(c.partition, points)
    bits = _corner_bits(c.n)
    corner_values = np.empty((points.shape[0], bits.shape[0], c.m))
    for corner, pattern in enumerate(bits):
        idx = np.where(pattern, upper, lower)
        corner_values[:, corner, :] = c.values[tuple(idx.T)]
    out = gamma_eval_batch(corner_values, t)
    return out[0] if single else out


# --- Pieces ---

def _axis_segments(count: int, r: float) -> List[Tuple[str, float, float]]:
    """Plateau ('P') and gap ('G') segments of one axis in cell coordinates."""
    if count == 1:
        return [('P', -0.5, 0.5)]
    segments = [('P', -0.5, r)]
    for i in range(count - 1):
        segments.append(('G', i + r, i + 1 - r))
        hi = count - 0.5 if i + 1 == count - 1 else i + 1 + r
        segments.append(('P', i + 1 - r, hi))
    return segments


def _fit_affine(c: GridCPWA, vertices: np.ndarray) -> AffinePiece:
    values = cpwa_eval(c, vertices)
    design = np.hstack([vertices, np.ones((vertices.shape[0], 1))])
    coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
    weights = coeffs[:-1].T
    bias = coeffs[-1]
    centroid = vertices.mean(axis=0)
    gap = float(np.max(np.abs(centroid @ weights.T + bias - cpwa_eval(c, centroid))))
    if gap > 1e-9:
        raise ValueError(f"Piece with vertices {vertices.tolist()} is not affine (centroid gap {gap:.3e})")
    return AffinePiece(vertices=vertices, weights=weights, bias=bias)


def enumerate_pieces(c: GridCPWA) -> List[AffinePiece]:
    """Exact linear pieces of the grid CPWA for n <= 2."""
    if c.n > 2:
        raise UnsupportedDimensionError(f"Exact piece enumeration supports n <= 2, got n={c.n}")
    r = c.partition.rho / 2.0
    per_axis = [_axis_segments(count, r) for count in c.partition.counts]
    pieces: List[AffinePiece] = []

    if c.n == 1:
        for _, lo, hi in per_axis[0]:
            vertices = c.partition.to_points(np.array([[lo], [hi]]))
            pieces.append(_fit_affine(c, vertices))
        return pieces

    for kind0, lo0, hi0 in per_axis[0]:
        for kind1, lo1, hi1 in per_axis[1]:
            corners = np.array([[lo0, lo1], [hi0, lo1], [hi0, hi1], [lo0, hi1]])
            if kind0 == 'G' and kind1 == 'G':
                middle = corners.mean(axis=0)
                for e in range(4):
                    triangle = np.vstack([middle, corners[e], corners[(e + 1) % 4]])
                    pieces.append(_fit_affine(c, c.partition.to_points(triangle)))
            else:
                pieces.append(_fit_affine(c, c.partition.to_points(corners)))
    logger.debug(f"Enumerated {len(pieces)} linear pieces")
    return pieces


def sup_error(c: GridCPWA, oracle: Oracle, num_samples: int = 10_000, seed: int = 0,
              vectorized: bool = False) -> float:
    """Max sup-norm gap between the CPWA and the oracle over seeded Halton samples."""
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    points = halton_points(c.partition.domain, num_samples, seed=seed)
    approx = cpwa_eval(c, points)
    if vectorized:
        exact = np.asarray(oracle(points), dtype=float).reshape(approx.shape)
    else:
        exact = np.array([np.atleast_1d(oracle(p)) for p in points], dtype=float).reshape(approx.shape)
    return float(np.max(np.abs(approx - exact)))


def grid_distance_oracle(partition: Partition, slope: float, control_box: Optional[Box] = None) -> Oracle:
    """slope * sup-norm distance to the nearest center of `partition`.

    It is slope-Lipschitz and vanishes at every center, so its grid CPWA is
    identically zero and the sup error equals slope * max(pitch) / 2.
    """
    if not slope > 0:
        raise ValueError(f"slope must be positive, got {slope}")
    counts = np.array(partition.counts)
    m = partition.domain.m

    def oracle(x: np.ndarray) -> np.ndarray:
        s = partition.cell_coordinates(x)
        nearest = np.clip(np.round(s), 0, counts - 1)
        value = slope * float(np.max(np.abs(s - nearest) * partition.pitch_array))
        out = np.full(m, value)
        return control_box.clamp(out) if control_box is not None else out

    return oracle
