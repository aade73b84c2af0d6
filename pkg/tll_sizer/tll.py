# tll_sizer/tll.py
"""Two-level lattice (min over groups of max over affine functions) realization
of a continuous piecewise-affine function, and its lowering to ReLU layers."""
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sparse

from .errors import InconsistentLatticeError, SizingOverflowError
from .sizing import ArchDescriptor
from .utils import INT64_MAX, as_float_list

logger = logging.getLogger(__name__)

DEDUP_TOL = 1e-12
GROUP_TOL = 1e-10
VERIFY_TOL = 1e-8
DEFAULT_VERIFY_SAMPLES = 10_000


@dataclass(frozen=True)
class AffinePiece:
    """One linear region: its vertices (V, n) and the map x -> weights @ x + bias into R^m."""
    vertices: np.ndarray
    weights: np.ndarray
    bias: np.ndarray

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights.T + self.bias


@dataclass(frozen=True)
class LatticeForm:
    """Scalar lattice form: min_j max_{i in groups[j]} (weights[i] @ x + biases[i])."""
    weights: np.ndarray
    biases: np.ndarray
    groups: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        num_fns = self.weights.shape[0]
        if num_fns < 1 or self.biases.shape != (num_fns,):
            raise ValueError("LatticeForm needs at least one affine function with matching biases")
        if not self.groups:
            raise ValueError("LatticeForm needs at least one selector group")
        for group in self.groups:
            if not group or any(i < 0 or i >= num_fns for i in group):
                raise ValueError(f"Selector group {group} is empty or out of range for N={num_fns}")
        # flattened members and group start offsets for reduceat
        object.__setattr__(self, '_members', np.array([i for g in self.groups for i in g], dtype=int))
        object.__setattr__(self, '_starts', np.cumsum([0] + [len(g) for g in self.groups[:-1]]))

    @property
    def num_linear_fns(self) -> int:
        return self.weights.shape[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """x: (P, n) -> (P,)."""
        values = x @ self.weights.T + self.biases
        group_max = np.maximum.reduceat(values[:, self._members], self._starts, axis=1)
        return group_max.min(axis=1)

    def scaled(self, factor: float) -> 'LatticeForm':
        return LatticeForm(self.weights * factor, self.biases * factor, self.groups)

    def to_dict(self) -> Dict[str, Any]:
        return {'weights': [as_float_list(row) for row in self.weights],
                'biases': as_float_list(self.biases),
                'groups': [sorted(g) for g in self.groups]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LatticeForm':
        return cls(np.array(data['weights'], dtype=float),
                   np.array(data['biases'], dtype=float),
                   tuple(tuple(int(i) for i in g) for g in data['groups']))


@dataclass(frozen=True)
class TLLNetwork:
    n: int
    m: int
    forms: Tuple[LatticeForm, ...]

    def __post_init__(self):
        if len(self.forms) != self.m:
            raise ValueError(f"TLLNetwork needs one lattice form per output, got {len(self.forms)} for m={self.m}")
        for form in self.forms:
            if form.weights.shape[1] != self.n:
                raise ValueError(f"Lattice form weights have {form.weights.shape[1]} columns, expected n={self.n}")

    @property
    def num_linear_fns(self) -> int:
        return max(f.num_linear_fns for f in self.forms)

    @property
    def num_selector_groups(self) -> int:
        return max(len(f.groups) for f in self.forms)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': 'tll_network', 'n': self.n, 'm': self.m,
                'forms': [f.to_dict() for f in self.forms]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TLLNetwork':
        forms = tuple(LatticeForm.from_dict(f) for f in data['forms'])
        return cls(int(data['n']), int(data['m']), forms)


def tll_eval(net: TLLNetwork, x: np.ndarray) -> np.ndarray:
    """Exact min-of-max evaluation; (n,) -> (m,) or (P, n) -> (P, m)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    points = np.atleast_2d(x)
    out = np.stack([form.evaluate(points) for form in net.forms], axis=1)
    return out[0] if single else out


# --- Construction from pieces ---

def _dedup_affine(coeffs: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Merge rows equal within tol; returns unique rows and the row -> unique index map."""
    unique: List[np.ndarray] = []
    index = np.empty(coeffs.shape[0], dtype=int)
    for row_idx, row in enumerate(coeffs):
        for u_idx, u in enumerate(unique):
            if np.max(np.abs(u - row)) <= tol:
                index[row_idx] = u_idx
                break
        else:
            index[row_idx] = len(unique)
            unique.append(row)
    return np.array(unique), index


def _prune_groups(groups: List[frozenset], corner_values: np.ndarray, tol: float) -> List[Tuple[int, ...]]:
    distinct = sorted(set(groups), key=lambda g: (len(g), sorted(g)))
    kept: List[frozenset] = []
    for group in distinct:
        if any(other <= group for other in kept):
            continue
        kept.append(group)

    pruned = []
    for group in kept:
        members = sorted(group)
        sub = corner_values[members]
        # dominates[a, b]: member b is >= member a on every corner
        dominates = np.all(sub[None, :, :] >= sub[:, None, :] - tol, axis=2)
        survivors = []
        for a, idx in enumerate(members):
            dropped = False
            for b in range(len(members)):
                if b == a or not dominates[a, b]:
                    continue
                if not dominates[b, a] or b < a:
                    dropped = True
                    break
            if not dropped:
                survivors.append(idx)
        pruned.append(tuple(survivors))
    return sorted(set(pruned))


def _lattice_form_for_output(pieces: Sequence[AffinePiece], out: int, corners: np.ndarray,
                             dedup_tol: float) -> LatticeForm:
    coeffs = np.array([np.concatenate([p.weights[out], [p.bias[out]]]) for p in pieces])
    unique, piece_fn = _dedup_affine(coeffs, dedup_tol)
    weights, biases = unique[:, :-1], unique[:, -1]

    groups = []
    for j, piece in enumerate(pieces):
        at_vertices = piece.vertices @ weights.T + biases
        own = at_vertices[:, piece_fn[j]]
        scale = 1.0 + np.max(np.abs(own))
        below = np.all(at_vertices <= own[:, None] + GROUP_TOL * scale, axis=0)
        groups.append(frozenset(np.flatnonzero(below).tolist()))

    corner_values = (corners @ weights.T + biases).T
    pruned = _prune_groups(groups, corner_values, GROUP_TOL)
    logger.debug(f"Output {out}: {len(pieces)} pieces, N={len(unique)}, "
                 f"{len(set(groups))} distinct groups, {len(pruned)} after pruning")
    return LatticeForm(weights, biases, tuple(pruned))


def _sample_in_pieces(pieces: Sequence[AffinePiece], num_samples: int,
                      rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    choice = rng.integers(0, len(pieces), size=num_samples)
    points = np.empty((num_samples, pieces[0].vertices.shape[1]))
    expected = np.empty((num_samples, pieces[0].bias.shape[0]))
    for k, j in enumerate(choice):
        piece = pieces[j]
        w = rng.dirichlet(np.ones(piece.vertices.shape[0]))
        points[k] = w @ piece.vertices
        expected[k] = piece.evaluate(points[k])
    return points, expected


def from_pieces(pieces: Sequence[AffinePiece], dedup_tol: float = DEDUP_TOL,
                verify_samples: int = DEFAULT_VERIFY_SAMPLES, seed: int = 0,
                tol: float = VERIFY_TOL) -> TLLNetwork:
    """Lattice form of a continuous PWA function given by its pieces on a convex box."""
    if not pieces:
        raise ValueError("from_pieces needs at least one piece")
    n = pieces[0].vertices.shape[1]
    m = pieces[0].bias.shape[0]
    all_vertices = np.vstack([p.vertices for p in pieces])
    lower, upper = all_vertices.min(axis=0), all_vertices.max(axis=0)
    mesh = np.meshgrid(*[(lo, hi) for lo, hi in zip(lower, upper)], indexing='ij')
    corners = np.stack([g.ravel() for g in mesh], axis=-1)

    forms = tuple(_lattice_form_for_output(pieces, out, corners, dedup_tol) for out in range(m))
    net = TLLNetwork(n=n, m=m, forms=forms)

    if verify_samples > 0:
        rng = np.random.default_rng(seed)
        points, expected = _sample_in_pieces(pieces, verify_samples, rng)
        gap = float(np.max(np.abs(tll_eval(net, points) - expected)))
        if gap > tol:
            raise InconsistentLatticeError(
                f"Lattice form deviates from the piecewise function by {gap:.3e} (> {tol:g}); "
                f"pieces are not a continuous PWA function on a convex domain")
        logger.info(f"Lattice form verified on {verify_samples} samples, max gap {gap:.3e}")
    return net


# --- ReLU lowering ---

@dataclass(frozen=True)
class ReluNetwork:
    """Layers (W, b); rectifier after every layer except the last."""
    layers: Tuple[Tuple[sparse.csr_matrix, np.ndarray], ...]

    def __post_init__(self):
        for k in range(1, len(self.layers)):
            if self.layers[k][0].shape[1] != self.layers[k - 1][0].shape[0]:
                raise ValueError(f"Layer {k} input size does not match layer {k - 1} output size")

    @property
    def n(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def m(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def widths(self) -> Tuple[int, ...]:
        return (self.n,) + tuple(W.shape[0] for W, _ in self.layers)

    @property
    def arch(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((W.shape[1], W.shape[0]) for W, _ in self.layers)

    def to_dict(self) -> Dict[str, Any]:
        layers = []
        for W, b in self.layers:
            W = sparse.csr_matrix(W)
            W.sort_indices()
            layers.append({'shape': list(W.shape), 'indptr': [int(v) for v in W.indptr],
                           'indices': [int(v) for v in W.indices], 'data': as_float_list(W.data),
                           'bias': as_float_list(b)})
        return {'kind': 'relu_network', 'widths': list(self.widths), 'layers': layers}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ReluNetwork':
        layers = []
        for layer in data['layers']:
            W = sparse.csr_matrix((np.array(layer['data'], dtype=float),
                                   np.array(layer['indices'], dtype=np.int64),
                                   np.array(layer['indptr'], dtype=np.int64)),
                                  shape=tuple(layer['shape']))
            layers.append((W, np.array(layer['bias'], dtype=float)))
        return cls(tuple(layers))


def relu_eval(net: ReluNetwork, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x).T
    for k, (W, b) in enumerate(net.layers):
        h = W @ h + b[:, None]
        if k < len(net.layers) - 1:
            h = np.maximum(h, 0.0)
    out = np.asarray(h).T
    return out[0] if single else out


def _stage_ops(channels: List[List[List[int]]], phase: str) -> Tuple[List[tuple], List[List[List[int]]]]:
    """One reduction stage over every output channel.

    channels[o] is a list of position lists; in the 'max' phase each list is a
    selector group, in the 'min' phase channels[o] holds a single list of group
    results. Returns the ops and the channels re-indexed into the new value vector.
    """
    ops: List[tuple] = []
    new_channels = []
    for lists in channels:
        new_lists = []
        for positions in lists:
            new_positions = []
            for k in range(0, len(positions) - 1, 2):
                new_positions.append(len(ops))
                ops.append((phase, positions[k], positions[k + 1]))
            if len(positions) % 2:
                new_positions.append(len(ops))
                ops.append(('pass', positions[-1]))
            new_lists.append(new_positions)
        new_channels.append(new_lists)
    return ops, new_channels


def _gadget_matrices(ops: List[tuple], num_inputs: int) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Hidden pre-activation matrix A (hidden x inputs) and read-out B (outputs x hidden)."""
    a_rows, a_cols, a_vals = [], [], []
    b_rows, b_cols, b_vals = [], [], []
    hidden = 0
    for out, op in enumerate(ops):
        if op[0] == 'pass':
            a = op[1]
            a_rows += [hidden, hidden + 1]
            a_cols += [a, a]
            a_vals += [1.0, -1.0]
            b_rows += [out, out]
            b_cols += [hidden, hidden + 1]
            b_vals += [1.0, -1.0]
            hidden += 2
            continue
        kind, a, b = op
        # relu(a+b), relu(-a-b), relu(a-b), relu(b-a)
        a_rows += [hidden] * 2 + [hidden + 1] * 2 + [hidden + 2] * 2 + [hidden + 3] * 2
        a_cols += [a, b] * 4
        a_vals += [1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0]
        sign = 0.5 if kind == 'max' else -0.5
        b_rows += [out] * 4
        b_cols += [hidden, hidden + 1, hidden + 2, hidden + 3]
        b_vals += [0.5, -0.5, sign, sign]
        hidden += 4
    A = sparse.csr_matrix((a_vals, (a_rows, a_cols)), shape=(hidden, num_inputs))
    B = sparse.csr_matrix((b_vals, (b_rows, b_cols)), shape=(len(ops), hidden))
    return A, B


def lower_to_relu(net: TLLNetwork) -> ReluNetwork:
    """Layered ReLU network computing the same function as `net`."""
    weights = np.vstack([f.weights for f in net.forms])
    biases = np.concatenate([f.biases for f in net.forms])
    offsets = np.cumsum([0] + [f.num_linear_fns for f in net.forms])
    channels = [[[int(offsets[o]) + i for i in g] for g in form.groups]
                for o, form in enumerate(net.forms)]
    num_values = weights.shape[0]

    stages: List[Tuple[sparse.csr_matrix, sparse.csr_matrix]] = []
    while any(len(g) > 1 for groups in channels for g in groups):
        ops, channels = _stage_ops(channels, 'max')
        stages.append(_gadget_matrices(ops, num_values))
        num_values = len(ops)
    channels = [[[g[0] for g in groups]] for groups in channels]
    while any(len(lists[0]) > 1 for lists in channels):
        ops, channels = _stage_ops(channels, 'min')
        stages.append(_gadget_matrices(ops, num_values))
        num_values = len(ops)

    finals = [lists[0][0] for lists in channels]
    select = sparse.csr_matrix((np.ones(net.m), (np.arange(net.m), finals)), shape=(net.m, num_values))

    if not stages:
        W = select @ weights
        b = select @ biases
        return ReluNetwork(((sparse.csr_matrix(W), np.asarray(b, dtype=float)),))

    layers = []
    A1, B_prev = stages[0]
    layers.append((sparse.csr_matrix(A1 @ weights), np.asarray(A1 @ biases, dtype=float)))
    for A, B in stages[1:]:
        W = sparse.csr_matrix(A @ B_prev)
        W.eliminate_zeros()
        layers.append((W, np.zeros(W.shape[0])))
        B_prev = B
    W_out = sparse.csr_matrix(select @ B_prev)
    layers.append((W_out, np.zeros(net.m)))
    relu = ReluNetwork(tuple(layers))
    logger.info(f"Lowered TLL (N={net.num_linear_fns}, M={net.num_selector_groups}) to ReLU widths {list(relu.widths)}")
    return relu


def _reduction_widths(group_sizes: Sequence[Counter]) -> List[int]:
    """Hidden widths of the lowering for per-output multisets {group size: count}."""
    widths = []
    channels = [Counter(c) for c in group_sizes]
    while any(size > 1 for c in channels for size in c):
        hidden = 0
        next_channels = []
        for c in channels:
            nxt = Counter()
            for size, count in c.items():
                hidden += count * (4 * (size // 2) + 2 * (size % 2))
                nxt[(size + 1) // 2] += count
            next_channels.append(nxt)
        widths.append(hidden)
        channels = next_channels
    group_counts = [sum(c.values()) for c in channels]
    while any(k > 1 for k in group_counts):
        hidden = sum(4 * (k // 2) + 2 * (k % 2) for k in group_counts)
        widths.append(hidden)
        group_counts = [(k + 1) // 2 for k in group_counts]
    return widths


def arch_of_bound(num_fns: int, n: int, m: int) -> ArchDescriptor:
    """Worst-case descriptor: N groups of N affine functions per output."""
    if num_fns < 1 or n < 1 or m < 1:
        raise ValueError(f"N, n and m must be >= 1, got N={num_fns}, n={n}, m={m}")
    hidden = _reduction_widths([Counter({num_fns: num_fns}) for _ in range(m)])
    widths = (n,) + tuple(hidden) + (m,)
    if any(w > INT64_MAX for w in widths):
        raise SizingOverflowError(f"ReLU layer width exceeds the 64-bit range for N={num_fns}")
    return ArchDescriptor(num_linear_fns=num_fns, num_selector_groups=num_fns,
                          relu_layer_widths=widths)


def lowering_widths(net: TLLNetwork) -> Tuple[int, ...]:
    """Layer widths lower_to_relu would produce for `net`, without building it."""
    hidden = _reduction_widths([Counter(len(g) for g in form.groups) for form in net.forms])
    return (net.n,) + tuple(hidden) + (net.m,)


def write_flat_weights(net: ReluNetwork, path: str) -> str:
    """Plain-text weights: one sparse matrix and bias vector per layer."""
    lines = ["# relu network flat weights",
             "# header: widths <n> <h_1> ... <m>",
             "# per layer: 'layer <k> <rows> <cols> <nnz>', nnz lines '<row> <col> <value>', 'bias <b_1> ... <b_rows>'",
             "widths " + " ".join(str(w) for w in net.widths)]
    for k, (W, b) in enumerate(net.layers):
        coo = sparse.coo_matrix(W)
        order = np.lexsort((coo.col, coo.row))
        lines.append(f"layer {k} {W.shape[0]} {W.shape[1]} {coo.nnz}")
        for idx in order:
            lines.append(f"{int(coo.row[idx])} {int(coo.col[idx])} {float(coo.data[idx])!r}")
        lines.append("bias " + " ".join(repr(float(v)) for v in b))
    with open(path, 'w', encoding='utf-8') as f:
        f.write("\n".join(lines) + "\n")
    return path
