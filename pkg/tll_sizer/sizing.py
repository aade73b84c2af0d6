# tll_sizer/sizing.py
"""Closed-form sizing chain: accuracy mu, sampling period tau, grid pitch eta,
region count N and the architecture descriptor derived from N."""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Optional, Tuple

from scipy.optimize import bisect

from .errors import ConfigError, NonFiniteError, SizingOverflowError
from .utils import INT64_MAX, DomainBox

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
MAX_BRACKET_DOUBLINGS = 200
INTEGER_SNAP_RTOL = 1e-9
ROUNDING_MODES = ('ceil', 'floor', 'round')


@dataclass(frozen=True)
class SystemBounds:
    """Lipschitz data of the plant plus the controller budget and robustness margin.

    Every constant must be strictly positive. A plant with K_x = 0 has the
    closed form mu* = sqrt(6 * K_cont * K_vf * delta / K_u); pass a tiny K_x
    (1e-12 shifts mu* by less than 1e-12 relative) to get it from solve_mu.
    """
    k_x: float
    k_u: float
    k_vf: float
    k_cont: float
    delta: Optional[float] = None

    def __post_init__(self):
        for name in ('k_x', 'k_u', 'k_vf', 'k_cont'):
            value = getattr(self, name)
            if value is None or not math.isfinite(value) or value <= 0:
                raise ValueError(f"SystemBounds.{name} must be positive and finite, got {value}")
        if self.delta is not None and (not math.isfinite(self.delta) or self.delta <= 0):
            raise ValueError(f"SystemBounds.delta must be positive and finite, got {self.delta}")

    @property
    def mu_scale(self) -> float:
        """6 * K_cont * K_vf, the denominator shared by tau and g(mu)."""
        return 6.0 * self.k_cont * self.k_vf

    def to_dict(self) -> Dict[str, Any]:
        return {'k_x': self.k_x, 'k_u': self.k_u, 'k_vf': self.k_vf,
                'k_cont': self.k_cont, 'delta': self.delta}


@dataclass(frozen=True)
class ArchDescriptor:
    num_linear_fns: int
    num_selector_groups: int
    relu_layer_widths: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {'num_linear_fns': self.num_linear_fns,
                'num_selector_groups': self.num_selector_groups,
                'relu_layer_widths': list(self.relu_layer_widths),
                'relu_depth': len(self.relu_layer_widths) - 1}


@dataclass(frozen=True)
class SizingReport:
    mu: float
    eta: float
    tau: float
    region_bound: int
    arch: ArchDescriptor
    ext: float
    n: int
    m: int
    bounds: SystemBounds
    mu_source: str = 'solved'
    rounding: str = 'ceil'
    g_at_mu: float = 0.0
    formulas: Dict[str, str] = field(default_factory=dict)

    @property
    def satisfies_margin(self) -> Optional[bool]:
        if self.bounds.delta is None:
            return None
        return self.g_at_mu < self.bounds.delta

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': 'sizing_report',
            'mu': self.mu,
            'mu_source': self.mu_source,
            'eta': self.eta,
            'tau': self.tau,
            'region_bound': self.region_bound,
            'rounding': self.rounding,
            'ext': self.ext,
            'n': self.n,
            'm': self.m,
            'g_at_mu': self.g_at_mu,
            'satisfies_margin': self.satisfies_margin,
            'bounds': self.bounds.to_dict(),
            'arch': self.arch.to_dict(),
            'formulas': dict(self.formulas),
        }


FORMULAS = {
    'mu': 'largest mu with K_u*mu^2/(6*K_cont*K_vf)*exp(K_x*mu/(6*K_cont*K_vf)) < delta (bisection)',
    'tau': 'mu/(6*K_cont*K_vf)',
    'eta': 'mu/(6*K_cont)',
    'region_bound': 'm*sum_k n!/(n-k)!*2^(2k-1)*(ext/eta)^n',
    'arch': 'worst case of N groups of N affine functions under the pairwise max/min lowering',
}


# --- Accuracy ---

def mu_inequality(mu: float, bounds: SystemBounds) -> float:
    """g(mu): the trajectory deviation bound accumulated over one sampling period."""
    ratio = mu / bounds.mu_scale
    try:
        return bounds.k_u * mu * ratio * math.exp(bounds.k_x * ratio)
    except OverflowError:
        return math.inf


def solve_mu(bounds: SystemBounds, rtol: float = DEFAULT_RTOL) -> float:
    """Largest admissible accuracy mu, returned one tolerance step below the root of g(mu) = delta."""
    if bounds.delta is None:
        raise ConfigError("solve_mu requires a robustness margin delta")
    delta = bounds.delta

    # g(mu) >= K_u * mu^2 / (6 K_cont K_vf), so the root lies at or below this point
    hi = math.sqrt(delta * bounds.mu_scale / bounds.k_u)
    for _ in range(MAX_BRACKET_DOUBLINGS):
        g_hi = mu_inequality(hi, bounds)
        if not math.isfinite(g_hi):
            raise NonFiniteError(f"g(mu) overflowed while bracketing at mu={hi}", cap=hi)
        if g_hi >= delta:
            break
        hi *= 2.0
    else:
        raise NonFiniteError(f"Could not bracket g(mu) = {delta} below mu={hi}", cap=hi)
    logger.debug(f"mu bracket [0, {hi}] for delta={delta}")

    root = bisect(lambda mu: mu_inequality(mu, bounds) - delta, 0.0, hi,
                  xtol=1e-300, rtol=rtol, maxiter=2000)
    mu = root * (1.0 - rtol)
    while mu_inequality(mu, bounds) >= delta:
        mu *= (1.0 - rtol)
    return mu


def derive_tau_eta(mu: float, bounds: SystemBounds) -> Tuple[float, float]:
    """Largest admissible sampling period and grid pitch for accuracy mu."""
    if mu < 0 or not math.isfinite(mu):
        raise ValueError(f"mu must be finite and non-negative, got {mu}")
    tau = mu / bounds.mu_scale
    eta = mu / (6.0 * bounds.k_cont)
    return tau, eta


# --- Region count ---

def region_factor(n: int) -> int:
    """sum_{k=1}^{n} n!/(n-k)! * 2^(2k-1), exact."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return sum(math.perm(n, k) * 2 ** (2 * k - 1) for k in range(1, n + 1))


def _round_fraction(value: Fraction, rounding: str) -> int:
    nearest = round(value)
    if nearest != 0 and abs(value - nearest) <= INTEGER_SNAP_RTOL * abs(value):
        return int(nearest)
    if rounding == 'ceil':
        return math.ceil(value)
    if rounding == 'floor':
        return math.floor(value)
    return int(nearest)


def region_bound(n: int, m: int, ext: float, eta: float, rounding: str = 'ceil') -> int:
    """Upper bound on the number of linear regions of the grid CPWA."""
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be >= 1, got n={n}, m={m}")
    if not (ext > 0 and math.isfinite(ext)):
        raise ValueError(f"ext must be positive and finite, got {ext}")
    if not (0 < eta <= ext):
        raise ValueError(f"eta must satisfy 0 < eta <= ext={ext}, got {eta}")
    if rounding not in ROUNDING_MODES:
        raise ValueError(f"Unknown rounding mode '{rounding}', expected one of {ROUNDING_MODES}")

    ratio = Fraction(ext) / Fraction(eta)
    if ratio ** n > INT64_MAX:
        raise SizingOverflowError(f"(ext/eta)^n exceeds the 64-bit range for n={n}, ext/eta={float(ratio)}")
    value = m * region_factor(n) * ratio ** n
    result = _round_fraction(value, rounding)
    if result > INT64_MAX:
        raise SizingOverflowError(f"Region bound {result} exceeds the 64-bit range")
    return result


def gronwall_bound(kappa: float, t: float, k_x: float, k_u: float) -> float:
    """Deviation bound K_u * kappa * t * exp(K_x * t) for a control discrepancy kappa."""
    if kappa < 0 or t < 0:
        raise ValueError(f"kappa and t must be non-negative, got kappa={kappa}, t={t}")
    return k_u * kappa * t * math.exp(k_x * t)


# --- Report ---

def size_report(bounds: SystemBounds, domain: DomainBox, mu_override: Optional[float] = None,
                rounding: str = 'ceil') -> SizingReport:
    """Runs the full sizing chain for a plant on `domain`."""
    from .tll import arch_of_bound

    if mu_override is not None:
        if not (mu_override > 0 and math.isfinite(mu_override)):
            raise ConfigError(f"mu override must be positive and finite, got {mu_override}")
        mu, mu_source = float(mu_override), 'override'
    else:
        mu, mu_source = solve_mu(bounds), 'solved'

    tau, eta = derive_tau_eta(mu, bounds)
    ext = domain.ext
    if eta > ext:
        logger.info(f"eta={eta} exceeds ext(X)={ext}; a single cell per axis suffices")
        eta_for_count = ext
    else:
        eta_for_count = eta
    n_regions = region_bound(domain.n, domain.m, ext, eta_for_count, rounding=rounding)
    arch = arch_of_bound(n_regions, domain.n, domain.m)
    g_at_mu = mu_inequality(mu, bounds)
    logger.info(f"Sizing: mu={mu:.6g} ({mu_source}), tau={tau:.6g}, eta={eta:.6g}, N={n_regions}")

    return SizingReport(mu=mu, eta=eta, tau=tau, region_bound=n_regions, arch=arch, ext=ext,
                        n=domain.n, m=domain.m, bounds=bounds, mu_source=mu_source,
                        rounding=rounding, g_at_mu=g_at_mu, formulas=dict(FORMULAS))
