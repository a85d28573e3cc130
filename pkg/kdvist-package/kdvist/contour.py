"""The deformed contour Gamma = (-K, -a) + [-a, -a + ia, a + ia, a] + (a, K) and the symbols built on it.

Every symbol used by the Hankel solver is carried as an exponential sum

    Omega(sigma) = sum_j g_j exp(i mu_j sigma),    Im mu_j >= 0,

the kernel of H(Phi) after the Fourier-Laplace map of H^2 onto L^2(0, inf). On the contour path the exponents are the
quadrature nodes of Gamma; on the real-line path they are real nodes plus one imaginary exponent per bound state.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .common.exceptions import ContourConfigurationError, SymbolEvaluationError
from .common.types import SegmentTag

PANEL_ORDER: int = 16
# largest phase change a 16 point panel has to resolve
PANEL_PHASE: float = 12.0
DEFAULT_RAY_CUTOFF: float = 10.0
DEFAULT_GROWTH_CAP: float = 12.0
DEFAULT_POLE_RADIUS: float = 0.05
DEFAULT_N_RAY: int = 256
DEFAULT_N_SIDE: int = 32
DEFAULT_N_TOP: int = 64
# ray nodes closer than this to a grid point count as a collision in the principal value sum
COLLISION_DISTANCE: float = 1e-12
MAX_EXPONENT: float = 700.0

SEGMENTS: tuple[SegmentTag, ...] = ('ray_left', 'rect_side_left', 'rect_top', 'rect_side_right', 'ray_right')


@dataclass(frozen=True)
class Oscillation:
    """Phase budget of the integrands the contour must resolve.

    The ray integrand exp(-i(8 k^3 t + 2 k x) + i k sigma) has phase speed at most 24 k^2 t + 2 |x| + sigma_max.
    """
    t: float
    x_abs: float = 0.0
    sigma_max: float = 80.0

    def ray_phase(self, k: np.ndarray) -> np.ndarray:
        return 8.0 * k ** 3 * self.t + (2.0 * self.x_abs + self.sigma_max) * k


@dataclass(frozen=True, eq=False)
class ContourSpec:
    a: float
    ray_cutoff: float
    nodes: np.ndarray
    weights: np.ndarray
    segment_tags: np.ndarray
    n_ray: int
    n_side: int
    n_top: int
    warnings: tuple[str, ...] = field(default=())

    @property
    def height(self) -> float:
        return self.a

    def segment(self, tag: SegmentTag) -> np.ndarray:
        return self.segment_tags == tag

    @property
    def on_rays(self) -> np.ndarray:
        return self.segment('ray_left') | self.segment('ray_right')

    @property
    def rectangle(self) -> 'ContourSpec':
        mask = ~self.on_rays
        return ContourSpec(a=self.a, ray_cutoff=self.a, nodes=self.nodes[mask], weights=self.weights[mask],
                           segment_tags=self.segment_tags[mask], n_ray=0, n_side=self.n_side, n_top=self.n_top)

    def integrate(self, values: np.ndarray) -> complex:
        return complex(np.sum(self.weights * values))

    def __len__(self) -> int:
        return self.nodes.size


def _panel_counts(n: int) -> list[int]:
    n_panels = max(1, math.ceil(n / PANEL_ORDER))
    base, extra = divmod(n, n_panels)
    return [base + (1 if i < extra else 0) for i in range(n_panels)]


def gauss_panels(breaks: np.ndarray, counts: list[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on consecutive intervals [breaks[i], breaks[i + 1]]."""
    breaks = np.asarray(breaks, dtype=float)
    n_panels = breaks.size - 1
    if counts is None:
        counts = [PANEL_ORDER] * n_panels
    nodes, weights = [], []
    for lo, hi, order in zip(breaks[:-1], breaks[1:], counts):
        if order <= 0:
            continue
        ref_nodes, ref_weights = leggauss(order)
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (ref_nodes + 1.0))
        weights.append(half * ref_weights)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _uniform_panels(lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    counts = _panel_counts(n)
    return gauss_panels(np.linspace(lo, hi, len(counts) + 1), counts)


def _graded_ray_breaks(a: float, K: float, oscillation: Oscillation) -> np.ndarray:
    """Panel edges on (a, K) equally spaced in the ray phase, so every panel carries at most PANEL_PHASE radians."""
    u_lo, u_hi = oscillation.ray_phase(np.array([a, K]))
    n_panels = max(1, math.ceil((u_hi - u_lo) / PANEL_PHASE))
    targets = np.linspace(u_lo, u_hi, n_panels + 1)
    table = np.linspace(a, K, 20 * n_panels + 2)
    breaks = np.interp(targets, oscillation.ray_phase(table), table)
    breaks[0], breaks[-1] = a, K
    return breaks


def resolution_counts(a: float, oscillation: Oscillation) -> tuple[int, int]:
    """(n_side, n_top) such that every rectangle panel stays within the phase budget."""
    t, x_abs, sigma_max = oscillation.t, oscillation.x_abs, oscillation.sigma_max
    side_rate = 48.0 * a * a * t + 2.0 * x_abs + sigma_max
    top_rate = 24.0 * a * a * t + 2.0 * x_abs + sigma_max
    n_side = PANEL_ORDER * max(1, math.ceil(a * side_rate / PANEL_PHASE))
    n_top = PANEL_ORDER * max(2, math.ceil(2.0 * a * top_rate / PANEL_PHASE))
    return n_side, n_top


def build_contour(a: float,
                  K: float = DEFAULT_RAY_CUTOFF,
                  n_ray: int = DEFAULT_N_RAY,
                  n_side: int = DEFAULT_N_SIDE,
                  n_top: int = DEFAULT_N_TOP,
                  kappa_max: float = 0.0,
                  oscillation: Oscillation | None = None,
                  warnings: tuple[str, ...] = ()) -> ContourSpec:
    """Composite Gauss-Legendre quadrature on Gamma, traversed left to right.

    Nodes are mirror symmetric: the node set is invariant under lambda -> -conj(lambda) and mirrored nodes carry
    conjugate weights, so real-symmetric integrands integrate to real values. `n_ray` counts the nodes of both rays
    together. With `oscillation` the ray panels are graded along the cubic phase and `n_ray`, `n_side`, `n_top` are
    raised to whatever that phase needs.
    """
    if a <= kappa_max:
        raise ContourConfigurationError(f'rectangle height a = {a} must exceed the largest kappa = {kappa_max}')
    if K <= a:
        raise ContourConfigurationError(f'ray cutoff K = {K} must exceed a = {a}')
    if n_ray < 2 or n_side < 1 or n_top < 2:
        raise ContourConfigurationError(f'need n_ray >= 2, n_side >= 1, n_top >= 2, got {n_ray}, {n_side}, {n_top}')

    if oscillation is not None:
        breaks = _graded_ray_breaks(a, K, oscillation)
        ray_u, ray_w = gauss_panels(breaks)
        if ray_u.size < n_ray // 2:
            ray_u, ray_w = _uniform_panels(a, K, n_ray // 2)
        side_needed, top_needed = resolution_counts(a, oscillation)
        n_side, n_top = max(n_side, side_needed), max(n_top, top_needed)
    else:
        ray_u, ray_w = _uniform_panels(a, K, n_ray // 2)
    # a symmetric top needs an even split about Re lambda = 0
    n_top += n_top % 2
    top_half_u, top_half_w = _uniform_panels(0.0, a, n_top // 2)
    side_v, side_w = _uniform_panels(0.0, a, n_side)

    # right half of the contour, in traversal order
    right_nodes = np.concatenate((top_half_u + 1j * a, a + 1j * side_v[::-1], ray_u))
    right_weights = np.concatenate((top_half_w.astype(complex), -1j * side_w[::-1], ray_w.astype(complex)))
    right_tags = np.array(['rect_top'] * top_half_u.size + ['rect_side_right'] * side_v.size
                          + ['ray_right'] * ray_u.size)
    mirror = {'rect_top': 'rect_top', 'rect_side_right': 'rect_side_left', 'ray_right': 'ray_left'}

    nodes = np.concatenate((-np.conj(right_nodes[::-1]), right_nodes))
    weights = np.concatenate((np.conj(right_weights[::-1]), right_weights))
    tags = np.concatenate((np.array([mirror[t] for t in right_tags[::-1]]), right_tags))
    return ContourSpec(a=float(a), ray_cutoff=float(K), nodes=nodes, weights=weights, segment_tags=tags,
                       n_ray=2 * ray_u.size, n_side=side_v.size, n_top=2 * top_half_u.size,
                       warnings=tuple(warnings))


def build_rectangle(a: float, n_side: int = DEFAULT_N_SIDE, n_top: int = DEFAULT_N_TOP) -> ContourSpec:
    """The polygon S_a = [-a, -a + ia, a + ia, a] on its own."""
    return build_contour(a, K=2.0 * a, n_ray=2, n_side=n_side, n_top=n_top).rectangle


def real_line_nodes(a: float,
                    K: float = DEFAULT_RAY_CUTOFF,
                    n_ray: int = DEFAULT_N_RAY,
                    n_middle: int = DEFAULT_N_TOP,
                    oscillation: Oscillation | None = None) -> ContourSpec:
    """Quadrature for (-K, K) sharing its ray nodes with `build_contour(a, K, n_ray, ...)`.

    The middle segment (-a, a) takes the place of the rectangle; its nodes are tagged 'rect_top' with zero height.
    """
    reference = build_contour(a, K, n_ray=n_ray, n_side=1, n_top=2, oscillation=oscillation)
    if oscillation is not None:
        n_middle = max(n_middle, resolution_counts(a, oscillation)[1])
    n_middle += n_middle % 2
    half_u, half_w = _uniform_panels(0.0, a, n_middle // 2)
    rays = reference.on_rays
    left = reference.segment('ray_left')
    nodes = np.concatenate((reference.nodes[left], -half_u[::-1], half_u, reference.nodes[reference.segment('ray_right')]))
    weights = np.concatenate((reference.weights[left], half_w[::-1], half_w,
                              reference.weights[reference.segment('ray_right')])).astype(complex)
    tags = np.concatenate((np.full(int(np.sum(left)), 'ray_left'), np.full(n_middle, 'rect_top'),
                           np.full(int(np.sum(left)), 'ray_right')))
    return ContourSpec(a=float(a), ray_cutoff=float(K), nodes=nodes.astype(complex), weights=weights,
                       segment_tags=tags, n_ray=int(np.sum(rays)), n_side=0, n_top=n_middle)


def growth_exponent(a: float, t: float, x: float) -> float:
    """log of the largest |1 / xi_{x,t}| on the rectangle of height a."""
    return 16.0 * t * a ** 3 + 2.0 * a * max(x, 0.0)


def admissible_height(kappa_max: float,
                      t: float,
                      x: float,
                      growth_cap: float = DEFAULT_GROWTH_CAP,
                      pole_radius: float = DEFAULT_POLE_RADIUS,
                      a_default: float | None = None) -> tuple[float, list[str]]:
    """Rectangle height for the point (x, t): the default kappa_max + 1 (or 1 without bound states), lowered
    while exp(16 t a^3 + 2 a x) exceeds exp(growth_cap), never below kappa_max + 2 * pole_radius."""
    if a_default is None:
        a_default = kappa_max + 1.0 if kappa_max > 0 else 1.0
    floor = kappa_max + 2.0 * pole_radius
    warnings: list[str] = []
    a = a_default
    if growth_exponent(a, t, x) > growth_cap:
        lo, hi = floor, a
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if growth_exponent(mid, t, x) > growth_cap:
                hi = mid
            else:
                lo = mid
        a = max(lo, floor)
        warnings.append(f'rectangle height lowered from {a_default:.4g} to {a:.4g} at (x, t) = ({x:.4g}, {t:.4g}) '
                        f'to keep 1/|xi| below exp({growth_cap:g})')
        if growth_exponent(a, t, x) > growth_cap:
            warnings.append(f'1/|xi| reaches exp({growth_exponent(a, t, x):.3g}) on the rectangle at '
                            f'(x, t) = ({x:.4g}, {t:.4g}); expect cancellation error')
    return a, warnings


def xi_inverse(lam: np.ndarray, x: float, t: float) -> np.ndarray:
    """1 / xi_{x,t}(lambda) = exp(-i (8 lambda^3 t + 2 lambda x))."""
    lam = np.asarray(lam, dtype=complex)
    exponent = -1j * (8.0 * lam ** 3 * t + 2.0 * lam * x)
    if np.any(exponent.real > MAX_EXPONENT):
        raise SymbolEvaluationError(f'1/xi overflows at (x, t) = ({x}, {t}); lower the rectangle height')
    return np.exp(exponent)


@dataclass(frozen=True, eq=False)
class ExponentialSum:
    """Omega(sigma) = sum_j g_j exp(i mu_j sigma) for a symbol at a fixed (x, t)."""
    mu: np.ndarray
    g: np.ndarray
    x: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=complex))
        g = np.atleast_1d(np.asarray(self.g, dtype=complex))
        if mu.shape != g.shape:
            raise SymbolEvaluationError(f'{mu.size} exponents but {g.size} amplitudes')
        if np.any(mu.imag < -1e-12):
            raise SymbolEvaluationError('exponents must lie in the closed upper half-plane')
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'g', g)

    def __call__(self, sigma: np.ndarray) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        return np.exp(1j * np.multiply.outer(sigma, self.mu)) @ self.g

    def __add__(self, other: 'ExponentialSum') -> 'ExponentialSum':
        return ExponentialSum(mu=np.concatenate((self.mu, other.mu)), g=np.concatenate((self.g, other.g)),
                              x=self.x, t=self.t)

    def dx(self) -> 'ExponentialSum':
        """x-derivative: every term carries 1/xi, and d/dx (1/xi(mu)) = -2i mu / xi(mu)."""
        return ExponentialSum(mu=self.mu, g=-2j * self.mu * self.g, x=self.x, t=self.t)

    def scaled(self, factor: complex) -> 'ExponentialSum':
        return ExponentialSum(mu=self.mu, g=factor * self.g, x=self.x, t=self.t)

    @property
    def max_frequency(self) -> float:
        return float(np.max(np.abs(self.mu.real), initial=0.0))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.g)

    @classmethod
    def empty(cls, x: float = 0.0, t: float = 0.0) -> 'ExponentialSum':
        return cls(mu=np.empty(0, dtype=complex), g=np.empty(0, dtype=complex), x=x, t=t)


def contour_symbol(contour: ContourSpec, L_on_gamma: np.ndarray, x: float, t: float) -> ExponentialSum:
    """Omega of Phi_{x,t}: g_j = w_j L(lambda_j) / (2 pi xi(lambda_j)), mu_j = lambda_j."""
    f = xi_inverse(contour.nodes, x, t) * np.asarray(L_on_gamma, dtype=complex)
    return ExponentialSum(mu=contour.nodes, g=contour.weights * f / (2.0 * np.pi), x=x, t=t)


def pole_symbol(bound_states, x: float, t: float) -> ExponentialSum:
    """Omega of the bound-state terms -i c_n / (xi(i kappa_n) (k - i kappa_n)): amplitude c_n / xi(i kappa_n)."""
    if not bound_states:
        return ExponentialSum.empty(x, t)
    kappa = np.array([bs.kappa for bs in bound_states], dtype=float)
    c = np.array([bs.c for bs in bound_states], dtype=float)
    exponent = 2.0 * kappa * x - 8.0 * kappa ** 3 * t
    if np.any(exponent > MAX_EXPONENT):
        raise SymbolEvaluationError(f'bound-state amplitude overflows at (x, t) = ({x}, {t})')
    return ExponentialSum(mu=1j * kappa, g=c * np.exp(exponent), x=x, t=t)


def real_line_symbol(nodes: ContourSpec,
                     L_on_line: np.ndarray,
                     bound_states,
                     x: float,
                     t: float,
                     include_poles: bool = True) -> ExponentialSum:
    """Omega of the real-line symbol: reflection part on (-K, K) plus, optionally, the bound-state poles."""
    reflection = contour_symbol(nodes, L_on_line, x, t)
    if not include_poles:
        return reflection
    return reflection + pole_symbol(bound_states, x, t)


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    k_grid: np.ndarray
    phi_values: np.ndarray
    dphi_dx_values: np.ndarray
    x: float
    t: float
    truncation_estimate: float = 0.0

    @property
    def symmetry_defect(self) -> float:
        """max |Phi(-k) - conj Phi(k)| relative to max |Phi|."""
        scale = max(float(np.max(np.abs(self.phi_values), initial=0.0)), 1e-300)
        return float(np.max(np.abs(self.phi_values[::-1] - np.conj(self.phi_values)), initial=0.0)) / scale


def _boundary_cauchy(contour: ContourSpec,
                     f_nodes: np.ndarray,
                     k_grid: np.ndarray,
                     f_on_grid: np.ndarray | None) -> np.ndarray:
    """(2 pi i)^-1 * integral over Gamma of f(lambda) / (lambda - (k - i0)) for real k."""
    k = np.asarray(k_grid, dtype=float)
    K = contour.ray_cutoff
    diff = contour.nodes[None, :] - k[:, None]
    on_ray = (np.abs(k) > contour.a) & (np.abs(k) < K)
    result = np.empty(k.size, dtype=complex)

    off = ~on_ray
    if np.any(off):
        result[off] = (1.0 / diff[off]) @ (contour.weights * f_nodes)
    if np.any(on_ray):
        if f_on_grid is None:
            raise SymbolEvaluationError('grid points lie on the rays: the principal value needs the density on the '
                                        'grid (pass L_on_grid)')
        f_k = np.asarray(f_on_grid, dtype=complex)[on_ray]
        d = diff[on_ray]
        numerator = f_nodes[None, :] - f_k[:, None]
        with np.errstate(divide='ignore', invalid='ignore'):
            terms = np.where(np.abs(d) > COLLISION_DISTANCE, numerator / d, 0.0)
        k_on = k[on_ray]
        pv = terms @ contour.weights + f_k * np.log((K - k_on) / (K + k_on))
        # Sokhotski: 1 / (s + i0) = PV 1/s - i pi delta(s)
        result[on_ray] = pv - 1j * np.pi * f_k
    return result / (2j * np.pi)


def symbol_phi(L_on_gamma: np.ndarray,
               contour: ContourSpec,
               x: float,
               t: float,
               k_grid: np.ndarray,
               L_on_grid: np.ndarray | None = None) -> SymbolGrid:
    """Phi_{x,t}(k) = -(2 pi i)^-1 * integral over Gamma of L / (xi (lambda - (k - i0))) and its x-derivative."""
    if t <= 0:
        raise SymbolEvaluationError(f'the contour symbol is defined for t > 0, got t = {t}')
    k = np.asarray(k_grid, dtype=float)
    f_nodes = xi_inverse(contour.nodes, x, t) * np.asarray(L_on_gamma, dtype=complex)
    f_grid = None
    if L_on_grid is not None:
        f_grid = xi_inverse(k, x, t) * np.asarray(L_on_grid, dtype=complex)
    phi = -_boundary_cauchy(contour, f_nodes, k, f_grid)
    dphi = -_boundary_cauchy(contour, -2j * contour.nodes * f_nodes, k,
                             None if f_grid is None else -2j * k * f_grid)
    K = contour.ray_cutoff
    ends = np.abs(contour.nodes.real) == np.max(np.abs(contour.nodes.real))
    edge = float(np.max(np.abs(f_nodes[ends]), initial=0.0))
    k_inside = float(np.max(np.abs(k), initial=0.0))
    estimate = edge * K / max(K - k_inside, 1e-12) / np.pi
    return SymbolGrid(k_grid=k, phi_values=phi, dphi_dx_values=dphi, x=x, t=t, truncation_estimate=estimate)


def cauchy_transform(f_on_rect: np.ndarray, rect: ContourSpec, k_grid: np.ndarray) -> np.ndarray:
    """F(k) = integral over S_a of f(lambda) / (lambda - k) for real k off the corners +-a."""
    k = np.asarray(k_grid, dtype=float)
    return (1.0 / (rect.nodes[None, :] - k[:, None])) @ (rect.weights * np.asarray(f_on_rect, dtype=complex))


def deformation_defect(L_on_gamma: np.ndarray,
                       contour: ContourSpec,
                       L_on_line: np.ndarray,
                       line: ContourSpec,
                       bound_states,
                       x: float,
                       t: float) -> tuple[complex, complex, float]:
    """(integral over Gamma, integral over R minus 2 pi i * sum of residues, relative gap) of L / xi.

    Gamma passes above the poles i kappa_n, whose residues are i c_n / xi(i kappa_n).
    """
    over_gamma = contour.integrate(xi_inverse(contour.nodes, x, t) * L_on_gamma)
    residues = sum(1j * bs.c * np.exp(2.0 * bs.kappa * x - 8.0 * bs.kappa ** 3 * t) for bs in bound_states)
    over_line = line.integrate(xi_inverse(line.nodes, x, t) * L_on_line) - 2j * np.pi * residues
    scale = max(abs(over_gamma), abs(over_line), 1e-300)
    return over_gamma, complex(over_line), abs(over_gamma - over_line) / scale
