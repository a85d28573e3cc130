"""Direct scattering for compactly supported sampled potentials.

Conventions: the right Faddeev function m_+ = exp(-ikx) psi_+ solves m'' + 2ik m' = q m with m = 1, m' = 0 for x >= b,
the left one m_- = exp(ikx) psi_- solves m'' - 2ik m' = q m with m = 1, m' = 0 for x <= 0. Each is integrated in the
direction in which its second homogeneous solution decays for Im k >= 0, so neither overflows in the upper half-plane.
"""
import math
from dataclasses import dataclass, field

import msgspec
import numpy as np
from scipy.integrate import simpson
from scipy.optimize import root_scalar

from .common.exceptions import (JostOverflow, JostStepFailure, NearSingularTransmission, PoleProximity,
                                RootFindingFailure, SymbolEvaluationError)
from .common.serialization import complex_to_pairs, json_deserialization, json_serialization, pairs_to_complex
from .common.types import Side
from .potential import Potential, distance_l1, norms

DEFAULT_K_MAX: float = 20.0
DEFAULT_K_STEP: float = 0.01
DEFAULT_K_GAP: float = 0.01
DEFAULT_POLE_EXCLUSION: float = 0.05
SINGULAR_W_THRESHOLD: float = 1e-10
# RK4 is stable on the imaginary axis up to 2*sqrt(2); keep a margin
RK4_STABILITY_LIMIT: float = 2.5
# exp(709) is the largest finite double
OVERFLOW_EXPONENT: float = 700.0


@dataclass(frozen=True, eq=False)
class JostSolution:
    k: complex
    side: Side
    x_grid: np.ndarray
    m_values: np.ndarray
    dm_values: np.ndarray

    @property
    def sup_norm(self) -> float:
        """sup |m| over the real line, exact for real k and an upper bound otherwise.

        m is 1 on the normalized side. On the far side of the window it is A + B exp(-+2ikx) with A and B read off
        the edge values, so the sup there is |A| + |B|.
        """
        inside = float(np.max(np.abs(self.m_values)))
        if self.k == 0:
            return max(1.0, inside)
        edge = 0 if self.side == 'right' else -1
        m, dm = complex(self.m_values[edge]), complex(self.dm_values[edge])
        sign = 1.0 if self.side == 'right' else -1.0
        outside = abs(m + sign * dm / (2j * self.k)) + abs(dm) / (2.0 * abs(self.k))
        return max(1.0, inside, outside)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Linear interpolation on the step nodes; 1 on the normalized side, NaN on the other side of the support."""
        x = np.asarray(x, dtype=float)
        left_fill, right_fill = (1.0, np.nan) if self.side == 'left' else (np.nan, 1.0)
        re = np.interp(x, self.x_grid, self.m_values.real, left=left_fill, right=right_fill)
        im = np.interp(x, self.x_grid, self.m_values.imag, left=0.0, right=0.0)
        return re + 1j * im


@dataclass(frozen=True)
class BoundState:
    kappa: float
    c: float


@dataclass(frozen=True, eq=False)
class ScatteringSlice:
    k_grid: np.ndarray
    T: np.ndarray
    R: np.ndarray
    L: np.ndarray
    bound_states: tuple[BoundState, ...]
    source_potential_hash: str
    support_edge: float
    unitarity_residual: float = 0.0
    wronskian_mismatch: float = 0.0
    flagged: tuple[int, ...] = field(default=())

    @property
    def kappa_max(self) -> float:
        return max((bs.kappa for bs in self.bound_states), default=0.0)

    def to_file(self) -> 'ScatteringSliceFile':
        return ScatteringSliceFile(k_grid=self.k_grid.tolist(),
                                   T=complex_to_pairs(self.T),
                                   R=complex_to_pairs(self.R),
                                   L=complex_to_pairs(self.L),
                                   bound_states=[BoundStateRecord(kappa=bs.kappa, c=bs.c) for bs in self.bound_states],
                                   source_potential_hash=self.source_potential_hash,
                                   support_edge=self.support_edge,
                                   unitarity_residual=self.unitarity_residual,
                                   wronskian_mismatch=self.wronskian_mismatch,
                                   flagged=list(self.flagged))

    def dumps(self) -> bytes:
        return json_serialization(self.to_file())

    @classmethod
    def from_file(cls, data: 'ScatteringSliceFile') -> 'ScatteringSlice':
        return cls(k_grid=np.asarray(data.k_grid, dtype=float),
                   T=pairs_to_complex(data.T),
                   R=pairs_to_complex(data.R),
                   L=pairs_to_complex(data.L),
                   bound_states=tuple(BoundState(kappa=r.kappa, c=r.c) for r in data.bound_states),
                   source_potential_hash=data.source_potential_hash,
                   support_edge=data.support_edge,
                   unitarity_residual=data.unitarity_residual,
                   wronskian_mismatch=data.wronskian_mismatch,
                   flagged=tuple(data.flagged))

    @classmethod
    def loads(cls, payload: bytes) -> 'ScatteringSlice':
        return cls.from_file(json_deserialization(payload, ScatteringSliceFile))


class BoundStateRecord(msgspec.Struct, forbid_unknown_fields=True):
    kappa: float
    c: float


class ScatteringSliceFile(msgspec.Struct, forbid_unknown_fields=True):
    k_grid: list[float]
    T: list[list[float]]
    R: list[list[float]]
    L: list[list[float]]
    bound_states: list[BoundStateRecord]
    source_potential_hash: str
    support_edge: float = 0.0
    unitarity_residual: float = 0.0
    wronskian_mismatch: float = 0.0
    flagged: list[int] = []


def momentum_grid(k_max: float = DEFAULT_K_MAX,
                  k_step: float = DEFAULT_K_STEP,
                  k_gap: float = DEFAULT_K_GAP) -> np.ndarray:
    """Symmetric real grid on gap <= |k| <= k_max, exactly mirror symmetric and free of k = 0."""
    if not 0 < k_gap < k_max or k_step <= 0:
        raise ValueError(f'need 0 < k_gap < k_max and k_step > 0, got {k_gap}, {k_max}, {k_step}')
    n_positive = int(math.floor((k_max - k_gap) / k_step + 1e-9)) + 1
    positive = k_gap + k_step * np.arange(n_positive)
    return np.concatenate((-positive[::-1], positive))


def _stage_potential(q: Potential, side: Side) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Potential values at the start, middle and end node of every two-node RK4 step."""
    n = q.support_index
    h = q.grid_step
    if side == 'right':
        start = np.arange(n, 0, -2)
        return q.left_limits[start], q.samples[start - 1], q.right_limits[start - 2], -2.0 * h
    start = np.arange(0, n, 2)
    return q.right_limits[start], q.samples[start + 1], q.left_limits[start + 2], 2.0 * h


def _integrate(q: Potential, k: np.ndarray, side: Side,
               record: bool = False) -> tuple[np.ndarray, np.ndarray, list[tuple[np.ndarray, np.ndarray]] | None]:
    """Classical RK4 for (m, m') vectorized over the momenta `k`."""
    k = np.asarray(k, dtype=complex)
    q_start, q_mid, q_end, step = _stage_potential(q, side)
    if q_start.size and float(np.max(np.abs(2.0 * k * step), initial=0.0)) > RK4_STABILITY_LIMIT:
        raise JostStepFailure(f'|2 k H| exceeds {RK4_STABILITY_LIMIT} for max |k| = {np.max(np.abs(k)):.4g}; '
                              f'reduce grid_step ({q.grid_step})')
    drift = (2j if side == 'right' else -2j) * k
    m = np.ones_like(k)
    dm = np.zeros_like(k)
    history = [(m, dm)] if record else None
    half = 0.5 * step
    sixth = step / 6.0
    for qs, qm, qe in zip(q_start, q_mid, q_end):
        k1m, k1p = dm, qs * m - drift * dm
        m2, p2 = m + half * k1m, dm + half * k1p
        k2m, k2p = p2, qm * m2 - drift * p2
        m3, p3 = m + half * k2m, dm + half * k2p
        k3m, k3p = p3, qm * m3 - drift * p3
        m4, p4 = m + step * k3m, dm + step * k3p
        k4m, k4p = p4, qe * m4 - drift * p4
        m = m + sixth * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        dm = dm + sixth * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if record:
            history.append((m, dm))
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(dm))):
        raise JostStepFailure(f'non-finite Faddeev function for side={side}')
    return m, dm, history


def jost_batch(q: Potential, k: np.ndarray, side: Side) -> tuple[np.ndarray, np.ndarray]:
    """(m, m') at the far end of the integration: x = 0 for the right side, x = b for the left side."""
    m, dm, _ = _integrate(q, np.atleast_1d(k), side)
    return m, dm


def jost_solve(q: Potential, k: complex, side: Side) -> JostSolution:
    """Faddeev-normalized Jost solution on the step nodes of [0, b]."""
    k = complex(k)
    if k.imag < 0:
        raise SymbolEvaluationError(f'Jost solutions are built for Im k >= 0, got k = {k}')
    if k == 0:
        raise JostStepFailure('k = 0 is a spectral singularity')
    _, _, history = _integrate(q, np.array([k]), side, record=True)
    m_values = np.array([m[0] for m, _ in history])
    dm_values = np.array([dm[0] for _, dm in history])
    x_grid = q.grid_step * np.arange(0, q.support_index + 1, 2, dtype=float)
    if side == 'right':
        m_values, dm_values = m_values[::-1], dm_values[::-1]
    return JostSolution(k=k, side=side, x_grid=x_grid, m_values=m_values, dm_values=dm_values)


def wronskian(q: Potential, k: np.ndarray) -> np.ndarray:
    """W(psi_-, psi_+)(k), evaluated at x = 0 where psi_- is the free wave."""
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    m0, dm0 = jost_batch(q, k, 'right')
    return 2j * k * m0 + dm0


def scattering_coefficients(q: Potential,
                            k_grid: np.ndarray,
                            bound_states_list: list[BoundState] | tuple[BoundState, ...] | None = None,
                            singular_threshold: float = SINGULAR_W_THRESHOLD) -> ScatteringSlice:
    """T, R, L on a symmetric real grid from Wronskians of the two Jost solutions.

    Grid points with |W| below `singular_threshold` are listed in `flagged`.
    """
    k = check_momentum_grid(k_grid)
    return slice_from_edges(q, k, jost_batch(q, k, 'right'), jost_batch(q, k, 'left'), bound_states_list,
                            singular_threshold)


def check_momentum_grid(k_grid: np.ndarray) -> np.ndarray:
    k = np.asarray(k_grid, dtype=float)
    if k.ndim != 1 or k.size == 0 or np.any(k == 0.0) or not np.allclose(k, -k[::-1], rtol=0, atol=1e-12):
        raise ValueError('k_grid must be a non-empty real grid symmetric about 0 and excluding 0')
    return k


def slice_from_edges(q: Potential,
                     k: np.ndarray,
                     right_edge: tuple[np.ndarray, np.ndarray],
                     left_edge: tuple[np.ndarray, np.ndarray],
                     bound_states_list: list[BoundState] | tuple[BoundState, ...] | None = None,
                     singular_threshold: float = SINGULAR_W_THRESHOLD) -> ScatteringSlice:
    """Assembles the slice from (m, m') of the right solution at 0 and of the left solution at b.

    The edge values may come from any number of `jost_batch` calls over pieces of the grid.
    """
    m0, dm0 = right_edge
    mb, dmb = left_edge
    b = q.support_edge
    w_right = 2j * k * m0 + dm0
    w_left = 2j * k * mb - dmb
    flagged = tuple(int(i) for i in np.flatnonzero(np.abs(w_right) < singular_threshold))
    with np.errstate(divide='ignore', invalid='ignore'):
        T = 2j * k / w_right
        R = -np.conj(dm0) / w_right
        L = np.exp(2j * k * b) * np.conj(dmb) / w_right
    good = np.ones(k.size, dtype=bool)
    good[list(flagged)] = False
    unitarity = 0.0
    mismatch = 0.0
    if np.any(good):
        unitarity = float(max(np.max(np.abs(np.abs(T[good]) ** 2 + np.abs(R[good]) ** 2 - 1.0)),
                              np.max(np.abs(np.abs(T[good]) ** 2 + np.abs(L[good]) ** 2 - 1.0))))
        mismatch = float(np.max(np.abs(w_right[good] - w_left[good]) / np.abs(w_right[good])))
    if bound_states_list is None:
        bound_states_list = bound_states(q)
    return ScatteringSlice(k_grid=k, T=T, R=R, L=L,
                           bound_states=tuple(bound_states_list),
                           source_potential_hash=q.digest,
                           support_edge=b,
                           unitarity_residual=unitarity,
                           wronskian_mismatch=mismatch,
                           flagged=flagged)


def _imaginary_axis_wronskian(q: Potential, kappa: np.ndarray) -> np.ndarray:
    # W(i kappa) is real for real q
    return wronskian(q, 1j * np.asarray(kappa, dtype=float)).real


def norming_constant(q: Potential, kappa: float) -> float:
    """c = ||psi_-(., i kappa)||_2^-2, with the exact exponential tails outside [0, b]."""
    b = q.support_edge
    if 2.0 * kappa * b > OVERFLOW_EXPONENT:
        raise JostOverflow(f'exp(2 kappa b) overflows for kappa = {kappa:.6g}, b = {b:.6g}')
    solution = jost_solve(q, 1j * kappa, 'left')
    psi = np.exp(kappa * solution.x_grid) * solution.m_values.real
    inside = float(simpson(psi ** 2, x=solution.x_grid)) if psi.size > 2 else 0.0
    total = 1.0 / (2.0 * kappa) + inside + psi[-1] ** 2 / (2.0 * kappa)
    return float(1.0 / total)


def bound_states(q: Potential,
                 kappa_min: float = 1e-4,
                 n_scan: int | None = None,
                 xtol: float = 1e-14,
                 degeneracy_tol: float = 1e-9) -> list[BoundState]:
    """Zeros i kappa_n of W(psi_-, psi_+) on the imaginary axis with their left norming constants.

    The scan stops at half the L1 norm plus a margin, which bounds every kappa_n.
    Returned in strictly decreasing kappa.
    """
    if q.is_zero:
        return []
    l1, _ = norms(q)
    kappa_cap = 0.5 * l1 + 0.5
    if n_scan is None:
        n_scan = max(400, int(kappa_cap / 0.002))
    kappas = np.linspace(kappa_min, kappa_cap, n_scan)
    values = _imaginary_axis_wronskian(q, kappas)

    def objective(kappa: float) -> float:
        return float(_imaginary_axis_wronskian(q, np.array([kappa]))[0])

    roots: list[float] = [float(kappas[i]) for i in np.flatnonzero(values == 0.0)]
    for i in np.flatnonzero(values[:-1] * values[1:] < 0.0):
        result = root_scalar(objective, bracket=(kappas[i], kappas[i + 1]), method='brentq', xtol=xtol)
        if not result.converged:
            raise RootFindingFailure(f'bound-state refinement failed in [{kappas[i]:.6g}, {kappas[i + 1]:.6g}]: '
                                     f'{result.flag}')
        roots.append(float(result.root))
    roots.sort(reverse=True)
    for upper, lower in zip(roots, roots[1:]):
        if upper - lower < degeneracy_tol:
            raise RootFindingFailure(f'nearly degenerate bound states kappa = {upper:.15g} and {lower:.15g}')
    return [BoundState(kappa=kappa, c=norming_constant(q, kappa)) for kappa in roots]


def _upper_branch_sqrt(z: complex) -> complex:
    k = complex(np.sqrt(complex(z)))
    return -k if k.imag < 0 else k


def weyl_m(q: Potential, z: complex, threshold: float = 1e-12) -> complex:
    """Titchmarsh-Weyl function m_+(z) = psi_+'(0) / psi_+(0), z = k^2 with Im k > 0."""
    k = _upper_branch_sqrt(z)
    if k == 0:
        raise PoleProximity('z = 0 is the edge of the continuous spectrum')
    m0, dm0 = jost_batch(q, np.array([k]), 'right')
    if abs(m0[0]) < threshold:
        raise PoleProximity(f'psi_+(0) = {abs(m0[0]):.3g} at z = {z}: z is near a Dirichlet eigenvalue')
    return complex(1j * k + dm0[0] / m0[0])


def check_pole_distance(lam: np.ndarray, bound_states_list, exclusion_radius: float) -> None:
    if not bound_states_list:
        return
    poles = 1j * np.array([bs.kappa for bs in bound_states_list])
    distance = np.min(np.abs(np.asarray(lam)[:, None] - poles[None, :]), axis=1)
    if np.any(distance < exclusion_radius):
        worst = int(np.argmin(distance))
        raise PoleProximity(f'lambda = {lam[worst]:.6g} lies within {exclusion_radius} of a pole of L; '
                            f'route the contour higher')


def L_analytic(q: Potential,
               lam: np.ndarray | complex,
               bound_states_list: list[BoundState] | tuple[BoundState, ...] | None = None,
               exclusion_radius: float = DEFAULT_POLE_EXCLUSION) -> np.ndarray:
    """Left reflection coefficient continued into Im lambda >= 0 through the Weyl-function form.

    L = (i lambda - m_+) / (i lambda + m_+) = -m'(0) / (2 i lambda m(0) + m'(0)). Pass `bound_states_list` to
    enforce the pole-exclusion radius.
    """
    scalar = np.ndim(lam) == 0
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if np.any(lam.imag < -1e-14):
        raise SymbolEvaluationError('L is continued into the upper half-plane only')
    check_pole_distance(lam, bound_states_list, exclusion_radius)
    m0, dm0 = jost_batch(q, lam, 'right')
    with np.errstate(divide='ignore', invalid='ignore'):
        values = -dm0 / (2j * lam * m0 + dm0)
    return values[0] if scalar else values


def _step_trapezoid(q: Potential, solution: JostSolution, weight: np.ndarray | complex = 1.0) -> complex:
    """Trapezoid rule for the integral of weight * q * m over the RK4 step panels.

    Each panel takes q(x_j+) at its left end and q(x_{j+2}-) at its right end, which keeps the rule second order
    across jumps sitting on step nodes.
    """
    step_nodes = np.arange(0, q.support_index + 1, 2)
    f = weight * solution.m_values
    ends = q.right_limits[step_nodes][:-1] * f[:-1] + q.left_limits[step_nodes][1:] * f[1:]
    return complex(0.5 * np.sum(np.diff(solution.x_grid) * ends))


def transmission_integral(q: Potential, k: float) -> complex:
    """1/T through 1 - (2ik)^-1 * integral of q m_+, a quadrature path independent of the Wronskian."""
    solution = jost_solve(q, k, 'right')
    return complex(1.0 - _step_trapezoid(q, solution) / (2j * k))


def reflection_integral(q: Potential, k: float) -> complex:
    """L / T through (2ik)^-1 * integral of exp(2ikx) q m_+."""
    solution = jost_solve(q, k, 'right')
    return complex(_step_trapezoid(q, solution, np.exp(2j * k * solution.x_grid)) / (2j * k))


def jost_bound_ok(q: Potential, k: float) -> tuple[float, float]:
    """(sup |m_+(k, .)|, exp(||q||_1 / |k|)) for real k != 0."""
    l1, _ = norms(q)
    return jost_solve(q, k, 'right').sup_norm, math.exp(l1 / abs(k))


def stability_condition(q_norm: float, a: float) -> float:
    """(Q / 2a) exp(Q / a); the uniform convergence estimate needs this below 1."""
    return q_norm / (2.0 * a) * math.exp(q_norm / a)


def stability_constant(q: Potential, q_tilde: Potential, a: float, k_grid: np.ndarray) -> tuple[float, float]:
    """(sup over |k| >= a of |k (L - L~)|, ||q - q~||_1) measured on `k_grid`."""
    k = np.asarray(k_grid, dtype=float)
    k = k[np.abs(k) >= a]
    L = L_analytic(q, k)
    L_tilde = L_analytic(q_tilde, k)
    sup = float(np.max(np.abs(k * (L - L_tilde)))) if k.size else 0.0
    return sup, distance_l1(q, q_tilde)


def require_regular(slice_: ScatteringSlice) -> None:
    if slice_.flagged:
        ks = ', '.join(f'{slice_.k_grid[i]:.6g}' for i in slice_.flagged[:5])
        raise NearSingularTransmission(f'{len(slice_.flagged)} near-singular grid point(s): {ks}')
