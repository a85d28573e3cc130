"""q(x, t) from scattering data through the Hankel-operator trace formula.

With y = m - 1 solved in the half-line representation, q(x, t) = 2 d/dx y(s = 0), which splits into

    I1 = (1/pi) * integral of 2ik L / xi,   I2 = (1/pi) * integral of 2ik L y / xi,   I3 = -(1/pi) * integral of L dy/dx / xi

over the contour (contour path) or over the real line plus bound-state terms (real-line path). Both are evaluated
from the exponential-sum form of the symbol, so y is needed exactly at the quadrature nodes.
"""
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import msgspec
import numpy as np
import pandas as pd

from .common.exceptions import (BasisResolutionError, ContourConfigurationError, GridReconstructionError,
                                ImaginaryResidualExceeded, KdvIstError, SymbolEvaluationError)
from .common.serialization import json_serialization
from .contour import (DEFAULT_GROWTH_CAP, DEFAULT_N_RAY, DEFAULT_N_SIDE, DEFAULT_N_TOP, DEFAULT_POLE_RADIUS,
                      DEFAULT_RAY_CUTOFF, ContourSpec, ExponentialSum, Oscillation, admissible_height, build_contour,
                      contour_symbol, pole_symbol, real_line_nodes, real_line_symbol)
from .hankel import (ALPHA_FLOOR, DEFAULT_BASIS_SIZE, DEFAULT_S_MAX, MAX_BASIS_SIZE, REFINEMENT_TOL, hankel_matrix,
                     hankel_norm, refine_basis, required_basis_size, solve_dm_dx, solve_m)
from .potential import Potential
from .scattering import BoundState, L_analytic, ScatteringSlice, bound_states as find_bound_states

IMAG_TOLERANCE: float = 1e-3
CSV_FLOAT_FORMAT: str = '%.17g'
CSV_COLUMNS: tuple[str, ...] = ('x', 't', 'q', 'hankel_norm', 'min_eig', 'imag_residual')


@dataclass(frozen=True)
class ReconstructOptions:
    a: float | None = None
    ray_cutoff: float = DEFAULT_RAY_CUTOFF
    n_ray: int = DEFAULT_N_RAY
    n_side: int = DEFAULT_N_SIDE
    n_top: int = DEFAULT_N_TOP
    growth_cap: float = DEFAULT_GROWTH_CAP
    pole_radius: float = DEFAULT_POLE_RADIUS
    basis_size: int = DEFAULT_BASIS_SIZE
    s_max: float = DEFAULT_S_MAX
    alpha_floor: float = ALPHA_FLOOR
    # the basis doubles until ||H|| moves by less than refine_tol; None solves once at the starting size
    refine_tol: float | None = REFINEMENT_TOL
    max_basis_size: int = MAX_BASIS_SIZE
    imag_tol: float = IMAG_TOLERANCE
    # 'analytic' differentiates the Fredholm solve, 'numeric' takes a central difference in x
    derivative: str = 'analytic'
    fd_step: float = 1e-3
    strict: bool = False


@dataclass
class PointResult:
    x: float
    t: float
    q: float
    hankel_norm: float = 0.0
    min_eig: float = 1.0
    I1: complex = 0j
    I2: complex = 0j
    I3: complex = 0j
    imag_residual: float = 0.0
    basis_size: int = 0
    a: float = 0.0
    warnings: list[str] = field(default_factory=list)


def one_soliton(x: np.ndarray | float, t: float, kappa: float, c: float) -> np.ndarray | float:
    """Closed form for the data {(kappa, c)}, L = 0: -2 kappa^2 sech^2(kappa (x - 4 kappa^2 t) + log(c / 2kappa) / 2)."""
    phase = kappa * (np.asarray(x, dtype=float) - 4.0 * kappa ** 2 * t) + 0.5 * math.log(c / (2.0 * kappa))
    return -2.0 * kappa ** 2 / np.cosh(phase) ** 2


def _effective_basis(symbol: ExponentialSum, options: ReconstructOptions) -> int:
    needed = max(options.basis_size, required_basis_size(symbol, options.s_max))
    if needed > options.max_basis_size:
        raise BasisResolutionError(f'(x, t) = ({symbol.x}, {symbol.t}) needs {needed} basis functions, above the '
                                   f'cap {options.max_basis_size}; lower the ray cutoff or s_max')
    return needed


def _refined_system(symbol: ExponentialSum, options: ReconstructOptions, basis_size: int):
    def build(n: int):
        return hankel_matrix(symbol, n, options.s_max)

    if options.refine_tol is None:
        return build(basis_size)
    system, _ = refine_basis(build, basis_size, options.refine_tol, options.max_basis_size)
    return system


def _solve_point(symbol: ExponentialSum, options: ReconstructOptions, basis_size: int):
    system = hankel_matrix(symbol, basis_size, options.s_max)
    z, alpha = solve_m(system, options.alpha_floor)
    return system, z, alpha


def trace_formula(symbol: ExponentialSum, options: ReconstructOptions = ReconstructOptions()) -> PointResult:
    """q(x, t) = Re(I1 + I2 + I3) for the symbol at (symbol.x, symbol.t)."""
    x, t = symbol.x, symbol.t
    if symbol.is_zero:
        return PointResult(x=x, t=t, q=0.0)
    system = _refined_system(symbol, options, _effective_basis(symbol, options))
    z, alpha = solve_m(system, options.alpha_floor)
    basis_size = system.basis_size
    g = symbol.g
    dg = -2j * symbol.mu * g
    y = system.evaluate(z, symbol.mu)
    I1 = complex(-2.0 * np.sum(dg))
    I2 = complex(-2.0 * np.sum(dg * y))
    if options.derivative == 'numeric':
        # d/dx of -2 (Omega(0) + <Omega, y>), with I3 carrying the remainder
        h = options.fd_step
        forward = _boundary_trace(_shift(symbol, h), options, basis_size)
        backward = _boundary_trace(_shift(symbol, -h), options, basis_size)
        total = -2.0 * (forward - backward) / (2.0 * h)
        I3 = complex(total - I1 - I2)
    else:
        dsystem = hankel_matrix(symbol, basis_size, options.s_max, derivative=True)
        dz = solve_dm_dx(system, dsystem, z)
        I3 = complex(-2.0 * np.sum(g * system.evaluate(dz, symbol.mu)))
    total = I1 + I2 + I3
    result = PointResult(x=x, t=t, q=float(total.real), hankel_norm=hankel_norm(system), min_eig=alpha,
                         I1=I1, I2=I2, I3=I3, imag_residual=abs(total.imag), basis_size=system.basis_size,
                         warnings=list(system.warnings))
    if result.imag_residual > options.imag_tol:
        message = (f'|Im q| = {result.imag_residual:.3e} exceeds {options.imag_tol:g} at (x, t) = ({x}, {t}); '
                   f'the point is under-resolved')
        if options.strict:
            raise ImaginaryResidualExceeded(message)
        result.warnings.append(message)
    return result


def _shift(symbol: ExponentialSum, h: float) -> ExponentialSum:
    """The same symbol at x + h: every amplitude carries 1/xi(mu), so it scales by exp(-2 i mu h)."""
    return ExponentialSum(mu=symbol.mu, g=symbol.g * np.exp(-2j * symbol.mu * h), x=symbol.x + h, t=symbol.t)


def _boundary_trace(symbol: ExponentialSum, options: ReconstructOptions, basis_size: int) -> complex:
    system, z, _ = _solve_point(symbol, options, basis_size)
    return complex(np.sum(symbol.g) + np.sum(symbol.g * system.evaluate(z, symbol.mu)))


def reconstruct_point(slice_: ScatteringSlice,
                      contour: ContourSpec,
                      x: float,
                      t: float,
                      L_on_gamma: np.ndarray,
                      options: ReconstructOptions = ReconstructOptions()) -> PointResult:
    """Contour path: the symbol is L / xi on Gamma, which already carries the bound states as residues."""
    if t <= 0:
        raise SymbolEvaluationError(f'reconstruction is defined for t > 0, got t = {t}')
    if contour.a <= slice_.kappa_max:
        raise ContourConfigurationError(f'contour height {contour.a} is not above the pole i{slice_.kappa_max:.6g}')
    result = trace_formula(contour_symbol(contour, L_on_gamma, x, t), options)
    result.a = contour.a
    result.warnings = list(contour.warnings) + result.warnings
    return result


def reconstruct_from_data(bound_states_list: Sequence[BoundState],
                          x: float,
                          t: float,
                          line: ContourSpec | None = None,
                          L_on_line: np.ndarray | None = None,
                          options: ReconstructOptions = ReconstructOptions()) -> PointResult:
    """Real-line path: bound-state terms c_n / xi(i kappa_n) plus the reflection part on the real nodes."""
    if line is None or L_on_line is None:
        symbol = pole_symbol(bound_states_list, x, t)
    else:
        symbol = real_line_symbol(line, L_on_line, bound_states_list, x, t)
    result = trace_formula(symbol, options)
    if line is not None:
        result.a = line.a
    return result


class Reconstructor:
    """Binds a truncated potential (or pure bound-state data) to contour and Hankel settings.

    The instance is self-contained and picklable, so worker processes receive it once and evaluate points
    independently.
    """

    def __init__(self,
                 q: Potential | None,
                 bound_states_list: Sequence[BoundState] | None = None,
                 options: ReconstructOptions = ReconstructOptions()):
        self.q = q
        if bound_states_list is None:
            bound_states_list = find_bound_states(q) if q is not None else []
        self.bound_states = tuple(bound_states_list)
        self.options = options
        self.kappa_max = max((bs.kappa for bs in self.bound_states), default=0.0)

    @classmethod
    def from_slice(cls, q: Potential, slice_: ScatteringSlice,
                   options: ReconstructOptions = ReconstructOptions()) -> 'Reconstructor':
        if slice_.source_potential_hash != q.digest:
            raise KdvIstError('scattering slice was computed for a different potential')
        return cls(q, slice_.bound_states, options)

    def L(self, lam: np.ndarray, bound_states_list=None) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        if self.q is None or self.q.is_zero:
            return np.zeros(lam.shape, dtype=complex)
        return L_analytic(self.q, lam, bound_states_list, exclusion_radius=self.options.pole_radius)

    def height(self, x: float, t: float) -> tuple[float, list[str]]:
        if self.options.a is not None:
            return self.options.a, []
        return admissible_height(self.kappa_max, t, x, self.options.growth_cap, self.options.pole_radius)

    def oscillation(self, x: float, t: float) -> Oscillation:
        return Oscillation(t=t, x_abs=abs(x), sigma_max=2.0 * self.options.s_max)

    def contour_for(self, x: float, t: float) -> ContourSpec:
        a, warnings = self.height(x, t)
        o = self.options
        return build_contour(a, o.ray_cutoff, o.n_ray, o.n_side, o.n_top, kappa_max=self.kappa_max,
                             oscillation=self.oscillation(x, t), warnings=tuple(warnings))

    def line_for(self, x: float, t: float) -> ContourSpec:
        a, _ = self.height(x, t)
        o = self.options
        return real_line_nodes(a, o.ray_cutoff, o.n_ray, o.n_top, oscillation=self.oscillation(x, t))

    def contour_point(self, x: float, t: float) -> PointResult:
        if self.q is None:
            raise ContourConfigurationError('the contour path needs L in the upper half-plane; '
                                            'pure bound-state data only has the real-line path')
        contour = self.contour_for(x, t)
        slice_stub = ScatteringSlice(k_grid=np.empty(0), T=np.empty(0), R=np.empty(0), L=np.empty(0),
                                     bound_states=self.bound_states, source_potential_hash=self.q.digest,
                                     support_edge=self.q.support_edge)
        return reconstruct_point(slice_stub, contour, x, t, self.L(contour.nodes, self.bound_states), self.options)

    def line_point(self, x: float, t: float) -> PointResult:
        if self.q is None or self.q.is_zero:
            return reconstruct_from_data(self.bound_states, x, t, options=self.options)
        line = self.line_for(x, t)
        return reconstruct_from_data(self.bound_states, x, t, line, self.L(line.nodes), self.options)

    def point(self, x: float, t: float, path: str = 'contour') -> PointResult:
        match path:
            case 'contour':
                return self.contour_point(x, t)
            case 'proposition':
                return self.line_point(x, t)
            case _:
                raise ValueError(f'unknown reconstruction path {path!r}')

    def grid(self,
             x_grid: np.ndarray,
             t_list: np.ndarray,
             path: str = 'contour',
             progress: Callable[[int], None] | None = None) -> 'ReconstructionField':
        """Serial evaluation over the grid; the pipeline's worker pool calls `point` directly instead."""
        results: dict[tuple[int, int], PointResult] = {}
        failures: list[tuple[float, float, str]] = []
        for j, t in enumerate(t_list):
            for i, x in enumerate(x_grid):
                try:
                    results[(i, j)] = self.point(float(x), float(t), path)
                except KdvIstError as e:
                    failures.append((float(x), float(t), f'{type(e).__name__}: {e}'))
                if progress is not None:
                    progress(1)
        if failures:
            raise GridReconstructionError(failures)
        return ReconstructionField.from_points(np.asarray(x_grid, dtype=float), np.asarray(t_list, dtype=float),
                                               results, path)


def reconstruct_grid(reconstructor: Reconstructor,
                     x_grid: np.ndarray,
                     t_list: np.ndarray,
                     path: str = 'contour') -> 'ReconstructionField':
    return reconstructor.grid(x_grid, t_list, path)


def reconstruct_proposition(q_b: Potential, x: float, t: float,
                            options: ReconstructOptions = ReconstructOptions(),
                            bound_states_list: Sequence[BoundState] | None = None) -> float:
    """q_b(x, t) through the real-line symbol of the truncated datum."""
    return Reconstructor(q_b, bound_states_list, options).line_point(x, t).q


class ReconstructionFieldFile(msgspec.Struct, forbid_unknown_fields=True):
    path: str
    x_grid: list[float]
    t_list: list[float]
    values: list[list[float]]
    hankel_norm: list[list[float]]
    min_eig: list[list[float]]
    imag_residual: list[list[float]]
    I1: list[list[list[float]]]
    I2: list[list[list[float]]]
    I3: list[list[list[float]]]
    basis_size: list[list[int]]
    a: list[list[float]]
    warnings: list[str] = []


def _pairs(values: np.ndarray) -> list[list[list[float]]]:
    return np.stack((values.real, values.imag), axis=-1).tolist()


@dataclass(eq=False)
class ReconstructionField:
    """q(x_i, t_j) with per-point diagnostics; every array is indexed [i, j]."""
    x_grid: np.ndarray
    t_list: np.ndarray
    values: np.ndarray
    hankel_norm: np.ndarray
    min_eig: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    imag_residual: np.ndarray
    basis_size: np.ndarray
    a: np.ndarray
    path: str = 'contour'
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def from_points(cls, x_grid: np.ndarray, t_list: np.ndarray,
                    results: dict[tuple[int, int], PointResult], path: str) -> 'ReconstructionField':
        shape = (x_grid.size, t_list.size)

        def collect(attribute: str, dtype) -> np.ndarray:
            out = np.zeros(shape, dtype=dtype)
            for (i, j), result in results.items():
                out[i, j] = getattr(result, attribute)
            return out

        warnings = [w for key in sorted(results) for w in results[key].warnings]
        return cls(x_grid=x_grid, t_list=t_list, values=collect('q', float),
                   hankel_norm=collect('hankel_norm', float), min_eig=collect('min_eig', float),
                   I1=collect('I1', complex), I2=collect('I2', complex), I3=collect('I3', complex),
                   imag_residual=collect('imag_residual', float), basis_size=collect('basis_size', int),
                   a=collect('a', float), path=path, warnings=warnings)

    def to_frame(self) -> pd.DataFrame:
        """One row per point, x fastest within each t block (gnuplot reads blocks separated by t)."""
        xx, tt = np.meshgrid(self.x_grid, self.t_list, indexing='ij')
        columns = {'x': xx, 't': tt, 'q': self.values, 'hankel_norm': self.hankel_norm,
                   'min_eig': self.min_eig, 'imag_residual': self.imag_residual}
        return pd.DataFrame({name: values.T.reshape(-1) for name, values in columns.items()},
                            columns=list(CSV_COLUMNS))

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')

    def to_file(self) -> ReconstructionFieldFile:
        return ReconstructionFieldFile(path=self.path, x_grid=self.x_grid.tolist(), t_list=self.t_list.tolist(),
                                       values=self.values.tolist(), hankel_norm=self.hankel_norm.tolist(),
                                       min_eig=self.min_eig.tolist(), imag_residual=self.imag_residual.tolist(),
                                       I1=_pairs(self.I1), I2=_pairs(self.I2), I3=_pairs(self.I3),
                                       basis_size=self.basis_size.tolist(), a=self.a.tolist(),
                                       warnings=list(self.warnings))

    def dumps(self) -> bytes:
        return json_serialization(self.to_file())

    @property
    def max_imag_residual(self) -> float:
        return float(np.max(self.imag_residual, initial=0.0))

    def tail_decay(self, fraction: float = 1 / 3) -> dict[float, float]:
        """Least-squares slope of log|q| over the rightmost `fraction` of the x grid, per time.

        Reported only; nothing is asserted about the rate.
        """
        n_tail = max(2, int(round(fraction * self.x_grid.size)))
        x_tail = self.x_grid[-n_tail:]
        rates = {}
        for j, t in enumerate(self.t_list):
            magnitude = np.abs(self.values[-n_tail:, j])
            keep = magnitude > 0
            if np.count_nonzero(keep) < 2:
                rates[float(t)] = float('nan')
                continue
            slope, _ = np.polyfit(x_tail[keep], np.log(magnitude[keep]), 1)
            rates[float(t)] = float(slope)
        return rates
