"""Residual checks for the identities and inequalities the reconstruction relies on.

Every check computes its two sides along separate code paths (scattering data against potential quadrature,
Wronskians against integral identities, full potential against its fragments), so a defect in either path moves the
residual.
"""
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

import msgspec
import numpy as np
from scipy.integrate import trapezoid

from .common.exceptions import KdvIstError, TailEstimateTooLarge, ValidationFailure
from .common.serialization import json_serialization
from .contour import build_rectangle, cauchy_transform, deformation_defect, real_line_symbol
from .hankel import hankel_matrix, hankel_norm, required_basis_size, resolvent_gap
from .potential import Potential, make_preset, norms, restrict, tail_norms, truncate
from .reconstruct import ReconstructOptions, Reconstructor
from .scattering import (L_analytic, ScatteringSlice, jost_bound_ok, momentum_grid, reflection_integral,
                         scattering_coefficients, stability_condition, transmission_integral, weyl_m)

ZF_TAIL_LIMIT: float = 0.05
RESIDUE_POINTS: int = 256
DENOMINATOR_FLOOR: float = 1e-6
PRESET_BATTERY: tuple[tuple[str, tuple[float, ...]], ...] = (
    ('zero', ()),
    ('square_well', (1.0, 2.0)),
    ('square_well', (0.3, 2.0)),
    ('exp_decay', (1.0, 1.0)),
    ('gaussian_bump', (-1.0, 4.0, 0.7)),
)


@dataclass(frozen=True)
class Tolerances:
    unitarity: float = 1e-6
    zf_trace: float = 1e-3
    layer_stripping: float = 1e-6
    truncation_band: float = 2.0
    residue: float = 1e-4
    hankel_norm: float = 1.0
    weyl: float = 1e-6
    transmission: float = 1e-3
    deformation: float = 1e-6
    cauchy_constant: float = 20.0


@dataclass
class Check:
    name: str
    lhs: complex | float
    rhs: complex | float
    residual: float
    tolerance: float
    passed: bool
    detail: str = ''

    @classmethod
    def at_most(cls, name: str, lhs, rhs, residual: float, tolerance: float, detail: str = '') -> 'Check':
        return cls(name=name, lhs=lhs, rhs=rhs, residual=float(residual), tolerance=float(tolerance),
                   passed=bool(residual <= tolerance), detail=detail)

    @classmethod
    def error(cls, name: str, exc: Exception) -> 'Check':
        return cls(name=name, lhs=math.nan, rhs=math.nan, residual=math.inf, tolerance=0.0, passed=False,
                   detail=f'{type(exc).__name__}: {exc}')


class CheckRecord(msgspec.Struct):
    name: str
    lhs: list[float]
    rhs: list[float]
    residual: float
    tolerance: float
    passed: bool
    detail: str = ''


class ValidationReportFile(msgspec.Struct):
    provenance: dict[str, str | float]
    checks: list[CheckRecord]
    passed: bool


def _pair(value) -> list[float]:
    value = complex(value)
    return [value.real, value.imag]


@dataclass
class ValidationReport:
    provenance: dict[str, str | float]
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [check for check in self.checks if not check.passed]

    def extend(self, checks: Check | Sequence[Check]):
        self.checks.extend([checks] if isinstance(checks, Check) else checks)

    def to_file(self) -> ValidationReportFile:
        # residuals can be inf for errored checks; JSON has no inf, so clamp to the largest double
        records = [CheckRecord(name=c.name, lhs=_pair(c.lhs), rhs=_pair(c.rhs),
                               residual=min(c.residual, np.finfo(float).max), tolerance=c.tolerance,
                               passed=c.passed, detail=c.detail) for c in self.checks]
        return ValidationReportFile(provenance=self.provenance, checks=records, passed=self.passed)

    def dumps(self) -> bytes:
        return json_serialization(self.to_file())

    def raise_on_failure(self):
        if not self.passed:
            names = ', '.join(check.name for check in self.failures)
            raise ValidationFailure(f'{len(self.failures)} check(s) failed: {names}')


def perturb_slice(slice_: ScatteringSlice, func: Callable[[np.ndarray], np.ndarray]) -> ScatteringSlice:
    """A copy of the slice with L replaced by func(L); only the scattering-data side of each check sees it."""
    return replace(slice_, L=np.asarray(func(slice_.L), dtype=complex))


def _regular(slice_: ScatteringSlice) -> np.ndarray:
    keep = np.ones(slice_.k_grid.size, dtype=bool)
    keep[list(slice_.flagged)] = False
    return keep


def check_unitarity(slice_: ScatteringSlice, tolerance: float = Tolerances.unitarity) -> Check:
    keep = _regular(slice_)
    T2 = np.abs(slice_.T[keep]) ** 2
    right = np.abs(T2 + np.abs(slice_.R[keep]) ** 2 - 1.0)
    left = np.abs(T2 + np.abs(slice_.L[keep]) ** 2 - 1.0)
    worst_right = int(np.argmax(right)) if right.size else 0
    worst_left = int(np.argmax(left)) if left.size else 0
    residual = float(max(np.max(right, initial=0.0), np.max(left, initial=0.0)))
    lhs = float(T2[worst_left] + np.abs(slice_.L[keep][worst_left]) ** 2) if left.size else 1.0
    return Check.at_most('unitarity', lhs, 1.0, residual, tolerance,
                         detail=f'max ||T|^2+|R|^2-1| = {np.max(right, initial=0.0):.3e} at index {worst_right}')


def _positive_half(slice_: ScatteringSlice) -> tuple[np.ndarray, np.ndarray]:
    keep = _regular(slice_) & (slice_.k_grid > 0)
    return slice_.k_grid[keep], slice_.L[keep]


def zf_scattering_side(slice_: ScatteringSlice) -> tuple[float, float]:
    """(16/3) sum kappa^3 + (8/pi) integral over k > 0 of k^2 log(1/(1 - |L|^2)), and the extrapolated tail.

    The tail beyond the grid assumes k^2 log(1/(1-|L|^2)) ~ A / k^2, with A fitted on the upper half of the grid.
    """
    k, L = _positive_half(slice_)
    density = k ** 2 * -np.log1p(-np.minimum(np.abs(L) ** 2, 1.0 - 1e-16))
    bulk = 8.0 / np.pi * float(trapezoid(density, x=k))
    K = float(k[-1]) if k.size else 0.0
    upper = k >= 0.5 * K
    tail = 0.0
    if np.count_nonzero(upper) > 1:
        A = float(trapezoid(density[upper], x=k[upper]) / trapezoid(k[upper] ** -2.0, x=k[upper]))
        tail = 8.0 / np.pi * A / K
    discrete = 16.0 / 3.0 * sum(bs.kappa ** 3 for bs in slice_.bound_states)
    return discrete + bulk + tail, tail


def check_zf_trace(q: Potential, slice_: ScatteringSlice, tolerance: float = Tolerances.zf_trace) -> Check:
    lhs, tail = zf_scattering_side(slice_)
    _, l2 = norms(q)
    rhs = l2 ** 2
    if lhs > 0 and tail / lhs > ZF_TAIL_LIMIT:
        raise TailEstimateTooLarge(f'extrapolated tail is {tail / lhs:.1%} of the trace; widen the momentum grid')
    scale = max(abs(rhs), abs(lhs))
    residual = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return Check.at_most('zf_trace', lhs, rhs, residual, tolerance, detail=f'tail estimate {tail:.3e}')


def _fragments(q: Potential, b: float, k_grid: np.ndarray, full: ScatteringSlice | None = None):
    if full is None:
        full = scattering_coefficients(q, k_grid, bound_states_list=[])
    elif not np.array_equal(full.k_grid, k_grid):
        raise ValidationFailure('layer stripping needs the full slice on the same momentum grid')
    left = scattering_coefficients(truncate(q, b), k_grid, bound_states_list=[])
    if b >= q.support_edge:
        return full, left, np.zeros_like(full.L)
    right = scattering_coefficients(restrict(q, b, q.b_max), k_grid, bound_states_list=[])
    return full, left, right.L


def check_layer_stripping(q: Potential, b: float, k_grid: np.ndarray | None = None,
                          tolerance: float = Tolerances.layer_stripping,
                          full: ScatteringSlice | None = None) -> list[Check]:
    """L = L_b + T_b^2 L_{>b} / (1 - R_b L_{>b}) with all three fragments referenced to x = 0, plus the pointwise
    bound |L - L_b| <= 2 |L_{>b}|. `full` supplies L on the left-hand side; the fragments are always recomputed."""
    k = (momentum_grid() if full is None else full.k_grid) if k_grid is None else np.asarray(k_grid, dtype=float)
    full, left, L_outer = _fragments(q, b, k, full)
    denominator = 1.0 - left.R * L_outer
    small = np.flatnonzero(np.abs(denominator) < DENOMINATOR_FLOOR)
    keep = np.abs(denominator) >= DENOMINATOR_FLOOR
    composed = left.L + left.T ** 2 * L_outer / np.where(keep, denominator, 1.0)
    error = np.abs(full.L - composed)[keep]
    worst = int(np.argmax(error)) if error.size else 0
    detail = f'{small.size} near-zero denominator(s) excluded' if small.size else ''
    identity = Check.at_most('layer_stripping', complex(full.L[keep][worst]) if error.size else 0j,
                             complex(composed[keep][worst]) if error.size else 0j,
                             float(np.max(error, initial=0.0)), tolerance, detail)
    excess = np.abs(full.L - left.L) - 2.0 * np.abs(L_outer)
    bound = Check.at_most('layer_stripping_bound', float(np.max(np.abs(full.L - left.L), initial=0.0)),
                          float(np.max(2.0 * np.abs(L_outer), initial=0.0)),
                          float(np.max(excess, initial=0.0)), 1e-12,
                          detail=f'{int(np.count_nonzero(excess > 1e-12))} grid point(s) violate the bound')
    return [identity, bound]


def check_truncation_rates(q: Potential, b_list: Sequence[float], a: float, k_grid: np.ndarray | None = None,
                           band: float = Tolerances.truncation_band, band_check: bool = True) -> list[Check]:
    """sup_{|k| >= a} |k (L - L_b)| against ||q - q_b||_1, and integral of k^2 |L - L_b|^2 against
    (pi/2) * integral of q^2 over (b, inf).

    The band check asks the first ratio to stay constant within a factor `band`; it fits exponential tails only.
    """
    l1, _ = norms(q)
    if stability_condition(l1, a) >= 1.0:
        raise ValidationFailure(f'(Q/2a) exp(Q/a) = {stability_condition(l1, a):.3g} >= 1 for a = {a}, Q = {l1:.4g}')
    k = momentum_grid() if k_grid is None else np.asarray(k_grid, dtype=float)
    L = L_analytic(q, k)
    positive = k > 0
    ratios = []
    checks = []
    for b in b_list:
        L_b = L_analytic(truncate(q, b), k)
        high = np.abs(k) >= a
        sup = float(np.max(np.abs(k[high] * (L[high] - L_b[high])), initial=0.0))
        tail_l1, tail_l2 = tail_norms(q, b)
        if tail_l1 > 0:
            ratios.append(sup / tail_l1)
        energy = float(trapezoid(k[positive] ** 2 * np.abs(L[positive] - L_b[positive]) ** 2, x=k[positive]))
        bound = 0.5 * np.pi * tail_l2
        checks.append(Check(name=f'truncation_l2[b={b:g}]', lhs=energy, rhs=bound,
                            residual=energy / bound if bound > 0 else 0.0, tolerance=1.0,
                            passed=bool(energy <= bound + 1e-15),
                            detail=f'sup |k (L - L_b)| = {sup:.3e}, ||q - q_b||_1 = {tail_l1:.3e}'))
    if ratios and band_check:
        spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
        checks.insert(0, Check.at_most('truncation_sup_band', max(ratios), min(ratios), spread, band,
                                       detail='ratios ' + ', '.join(f'{r:.4g}' for r in ratios)))
    return checks


def residue_integral(L_fn: Callable[[np.ndarray], np.ndarray], kappa: float, radius: float,
                     n_points: int = RESIDUE_POINTS) -> complex:
    """(2 pi i)^-1 times the integral of L around |lambda - i kappa| = radius, by the periodic trapezoid rule."""
    theta = 2.0 * np.pi * np.arange(n_points) / n_points
    offset = radius * np.exp(1j * theta)
    return complex(np.mean(L_fn(1j * kappa + offset) * offset))


def check_residues_and_lt(slice_: ScatteringSlice, L_fn: Callable[[np.ndarray], np.ndarray], l1_norm: float,
                          tolerance: float = Tolerances.residue) -> list[Check]:
    kappas = [bs.kappa for bs in slice_.bound_states]
    checks = []
    for n, state in enumerate(slice_.bound_states):
        neighbours = [abs(state.kappa - other) for m, other in enumerate(kappas) if m != n]
        radius = 0.5 * min([state.kappa] + neighbours)
        try:
            residue = residue_integral(L_fn, state.kappa, radius)
        except KdvIstError as e:
            checks.append(Check.error(f'residue[{n}]', e))
            continue
        expected = 1j * state.c
        checks.append(Check.at_most(f'residue[{n}]', residue, expected, abs(residue - expected) / state.c, tolerance,
                                    detail=f'kappa = {state.kappa:.12g}, radius = {radius:.3g}'))
    total = float(sum(kappas))
    checks.append(Check(name='lieb_thirring', lhs=total, rhs=0.5 * l1_norm, residual=total - 0.5 * l1_norm,
                        tolerance=0.0, passed=bool(total <= 0.5 * l1_norm)))
    return checks


def check_hankel_norm_lt1(reconstructor: Reconstructor, x: float, t: float) -> Check:
    """||H(L_b / xi)|| for the reflection part alone, which must stay below 1."""
    line = reconstructor.line_for(x, t)
    symbol = real_line_symbol(line, reconstructor.L(line.nodes), (), x, t, include_poles=False)
    options = reconstructor.options
    basis = max(options.basis_size, required_basis_size(symbol, options.s_max))
    value = hankel_norm(hankel_matrix(symbol, basis, options.s_max))
    return Check(name=f'hankel_norm[x={x:g}, t={t:g}]', lhs=value, rhs=1.0, residual=value, tolerance=1.0,
                 passed=bool(value < 1.0), detail=f'margin {1.0 - value:.4g}')


def check_jost_bound(q: Potential, k_values: Sequence[float]) -> Check:
    excess = []
    for k in k_values:
        sup, bound = jost_bound_ok(q, k)
        excess.append(sup - bound)
    worst = int(np.argmax(excess))
    return Check(name='jost_bound', lhs=excess[worst], rhs=0.0, residual=max(excess[worst], 0.0), tolerance=0.0,
                 passed=bool(max(excess) <= 0.0), detail=f'worst k = {k_values[worst]:g}')


def check_weyl_consistency(q: Potential, slice_: ScatteringSlice, stride: int = 25,
                           tolerance: float = Tolerances.weyl) -> Check:
    """L from the Weyl function, (ik - m)/(ik + m), against the Wronskian L of the slice."""
    keep = np.flatnonzero(_regular(slice_) & (slice_.k_grid > 0))[::stride]
    errors = []
    for index in keep:
        k = slice_.k_grid[index]
        m = weyl_m(q, complex(k * k))
        errors.append(abs((1j * k - m) / (1j * k + m) - slice_.L[index]))
    residual = float(max(errors, default=0.0))
    return Check.at_most('weyl_consistency', residual, 0.0, residual, tolerance)


def check_transmission_integral(q: Potential, slice_: ScatteringSlice, k_values: Sequence[float] = (0.5, 1.0, 2.0),
                                tolerance: float = Tolerances.transmission) -> Check:
    """1/T and L/T from integrals of q m_+ against the Wronskian T and L at the nearest slice nodes."""
    errors = []
    for k in k_values:
        index = int(np.argmin(np.abs(slice_.k_grid - k)))
        k_node = float(slice_.k_grid[index])
        T, L = slice_.T[index], slice_.L[index]
        errors.append(abs(transmission_integral(q, k_node) - 1.0 / T))
        errors.append(abs(reflection_integral(q, k_node) - L / T))
    residual = float(max(errors, default=0.0))
    return Check.at_most('transmission_integral', residual, 0.0, residual, tolerance)


def check_deformation(reconstructor: Reconstructor, x: float, t: float,
                      tolerance: float = Tolerances.deformation) -> Check:
    contour = reconstructor.contour_for(x, t)
    line = reconstructor.line_for(x, t)
    gamma, real, gap = deformation_defect(reconstructor.L(contour.nodes, reconstructor.bound_states), contour,
                                          reconstructor.L(line.nodes), line, reconstructor.bound_states, x, t)
    return Check.at_most(f'deformation[x={x:g}, t={t:g}]', gamma, real, gap, tolerance)


def check_resolvent_convergence(q: Potential, b: float, x: float, t: float,
                                options: ReconstructOptions = ReconstructOptions()) -> Check:
    """||(I+H_b)^-1 - (I+H)^-1|| <= ||(I+H_b)^-1|| ||H - H_b|| ||(I+H)^-1|| on shared nodes."""
    full = Reconstructor(q, options=options)
    truncated = Reconstructor(truncate(q, b), options=options)
    a = max(full.height(x, t)[0], truncated.height(x, t)[0])
    symbols = []
    for engine in (full, truncated):
        fixed = Reconstructor(engine.q, engine.bound_states, replace(options, a=a))
        line = fixed.line_for(x, t)
        symbols.append(real_line_symbol(line, fixed.L(line.nodes), fixed.bound_states, x, t))
    basis = max([options.basis_size] + [required_basis_size(s, options.s_max) for s in symbols])
    system, system_b = (hankel_matrix(s, basis, options.s_max) for s in symbols)
    lhs, rhs = resolvent_gap(system_b, system)
    return Check(name=f'resolvent[b={b:g}]', lhs=lhs, rhs=rhs, residual=lhs - rhs, tolerance=1e-12,
                 passed=bool(lhs <= rhs * (1 + 1e-9) + 1e-12))


def cauchy_constant(a: float, n_samples: int = 100, seed: int = 0, n_modes: int = 6) -> float:
    """Largest ||F||_2 / (sqrt(a) ||f||_inf) over random smooth densities f on S_a."""
    rng = np.random.default_rng(seed)
    rect = build_rectangle(a, n_side=64, n_top=128)
    # arclength parameter along S_a, 0 at -a and 3a at +a
    lam = rect.nodes
    arc = np.where(rect.segment('rect_side_left'), lam.imag,
                   np.where(rect.segment('rect_top'), a + (lam.real + a), 3.0 * a + (a - lam.imag)))
    phase = np.pi * arc / (4.0 * a)
    k = np.linspace(-20.0 * a, 20.0 * a, 8001) + 0.5 * 40.0 * a / 8000
    worst = 0.0
    for _ in range(n_samples):
        coefficients = rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes)
        f = np.exp(1j * np.outer(phase, np.arange(n_modes))) @ coefficients
        sup = float(np.max(np.abs(f)))
        F = cauchy_transform(f, rect, k)
        l2 = math.sqrt(float(trapezoid(np.abs(F) ** 2, x=k)))
        worst = max(worst, l2 / (math.sqrt(a) * sup))
    return worst


def check_cauchy_transform_constant(a: float = 1.0, n_samples: int = 100, seed: int = 0,
                                    tolerance: float = Tolerances.cauchy_constant) -> Check:
    constant = cauchy_constant(a, n_samples, seed)
    return Check.at_most(f'cauchy_constant[a={a:g}]', constant, tolerance, constant, tolerance,
                         detail='empirical constant; the bound is not certified')


def _guard(report: ValidationReport, name: str, run: Callable[[], Check | list[Check]]):
    try:
        report.extend(run())
    except KdvIstError as e:
        report.extend(Check.error(name, e))


def validate_potential(q: Potential,
                       k_grid: np.ndarray | None = None,
                       tolerances: Tolerances = Tolerances(),
                       options: ReconstructOptions = ReconstructOptions(),
                       hankel_points: Sequence[tuple[float, float]] = ((0.0, 0.1), (0.0, 0.5), (2.0, 0.1), (2.0, 0.5)),
                       perturb: Callable[[np.ndarray], np.ndarray] | None = None,
                       slice_: ScatteringSlice | None = None) -> ValidationReport:
    """Every check for one potential. `perturb` corrupts the scattering-data side only."""
    k = momentum_grid() if k_grid is None else np.asarray(k_grid, dtype=float)
    if slice_ is None:
        slice_ = scattering_coefficients(q, k)
    if perturb is not None:
        slice_ = perturb_slice(slice_, perturb)
    l1, _ = norms(q)
    report = ValidationReport(provenance={'potential': q.digest, 'preset': q.preset_tag or '',
                                          'grid_step': q.grid_step, 'b_max': q.b_max,
                                          'k_max': float(np.max(k)), 'k_points': float(k.size)})
    _guard(report, 'unitarity', lambda: check_unitarity(slice_, tolerances.unitarity))
    _guard(report, 'zf_trace', lambda: check_zf_trace(q, slice_, tolerances.zf_trace))
    _guard(report, 'weyl_consistency', lambda: check_weyl_consistency(q, slice_, tolerance=tolerances.weyl))
    _guard(report, 'transmission_integral',
           lambda: check_transmission_integral(q, slice_, tolerance=tolerances.transmission))
    _guard(report, 'jost_bound', lambda: check_jost_bound(q, (0.5, 1.0, 2.0, 5.0)))
    _guard(report, 'residues', lambda: check_residues_and_lt(slice_, lambda lam: L_analytic(q, lam), l1,
                                                             tolerances.residue))
    if not q.is_zero:
        split = q.grid_step * 2 * round(q.support_index / 4)
        if split > 0:
            _guard(report, 'layer_stripping',
                   lambda: check_layer_stripping(q, split, slice_.k_grid, tolerances.layer_stripping, slice_))
        b_list = [b for b in (2.0, 4.0, 8.0) if b < q.support_edge]
        if b_list:
            a = max(2.0, 2.0 * l1)
            exponential = (q.preset_tag or '').startswith('exp_decay')
            _guard(report, 'truncation', lambda: check_truncation_rates(q, b_list, a, k, tolerances.truncation_band,
                                                                          band_check=exponential))
        reconstructor = Reconstructor(q, slice_.bound_states, options)
        for x, t in hankel_points:
            _guard(report, 'hankel_norm', lambda: check_hankel_norm_lt1(reconstructor, x, t))
        x0, t0 = hankel_points[0]
        _guard(report, 'deformation', lambda: check_deformation(reconstructor, x0, t0, tolerances.deformation))
    return report


def run_suite(battery: Sequence[tuple[str, Sequence[float]]] = PRESET_BATTERY,
              grid_step: float | None = None,
              b_max: float | None = None,
              **kwargs) -> list[ValidationReport]:
    """`validate_potential` over a battery of presets, in battery order."""
    reports = []
    for name, params in battery:
        preset_kwargs = {key: value for key, value in (('grid_step', grid_step), ('b_max', b_max)) if value is not None}
        reports.append(validate_potential(make_preset(name, params, **preset_kwargs), **kwargs))
    return reports
