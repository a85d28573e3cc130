"""Pseudo-spectral reference solver for q_t - 6 q q_x + q_xxx = 0 on a periodic surrogate of the line.

In Fourier space q_hat_t = i k^3 q_hat + 3 i k FFT(q^2). The stiff linear part is integrated exactly by fourth-order
exponential time differencing (ETDRK4); the phi-functions are evaluated by averaging over a circle in the complex
plane, which avoids the cancellation of their Taylor series near zero.
"""
import math
from dataclasses import dataclass, field

import msgspec
import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .common.exceptions import BoundaryContamination, PdeStepFailure
from .common.serialization import json_serialization
from .potential import Potential, evaluate

DEFAULT_HALF_WIDTH: float = 60.0
DEFAULT_N_MODES: int = 1024
DEFAULT_DT: float = 0.005
DEALIAS_FRACTION: float = 2.0 / 3.0
CONTOUR_POINTS: int = 32
BOUNDARY_FRACTION: float = 0.05
BOUNDARY_THRESHOLD: float = 1e-8
CSV_FLOAT_FORMAT: str = '%.17g'
# exp(-FILTER_STRENGTH (|k| / k_band)^FILTER_ORDER) on the initial data of band-limited runs
FILTER_STRENGTH: float = 36.0
FILTER_ORDER: int = 36


def soliton(x: np.ndarray, t: float, kappa: float = 1.0, x0: float = 0.0) -> np.ndarray:
    """-2 kappa^2 sech^2(kappa (x - 4 kappa^2 t - x0)), travelling right at speed 4 kappa^2."""
    return -2.0 * kappa ** 2 / np.cosh(kappa * (np.asarray(x, dtype=float) - 4.0 * kappa ** 2 * t - x0)) ** 2


@dataclass(frozen=True)
class PdeParams:
    domain_half_width: float = DEFAULT_HALF_WIDTH
    n_modes: int = DEFAULT_N_MODES
    dt: float = DEFAULT_DT
    dealias_fraction: float = DEALIAS_FRACTION
    strict: bool = False
    # initial data is filtered above this wavenumber; None keeps every mode
    k_band: float | None = None

    def __post_init__(self):
        if self.n_modes < 8 or self.n_modes % 2:
            raise PdeStepFailure(f'n_modes must be even and at least 8, got {self.n_modes}')
        if self.dt <= 0 or self.domain_half_width <= 0:
            raise PdeStepFailure('dt and domain_half_width must be positive')
        if self.k_band is not None and not 0 < self.k_band <= self.k_max:
            raise PdeStepFailure(f'k_band must lie in (0, {self.k_max:.6g}], got {self.k_band}')

    @property
    def x(self) -> np.ndarray:
        return -self.domain_half_width + 2.0 * self.domain_half_width * np.arange(self.n_modes) / self.n_modes

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_modes, d=2.0 * self.domain_half_width / self.n_modes)

    @property
    def k_max(self) -> float:
        return math.pi * self.n_modes / (2.0 * self.domain_half_width)


def sized_for(t_max: float, x_window: tuple[float, float] = (-5.0, 15.0), k_band: float = 10.0,
              dt: float = DEFAULT_DT) -> PdeParams:
    """Domain and resolution for a cross-check window: radiation at |k| <= k_band moves left at speed up to
    3 k_band^2 and must not wrap around onto the window before t_max. Modes above k_band are filtered out of the
    initial data; at t > 0 they have already left the window."""
    reach = max(abs(x_window[0]), abs(x_window[1]))
    half_width = max(DEFAULT_HALF_WIDTH, reach + 3.0 * k_band ** 2 * t_max)
    needed = 3.0 * half_width * k_band / math.pi
    n_modes = 1 << max(3, math.ceil(math.log2(needed)))
    return PdeParams(domain_half_width=half_width, n_modes=n_modes, dt=dt, k_band=k_band)


@dataclass(frozen=True, eq=False)
class _Etdrk4:
    E: np.ndarray
    E2: np.ndarray
    Q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray

    @classmethod
    def build(cls, linear: np.ndarray, h: float) -> '_Etdrk4':
        roots = np.exp(2j * np.pi * (np.arange(1, CONTOUR_POINTS + 1) - 0.5) / CONTOUR_POINTS)
        LR = h * linear[:, None] + roots[None, :]
        eLR = np.exp(LR)
        Q = h * np.mean((np.exp(LR / 2.0) - 1.0) / LR, axis=1)
        f1 = h * np.mean((-4.0 - LR + eLR * (4.0 - 3.0 * LR + LR ** 2)) / LR ** 3, axis=1)
        f2 = h * np.mean((2.0 + LR + eLR * (-2.0 + LR)) / LR ** 3, axis=1)
        f3 = h * np.mean((-4.0 - 3.0 * LR - LR ** 2 + eLR * (4.0 - LR)) / LR ** 3, axis=1)
        return cls(E=np.exp(h * linear), E2=np.exp(h * linear / 2.0), Q=Q, f1=f1, f2=f2, f3=f3)


@dataclass(eq=False)
class PdeRun:
    params: PdeParams
    x: np.ndarray
    snapshots: dict[float, np.ndarray]
    mass_drift: float = 0.0
    energy_drift: float = 0.0
    boundary_amplitude: float = 0.0
    contaminated: bool = False
    warnings: list[str] = field(default_factory=list)

    def at(self, t: float, x: np.ndarray) -> np.ndarray:
        """Spectral interpolation of the snapshot at time t onto arbitrary x."""
        snapshot = self.snapshots[t]
        coefficients = np.fft.fft(snapshot) / snapshot.size
        k = self.params.k
        phase = np.exp(1j * np.multiply.outer(np.asarray(x, dtype=float) + self.params.domain_half_width, k))
        return (phase @ coefficients).real

    def snapshot_frame(self, t: float) -> pd.DataFrame:
        return pd.DataFrame({'x': self.x, 'q': self.snapshots[t]})

    def snapshot_csv(self, t: float) -> str:
        return self.snapshot_frame(t).to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')

    def manifest(self) -> bytes:
        return json_serialization(PdeRunManifest(domain_half_width=self.params.domain_half_width,
                                                 n_modes=self.params.n_modes, dt=self.params.dt,
                                                 dealias_fraction=self.params.dealias_fraction,
                                                 k_band=self.params.k_band,
                                                 t_list=sorted(self.snapshots), mass_drift=self.mass_drift,
                                                 energy_drift=self.energy_drift,
                                                 boundary_amplitude=self.boundary_amplitude,
                                                 contaminated=self.contaminated, warnings=self.warnings))


class PdeRunManifest(msgspec.Struct):
    domain_half_width: float
    n_modes: int
    dt: float
    dealias_fraction: float
    k_band: float | None
    t_list: list[float]
    mass_drift: float
    energy_drift: float
    boundary_amplitude: float
    contaminated: bool
    warnings: list[str] = []


def _periodic_integral(values: np.ndarray, params: PdeParams) -> float:
    return float(np.sum(values) * 2.0 * params.domain_half_width / params.n_modes)


def _relative_drift(initial: float, final: float) -> float:
    return abs(final - initial) / abs(initial) if initial != 0 else abs(final)


def evolve_kdv(q0: Potential | np.ndarray, t_list, params: PdeParams = PdeParams()) -> PdeRun:
    """Snapshots of the solution at every time in `t_list` (positive, increasing)."""
    times = [float(t) for t in t_list]
    if not times or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise PdeStepFailure(f't_list must be positive and strictly increasing, got {times}')
    x = params.x
    if isinstance(q0, Potential):
        u = evaluate(q0, x)
    else:
        u = np.asarray(q0, dtype=float)
        if u.shape != x.shape:
            raise PdeStepFailure(f'initial samples have shape {u.shape}, expected {x.shape}')
    k = params.k
    linear = 1j * k ** 3
    dealias = np.abs(k) <= params.dealias_fraction * params.k_max
    g = 3j * k * dealias

    def nonlinear(v_hat: np.ndarray) -> np.ndarray:
        return g * np.fft.fft(np.fft.ifft(v_hat).real ** 2)

    v = np.fft.fft(u)
    if params.k_band is not None:
        v = v * np.exp(-FILTER_STRENGTH * (np.abs(k) / params.k_band) ** FILTER_ORDER)
        u = np.fft.ifft(v).real
    mass0 = _periodic_integral(u, params)
    energy0 = _periodic_integral(u ** 2, params)
    steppers: dict[float, _Etdrk4] = {}
    snapshots: dict[float, np.ndarray] = {}
    now = 0.0
    for target in times:
        n_steps = max(1, math.ceil((target - now) / params.dt - 1e-9))
        h = (target - now) / n_steps
        key = round(h, 15)
        if key not in steppers:
            steppers[key] = _Etdrk4.build(linear, h)
        s = steppers[key]
        for _ in range(n_steps):
            Nv = nonlinear(v)
            a = s.E2 * v + s.Q * Nv
            Na = nonlinear(a)
            b = s.E2 * v + s.Q * Na
            Nb = nonlinear(b)
            c = s.E2 * a + s.Q * (2.0 * Nb - Nv)
            Nc = nonlinear(c)
            v = s.E * v + Nv * s.f1 + 2.0 * (Na + Nb) * s.f2 + Nc * s.f3
        if not np.all(np.isfinite(v)):
            raise PdeStepFailure(f'non-finite solution before t = {target}; reduce dt ({params.dt})')
        now = target
        snapshots[target] = np.fft.ifft(v).real

    final = snapshots[times[-1]]
    edge = max(1, int(BOUNDARY_FRACTION * params.n_modes))
    boundary = max(float(np.max(np.abs(snap[:edge]))) for snap in snapshots.values())
    boundary = max(boundary, max(float(np.max(np.abs(snap[-edge:]))) for snap in snapshots.values()))
    run = PdeRun(params=params, x=x, snapshots=snapshots,
                 mass_drift=_relative_drift(mass0, _periodic_integral(final, params)),
                 energy_drift=_relative_drift(energy0, _periodic_integral(final ** 2, params)),
                 boundary_amplitude=boundary, contaminated=boundary > BOUNDARY_THRESHOLD)
    if run.contaminated:
        message = (f'|q| reaches {boundary:.3e} within {BOUNDARY_FRACTION:.0%} of the periodic boundary; '
                   f'comparisons near the edges are unreliable')
        if params.strict:
            raise BoundaryContamination(message)
        run.warnings.append(message)
    return run


def soliton_residual(kappa: float = 1.0, x0: float = 0.0, t: float = 0.0, params: PdeParams = PdeParams()) -> float:
    """max |q_t - 6 q q_x + q_xxx| for the exact soliton with spectral x-derivatives and q_t = -4 kappa^2 q_x."""
    x = params.x
    q = soliton(x, t, kappa, x0)
    k = params.k
    q_hat = np.fft.fft(q)
    q_x = np.fft.ifft(1j * k * q_hat).real
    q_xxx = np.fft.ifft(-1j * k ** 3 * q_hat).real
    q_t = -4.0 * kappa ** 2 * q_x
    return float(np.max(np.abs(q_t - 6.0 * q * q_x + q_xxx)))


def crosscheck_table(run: PdeRun, field_values: dict[float, np.ndarray], x_window: np.ndarray) -> pd.DataFrame:
    """Max and mean |q_IST - q_PDE| per time over `x_window`."""
    rows = []
    for t, values in sorted(field_values.items()):
        reference = run.at(t, x_window)
        error = np.abs(np.asarray(values, dtype=float) - reference)
        rows.append({'t': t, 'max_abs_error': float(np.max(error)), 'mean_abs_error': float(np.mean(error)),
                     'l2_error': float(math.sqrt(trapezoid(error ** 2, x=x_window))) if x_window.size > 1 else 0.0})
    return pd.DataFrame(rows, columns=['t', 'max_abs_error', 'mean_abs_error', 'l2_error'])
