import math
from dataclasses import dataclass, field
from functools import cached_property

import msgspec
import numpy as np
from scipy.integrate import trapezoid

from .common.exceptions import InvalidPotential, TruncationOutOfRange, UnknownPreset
from .common.hashing import digest_array
from .common.serialization import json_deserialization, json_serialization

DEFAULT_GRID_STEP: float = 0.005
DEFAULT_B_MAX: float = 20.0
# relative slack when deciding whether a length lies on the sampling grid
GRID_SNAP_TOL: float = 1e-9


class PotentialFile(msgspec.Struct, forbid_unknown_fields=True):
    """JSON layout of a sampled potential.

    `jumps` lists (node index, left limit, right limit) for every jump discontinuity that sits on a node;
    it is optional and absent for smooth data.
    """
    grid_step: float
    b_max: float
    samples: list[float]
    preset_tag: str | None = None
    jumps: list[tuple[int, float, float]] = []


@dataclass(frozen=True, eq=False)
class Potential:
    """Real initial datum sampled on the uniform grid x_j = j * grid_step of [0, b_max].

    Samples at jump nodes hold the half-value (left + right) / 2; the one-sided limits are kept in `jumps`
    so integrators can treat piecewise-constant data exactly.
    """
    grid_step: float
    b_max: float
    samples: np.ndarray
    preset_tag: str | None = None
    jumps: tuple[tuple[int, float, float], ...] = field(default=())

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 3:
            raise InvalidPotential('samples must be a 1-d array with at least three nodes')
        if not np.all(np.isfinite(samples)):
            raise InvalidPotential('samples must be real and finite')
        if self.grid_step <= 0:
            raise InvalidPotential(f'grid_step must be positive, got {self.grid_step}')
        n_intervals = samples.size - 1
        if not math.isclose(n_intervals * self.grid_step, self.b_max, rel_tol=GRID_SNAP_TOL, abs_tol=GRID_SNAP_TOL):
            raise InvalidPotential(f'{samples.size} samples at step {self.grid_step} do not span [0, {self.b_max}]')
        for index, left, right in self.jumps:
            if not 0 <= index <= n_intervals or not (math.isfinite(left) and math.isfinite(right)):
                raise InvalidPotential(f'invalid jump record ({index}, {left}, {right})')
        if self.jumps and self.jumps[0][0] == 0 and self.jumps[0][1] != 0.0:
            raise InvalidPotential('support must lie in [0, b_max]: non-zero left limit at x = 0')
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'jumps', tuple(sorted((int(i), float(lv), float(rv)) for i, lv, rv in self.jumps)))

    @property
    def n_nodes(self) -> int:
        return self.samples.size

    @cached_property
    def x_grid(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.grid_step

    @cached_property
    def left_limits(self) -> np.ndarray:
        values = self.samples.copy()
        for index, left, _ in self.jumps:
            values[index] = left
        values.setflags(write=False)
        return values

    @cached_property
    def right_limits(self) -> np.ndarray:
        values = self.samples.copy()
        for index, _, right in self.jumps:
            values[index] = right
        values.setflags(write=False)
        return values

    @cached_property
    def support_index(self) -> int:
        """Smallest even node index beyond which q vanishes identically.

        Even so that the two-node RK4 steps of the Jost integrators start and end on it.
        """
        nonzero = np.flatnonzero((self.left_limits != 0.0) | (self.right_limits != 0.0))
        if nonzero.size == 0:
            return 0
        last = int(nonzero[-1])
        if self.right_limits[last] == 0.0 and self.left_limits[last] != 0.0:
            edge = last
        else:
            edge = last + 1
        edge += edge % 2
        return min(edge, self.n_nodes - 1 - (self.n_nodes - 1) % 2)

    @property
    def support_edge(self) -> float:
        return self.support_index * self.grid_step

    @property
    def is_zero(self) -> bool:
        return self.support_index == 0

    @cached_property
    def digest(self) -> str:
        jumps = np.asarray(self.jumps, dtype=float).reshape(-1)
        return digest_array(np.array([self.grid_step, self.b_max]), self.samples, jumps, prefix=b'potential')

    def node_index(self, x: float) -> int:
        """Index of the grid node at `x`; raises when `x` is not on the grid."""
        index = int(round(x / self.grid_step))
        if not math.isclose(index * self.grid_step, x, rel_tol=GRID_SNAP_TOL, abs_tol=GRID_SNAP_TOL):
            raise TruncationOutOfRange(f'x = {x} is not a multiple of grid_step = {self.grid_step}')
        return index

    def to_file(self) -> PotentialFile:
        return PotentialFile(grid_step=self.grid_step, b_max=self.b_max, samples=self.samples.tolist(),
                             preset_tag=self.preset_tag, jumps=[tuple(j) for j in self.jumps])

    def dumps(self) -> bytes:
        return json_serialization(self.to_file())

    @classmethod
    def loads(cls, payload: bytes) -> 'Potential':
        try:
            data: PotentialFile = json_deserialization(payload, PotentialFile)
        except msgspec.ValidationError as e:
            raise InvalidPotential(f'malformed potential file: {e}') from e
        return cls(grid_step=data.grid_step, b_max=data.b_max, samples=np.asarray(data.samples, dtype=float),
                   preset_tag=data.preset_tag, jumps=tuple(tuple(j) for j in data.jumps))


def _grid(grid_step: float, b_max: float) -> tuple[np.ndarray, float]:
    if grid_step <= 0 or b_max <= 0:
        raise InvalidPotential(f'grid_step and b_max must be positive, got {grid_step}, {b_max}')
    # even interval count keeps the support edge on an RK4 step boundary
    n_intervals = int(round(b_max / grid_step))
    n_intervals += n_intervals % 2
    return np.arange(n_intervals + 1) * grid_step, n_intervals * grid_step


def _sample_on_interval(func, lo: float, hi: float, grid_step: float, b_max: float,
                        tag: str) -> Potential:
    """Samples `func` on the open interval (lo, hi) with half-values at the edges."""
    x, b_max = _grid(grid_step, b_max)
    if lo < 0:
        raise InvalidPotential(f'{tag}: support must lie in [0, inf), got lower edge {lo}')
    if hi > b_max * (1 + GRID_SNAP_TOL):
        raise InvalidPotential(f'{tag}: support edge {hi} exceeds b_max = {b_max}')
    edges = []
    for edge in (lo, hi):
        index = int(round(edge / grid_step))
        if not math.isclose(index * grid_step, edge, rel_tol=GRID_SNAP_TOL, abs_tol=GRID_SNAP_TOL):
            raise InvalidPotential(f'{tag}: support edge {edge} is not on the sampling grid')
        edges.append(index)
    i_lo, i_hi = edges
    samples = np.zeros_like(x)
    jumps = []
    if i_hi > i_lo:
        interior = slice(i_lo + 1, i_hi)
        samples[interior] = func(x[interior])
        right_at_lo = float(func(np.array([x[i_lo]]))[0])
        left_at_hi = float(func(np.array([x[i_hi]]))[0])
        samples[i_lo] = 0.5 * right_at_lo
        samples[i_hi] = 0.5 * left_at_hi
        if right_at_lo != 0.0:
            jumps.append((i_lo, 0.0, right_at_lo))
        if left_at_hi != 0.0:
            jumps.append((i_hi, left_at_hi, 0.0))
    return Potential(grid_step=grid_step, b_max=b_max, samples=samples, preset_tag=tag, jumps=tuple(jumps))


def make_preset(name: str,
                params: list[float] | tuple[float, ...] = (),
                grid_step: float = DEFAULT_GRID_STEP,
                b_max: float = DEFAULT_B_MAX) -> Potential:
    """Samples one of the analytic test families.

    Args:
        name: zero | square_well | exp_decay | truncated_sech2 | gaussian_bump.
        params: square_well (V0, b): q = -V0 on (0, b);
            exp_decay (c, rate): q = -c exp(-rate x) on (0, b_max);
            truncated_sech2 (kappa, x0, b): q = -2 kappa^2 sech^2(kappa (x - x0)) on (0, b);
            gaussian_bump (A, mu, sigma): q = A exp(-(x - mu)^2 / (2 sigma^2)) on (0, b_max).
        grid_step: Sampling step.
        b_max: Right edge of the sampled window, rounded up to an even number of steps.

    Returns:
        Potential: The sampled datum, tagged with its preset call.
    """
    params = tuple(float(p) for p in params)
    tag = f"{name}({', '.join(f'{p:g}' for p in params)})"
    _, b_max = _grid(grid_step, b_max)

    def expect(count: int):
        if len(params) != count:
            raise InvalidPotential(f'{name} takes {count} parameters, got {len(params)}')

    match name:
        case 'zero':
            expect(0)
            return _sample_on_interval(lambda x: np.zeros_like(x), 0.0, 0.0, grid_step, b_max, tag)
        case 'square_well':
            expect(2)
            depth, width = params
            if width <= 0:
                raise InvalidPotential(f'{tag}: width must be positive')
            return _sample_on_interval(lambda x: np.full_like(x, -depth), 0.0, width, grid_step, b_max, tag)
        case 'exp_decay':
            expect(2)
            amplitude, rate = params
            if rate <= 0:
                raise InvalidPotential(f'{tag}: rate must be positive')
            return _sample_on_interval(lambda x: -amplitude * np.exp(-rate * x), 0.0, b_max, grid_step, b_max, tag)
        case 'truncated_sech2':
            expect(3)
            kappa, x0, width = params
            if width <= 0 or kappa <= 0:
                raise InvalidPotential(f'{tag}: kappa and b must be positive')
            return _sample_on_interval(lambda x: -2 * kappa ** 2 / np.cosh(kappa * (x - x0)) ** 2,
                                       0.0, width, grid_step, b_max, tag)
        case 'gaussian_bump':
            expect(3)
            amplitude, mu, sigma = params
            if sigma <= 0 or mu < 0:
                raise InvalidPotential(f'{tag}: needs sigma > 0 and a centre inside [0, inf)')
            return _sample_on_interval(lambda x: amplitude * np.exp(-(x - mu) ** 2 / (2 * sigma ** 2)),
                                       0.0, b_max, grid_step, b_max, tag)
        case _:
            raise UnknownPreset(f'unknown preset {name!r}')


def restrict(q: Potential, lo: float, hi: float) -> Potential:
    """q * 1_(lo, hi) with half-values at the new edges."""
    if not 0 <= lo < hi <= q.b_max * (1 + GRID_SNAP_TOL):
        raise TruncationOutOfRange(f'need 0 <= lo < hi <= b_max = {q.b_max}, got ({lo}, {hi})')
    i_lo, i_hi = q.node_index(lo), q.node_index(hi)
    left, right = q.left_limits.copy(), q.right_limits.copy()
    left[:i_lo + 1] = 0.0
    right[:i_lo] = 0.0
    right[i_hi:] = 0.0
    left[i_hi + 1:] = 0.0
    samples = 0.5 * (left + right)
    jumps = tuple((int(j), float(left[j]), float(right[j])) for j in np.flatnonzero(left != right))
    return Potential(grid_step=q.grid_step, b_max=q.b_max, samples=samples, preset_tag=q.preset_tag, jumps=jumps)


def truncate(q: Potential, b: float) -> Potential:
    """The restriction q_b = q * 1_(0, b); `b` must be a grid node in (0, b_max]."""
    if not 0 < b <= q.b_max * (1 + GRID_SNAP_TOL):
        raise TruncationOutOfRange(f'truncation point {b} outside (0, {q.b_max}]')
    return restrict(q, 0.0, b)


def _integrate_limits(q: Potential, func) -> float:
    # one-sided averages make the rule exact on piecewise-constant data; the zero pads close the support
    values = 0.5 * (func(q.left_limits) + func(q.right_limits))
    padded = np.concatenate(([0.0], values, [0.0]))
    return float(trapezoid(padded, dx=q.grid_step))


def norms(q: Potential) -> tuple[float, float]:
    """Trapezoid values of (||q||_1, ||q||_2)."""
    return _integrate_limits(q, np.abs), math.sqrt(_integrate_limits(q, np.square))


def integral(q: Potential) -> float:
    """Trapezoid value of the integral of q (the first KdV conserved quantity)."""
    return _integrate_limits(q, lambda v: v)


def tail_norms(q: Potential, b: float) -> tuple[float, float]:
    """(||q - q_b||_1, integral of q^2 over (b, b_max)); zero when b is at or beyond b_max."""
    if b >= q.b_max:
        return 0.0, 0.0
    tail = restrict(q, b, q.b_max)
    l1, l2 = norms(tail)
    return l1, l2 ** 2


def evaluate(q: Potential, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of the samples, zero outside [0, b_max]."""
    x = np.asarray(x, dtype=float)
    return np.interp(x, q.x_grid, q.samples, left=0.0, right=0.0)


def distance_l1(q: Potential, r: Potential) -> float:
    """||q - r||_1 for two potentials on the same grid."""
    if q.n_nodes != r.n_nodes or not math.isclose(q.grid_step, r.grid_step):
        raise InvalidPotential('potentials live on different grids')
    values = 0.5 * (np.abs(q.left_limits - r.left_limits) + np.abs(q.right_limits - r.right_limits))
    padded = np.concatenate(([0.0], values, [0.0]))
    return float(trapezoid(padded, dx=q.grid_step))
