"""Hankel operators H(phi) f = J P_- (phi f) on H^2 and the Fredholm solve for m - 1.

Under f(k) = integral over s > 0 of exp(iks) fhat(s) ds, H^2 of the upper half-plane maps onto L^2(0, inf) and H(phi)
becomes the integral operator with kernel Omega(s + s'), Omega(sigma) = (2 pi)^-1 * integral of phi(k) exp(ik sigma) dk.
The function J phi = H(phi) 1 maps to Omega itself. Discretization is Nystrom on composite Gauss-Legendre nodes of
[0, s_max], symmetrized with the square roots of the weights so that I + H is a Hermitian matrix.
"""
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigvalsh, norm

from .common.exceptions import BasisResolutionError, NonUniformGrid, PositivityFailure
from .contour import PANEL_ORDER, PANEL_PHASE, ExponentialSum, SymbolGrid, gauss_panels

DEFAULT_S_MAX: float = 50.0
DEFAULT_BASIS_SIZE: int = 256
MAX_BASIS_SIZE: int = 4096
ALPHA_FLOOR: float = 1e-6
REFINEMENT_TOL: float = 1e-6
# above this many kernel terms per matrix entry the kernel is tabulated and interpolated
DIRECT_TERMS_PER_ROW: int = 4
SPLINE_DEGREE: int = 7
# grid step times the highest kernel frequency for the tabulated kernel
SPLINE_RESOLUTION: float = 0.25
UNIFORM_TOL: float = 1e-9


def riesz_project_minus(f: np.ndarray, k_grid: np.ndarray | None = None) -> np.ndarray:
    """P_- f on a uniform grid: keeps the strictly negative Fourier frequencies.

    Functions analytic in the lower half-plane, such as 1 / (k - i), are fixed; 1 / (k + i) is annihilated.
    """
    f = np.asarray(f, dtype=complex)
    if k_grid is not None:
        steps = np.diff(np.asarray(k_grid, dtype=float))
        if steps.size == 0 or np.max(np.abs(steps - steps[0])) > UNIFORM_TOL * max(abs(steps[0]), 1.0):
            raise NonUniformGrid('the Riesz projection needs a uniform momentum grid')
    spectrum = np.fft.fft(f)
    spectrum[np.fft.fftfreq(f.size) >= 0.0] = 0.0
    return np.fft.ifft(spectrum)


def nystrom_nodes(s_max: float, basis_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [0, s_max] with panels of PANEL_ORDER nodes."""
    if basis_size < 1:
        raise BasisResolutionError(f'basis_size must be positive, got {basis_size}')
    n_panels = max(1, math.ceil(basis_size / PANEL_ORDER))
    base, extra = divmod(basis_size, n_panels)
    counts = [base + (1 if i < extra else 0) for i in range(n_panels)]
    return gauss_panels(np.linspace(0.0, s_max, n_panels + 1), counts)


def kernel_frequency(symbol: ExponentialSum, s_max: float) -> float:
    """Highest local frequency of Omega on [0, 2 s_max].

    Real exponents beyond the stationary point of exp(-8 i k^3 t) cancel out of Omega, so with t > 0 the local
    frequency is bounded by sqrt((sigma - 2x) / 24t) however far the rays reach.
    """
    frequency = symbol.max_frequency
    if symbol.t > 0:
        stationary = math.sqrt(max(2.0 * s_max - 2.0 * symbol.x, 0.0) / (24.0 * symbol.t)) + 1.0
        frequency = min(frequency, stationary)
    return frequency


def required_basis_size(symbol: ExponentialSum, s_max: float = DEFAULT_S_MAX) -> int:
    """Smallest node count whose panels resolve products Omega(s + s') y(s') within the phase budget."""
    frequency = kernel_frequency(symbol, s_max)
    n_panels = max(1, math.ceil(2.0 * frequency * s_max / PANEL_PHASE))
    return PANEL_ORDER * n_panels


def _kernel_direct(symbol: ExponentialSum, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    E = np.exp(1j * np.multiply.outer(s, symbol.mu))
    return (E * symbol.g) @ E.T, E @ symbol.g


def _kernel_tabulated(symbol: ExponentialSum, s: np.ndarray, s_max: float) -> tuple[np.ndarray, np.ndarray]:
    frequency = max(symbol.max_frequency, 1.0)
    step = min(SPLINE_RESOLUTION / frequency, 0.05)
    n_points = int(math.ceil(2.0 * s_max / step)) + SPLINE_DEGREE + 1
    sigma = np.linspace(0.0, 2.0 * s_max, n_points)
    table = symbol(sigma)
    real = make_interp_spline(sigma, table.real, k=SPLINE_DEGREE)
    imag = make_interp_spline(sigma, table.imag, k=SPLINE_DEGREE)
    pairs = np.add.outer(s, s)
    return real(pairs) + 1j * imag(pairs), symbol(s)


def kernel_values(symbol: ExponentialSum, s: np.ndarray, s_max: float) -> tuple[np.ndarray, np.ndarray]:
    """(Omega(s_i + s_j), Omega(s_i)) on the Nystrom nodes."""
    if symbol.mu.size <= DIRECT_TERMS_PER_ROW * s.size:
        return _kernel_direct(symbol, s)
    return _kernel_tabulated(symbol, s, s_max)


@dataclass(eq=False)
class HankelSystem:
    """Discretized I + H(Phi) with rhs the coordinates of J Phi, in the orthonormalized node basis.

    A vector z in this basis represents the function y with y(s_i) = z_i / sqrt(w_i); its H^2 value at lambda is
    sum_i sqrt(w_i) z_i exp(i lambda s_i).
    """
    basis_size: int
    matrix: np.ndarray
    rhs: np.ndarray
    x: float
    t: float
    nodes: np.ndarray
    weights: np.ndarray
    mode: str = 'nystrom'
    self_adjoint_defect: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Eigenvalues of H, ascending."""
        return eigvalsh(self.matrix) - 1.0

    @property
    def min_eig_estimate(self) -> float:
        return float(self.spectrum[0] + 1.0) if self.basis_size else 1.0

    @cached_property
    def factor(self):
        try:
            return cho_factor(self.matrix, lower=True)
        except LinAlgError as e:
            raise PositivityFailure(f'I + H is not positive definite at (x, t) = ({self.x}, {self.t}); '
                                    f'check the contour height and basis size') from e

    @cached_property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, rhs)

    def evaluate(self, z: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """H^2 values sum_i sqrt(w_i) z_i exp(i lambda s_i) at complex lambda with Im lambda >= 0."""
        if self.mode != 'nystrom':
            raise BasisResolutionError(f'{self.mode} systems have no node expansion')
        lam = np.asarray(lam, dtype=complex)
        return np.exp(1j * np.multiply.outer(lam, self.nodes)) @ (self.sqrt_weights * z)

    def at_zero(self, z: np.ndarray) -> np.ndarray:
        return self.evaluate(z, np.zeros(1))[0]


def _assemble(kernel: np.ndarray, rhs: np.ndarray, sqrt_w: np.ndarray, identity: bool) -> tuple[np.ndarray,
                                                                                                 np.ndarray, float]:
    matrix = sqrt_w[:, None] * kernel * sqrt_w[None, :]
    scale = norm(matrix)
    defect = float(norm(matrix - matrix.conj().T) / scale) if scale > 0 else 0.0
    matrix = 0.5 * (matrix + matrix.conj().T)
    if identity:
        matrix = matrix + np.eye(matrix.shape[0])
    return matrix, sqrt_w * rhs, defect


def hankel_matrix(symbol: ExponentialSum | SymbolGrid,
                  basis_size: int = DEFAULT_BASIS_SIZE,
                  s_max: float = DEFAULT_S_MAX,
                  derivative: bool = False,
                  check_resolution: bool = True) -> HankelSystem:
    """I + H(Phi) (or dH/dx with `derivative`) and J Phi (or its x-derivative).

    An ExponentialSum is discretized by Nystrom; a SymbolGrid on a uniform momentum grid goes through
    `hankel_matrix_grid`.
    """
    if isinstance(symbol, SymbolGrid):
        return hankel_matrix_grid(symbol, basis_size, derivative=derivative)
    if check_resolution:
        needed = required_basis_size(symbol, s_max)
        if basis_size < needed:
            raise BasisResolutionError(f'basis_size {basis_size} cannot resolve the symbol at (x, t) = '
                                       f'({symbol.x}, {symbol.t}); need at least {needed}')
    if derivative:
        symbol = symbol.dx()
    s, w = nystrom_nodes(s_max, basis_size)
    kernel, omega = kernel_values(symbol, s, s_max)
    matrix, rhs, defect = _assemble(kernel, omega, np.sqrt(w), identity=not derivative)
    return HankelSystem(basis_size=s.size, matrix=matrix, rhs=rhs, x=symbol.x, t=symbol.t, nodes=s, weights=w,
                        self_adjoint_defect=defect)


def hankel_matrix_grid(symbol: SymbolGrid, basis_size: int, derivative: bool = False) -> HankelSystem:
    """I + H(Phi) from samples of Phi on a uniform symmetric grid.

    Omega is recovered by FFT on sigma_m = m * dsigma, dsigma = 2 pi / (N dk). Nodes sit at midpoints
    s_i = (i + 1/2) dsigma, so s_i + s_j = (i + j + 1) dsigma never hits a multiple of N dsigma and a constant
    symbol contributes nothing.
    """
    k = symbol.k_grid
    steps = np.diff(k)
    if steps.size == 0 or np.max(np.abs(steps - steps[0])) > UNIFORM_TOL * max(abs(steps[0]), 1.0):
        raise NonUniformGrid('grid assembly needs a uniform momentum grid')
    n = k.size
    if basis_size > n // 2:
        raise BasisResolutionError(f'basis_size {basis_size} exceeds half the {n} grid points')
    dk = float(steps[0])
    dsigma = 2.0 * np.pi / (n * dk)
    values = symbol.dphi_dx_values if derivative else symbol.phi_values
    # Omega(m dsigma) = dk / (2 pi) * sum_j phi_j exp(i k_j m dsigma)
    omega_integer = n * np.fft.ifft(values) * np.exp(1j * k[0] * dsigma * np.arange(n)) * dk / (2.0 * np.pi)
    shifted = values * np.exp(0.5j * dsigma * (k - k[0]))
    omega_half = (n * np.fft.ifft(shifted) * np.exp(1j * k[0] * dsigma * (np.arange(n) + 0.5))
                  * dk / (2.0 * np.pi))
    index = np.add.outer(np.arange(basis_size), np.arange(basis_size)) + 1
    kernel = omega_integer[index]
    s = (np.arange(basis_size) + 0.5) * dsigma
    w = np.full(basis_size, dsigma)
    matrix, rhs, defect = _assemble(kernel, omega_half[:basis_size], np.sqrt(w), identity=not derivative)
    return HankelSystem(basis_size=basis_size, matrix=matrix, rhs=rhs, x=symbol.x, t=symbol.t, nodes=s, weights=w,
                        mode='grid', self_adjoint_defect=defect)


def laguerre_transforms(mu: np.ndarray, basis_size: int, scale: float = 1.0) -> np.ndarray:
    """V[n, j] = integral over s > 0 of exp(i mu_j s) l_n(s) ds for the scaled Laguerre functions l_n."""
    z = np.asarray(mu, dtype=complex) * scale
    ratio = (-1.0 - 1j * z) / (1.0 - 1j * z)
    powers = ratio[None, :] ** np.arange(basis_size)[:, None]
    return math.sqrt(2.0 * scale) * powers / (1.0 - 1j * z)[None, :]


def hankel_matrix_rational(symbol: ExponentialSum,
                           basis_size: int = DEFAULT_BASIS_SIZE,
                           scale: float = 1.0,
                           derivative: bool = False) -> HankelSystem:
    """Galerkin matrix of H(Phi) in the orthonormal rational basis of H^2 (Laguerre functions on the half-line)."""
    if derivative:
        symbol = symbol.dx()
    V = laguerre_transforms(symbol.mu, basis_size, scale)
    kernel = (V * symbol.g) @ V.T
    rhs = V @ symbol.g
    ones = np.ones(basis_size)
    matrix, rhs, defect = _assemble(kernel, rhs, ones, identity=not derivative)
    return HankelSystem(basis_size=basis_size, matrix=matrix, rhs=rhs, x=symbol.x, t=symbol.t,
                        nodes=np.arange(basis_size, dtype=float), weights=ones, mode='rational',
                        self_adjoint_defect=defect)


def hankel_norm(system: HankelSystem) -> float:
    """Spectral norm of H."""
    if system.basis_size == 0:
        return 0.0
    spectrum = system.spectrum
    return float(max(abs(spectrum[0]), abs(spectrum[-1])))


def solve_m(system: HankelSystem, alpha_floor: float = ALPHA_FLOOR) -> tuple[np.ndarray, float]:
    """y = m - 1 = -(I + H)^-1 J Phi by Cholesky, with the smallest eigenvalue of I + H as alpha."""
    alpha = system.min_eig_estimate
    if alpha <= alpha_floor:
        raise PositivityFailure(f'smallest eigenvalue of I + H is {alpha:.3e} <= {alpha_floor:g} at '
                                f'(x, t) = ({system.x}, {system.t})')
    return system.solve(-system.rhs), alpha


def solve_dm_dx(system: HankelSystem, dsystem_dx: HankelSystem, y: np.ndarray) -> np.ndarray:
    """d/dx y = -(I + H)^-1 (dH/dx y + d/dx J Phi), reusing the factorization of I + H."""
    if dsystem_dx.basis_size != system.basis_size or not np.allclose(dsystem_dx.nodes, system.nodes):
        raise BasisResolutionError('derivative system was assembled on different nodes')
    return system.solve(-(dsystem_dx.matrix @ y + dsystem_dx.rhs))


def residual(system: HankelSystem, y: np.ndarray) -> float:
    """||(I + H) y + J Phi|| / ||J Phi||."""
    scale = norm(system.rhs)
    if scale == 0:
        return float(norm(y))
    return float(norm(system.matrix @ y + system.rhs) / scale)


def refine_basis(build: Callable[[int], HankelSystem],
                 basis_size: int = DEFAULT_BASIS_SIZE,
                 tol: float = REFINEMENT_TOL,
                 cap: int = MAX_BASIS_SIZE) -> tuple[HankelSystem, list[tuple[int, float]]]:
    """Doubles the basis until ||H|| moves by less than `tol`; returns the last system and the (size, norm) history."""
    system = build(basis_size)
    history = [(system.basis_size, hankel_norm(system))]
    while basis_size * 2 <= cap:
        basis_size *= 2
        system = build(basis_size)
        history.append((system.basis_size, hankel_norm(system)))
        if abs(history[-1][1] - history[-2][1]) < tol:
            return system, history
    system.warnings.append(f'||H|| not converged to {tol:g} at basis size {history[-1][0]}: '
                           f'last change {abs(history[-1][1] - history[-2][1]) if len(history) > 1 else float("nan"):.3g}')
    return system, history


def resolvent_gap(system_b: HankelSystem, system: HankelSystem) -> tuple[float, float]:
    """(||(I+H_b)^-1 - (I+H)^-1||, ||(I+H_b)^-1|| ||H - H_b|| ||(I+H)^-1||) on shared nodes."""
    if system_b.basis_size != system.basis_size or not np.allclose(system_b.nodes, system.nodes):
        raise BasisResolutionError('resolvent comparison needs both systems on the same nodes')
    eye = np.eye(system.basis_size)
    inverse_b = system_b.solve(eye)
    inverse = system.solve(eye)
    lhs = norm(inverse_b - inverse, 2)
    rhs = norm(inverse_b, 2) * norm(system.matrix - system_b.matrix, 2) * norm(inverse, 2)
    return float(lhs), float(rhs)


def dump(system: HankelSystem) -> bytes:
    """Matrix then rhs as row-major little-endian complex128, i.e. (re, im) float64 pairs."""
    return (np.ascontiguousarray(system.matrix, dtype='<c16').tobytes()
            + np.ascontiguousarray(system.rhs, dtype='<c16').tobytes())


def load_dump(payload: bytes) -> tuple[np.ndarray, np.ndarray]:
    values = np.frombuffer(payload, dtype='<c16')
    n = int(round((-1 + math.sqrt(1 + 4 * values.size)) / 2))
    if n * n + n != values.size:
        raise BasisResolutionError(f'{values.size} complex values do not form an n x n matrix plus an n vector')
    return values[:n * n].reshape(n, n).copy(), values[n * n:].copy()
