"""Closed-form references the engine is compared against."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq


@dataclass(frozen=True)
class TransferMatrixOracle:
    """Exact scattering for q piecewise constant: `layers` are (start, end, value) covering [0, b] in order."""
    layers: tuple[tuple[float, float, float], ...]

    @classmethod
    def square_well(cls, depth: float, width: float) -> 'TransferMatrixOracle':
        return cls(((0.0, width, -depth),))

    @property
    def b(self) -> float:
        return self.layers[-1][1]

    @staticmethod
    def _step(k: complex, value: float, d: float) -> np.ndarray:
        # entire in p^2, so the branch of p is irrelevant
        p = np.sqrt(complex(k * k - value))
        if abs(p * d) < 1e-12:
            return np.array([[1.0, d], [-p * p * d, 1.0]], dtype=complex)
        return np.array([[np.cos(p * d), np.sin(p * d) / p], [-p * np.sin(p * d), np.cos(p * d)]])

    def _propagate(self, k: complex, state: np.ndarray, forward: bool) -> np.ndarray:
        layers = self.layers if forward else self.layers[::-1]
        for start, end, value in layers:
            d = end - start
            state = self._step(k, value, d if forward else -d) @ state
        return state

    def right_coefficients(self, k: complex) -> tuple[complex, complex]:
        """(a, b) with psi_+ = exp(ikx) on x > b and a exp(ikx) + b exp(-ikx) on x < 0."""
        k = complex(k)
        edge = np.exp(1j * k * self.b)
        psi, dpsi = self._propagate(k, np.array([edge, 1j * k * edge]), forward=False)
        return (1j * k * psi + dpsi) / (2j * k), (1j * k * psi - dpsi) / (2j * k)

    def T(self, k: complex) -> complex:
        return 1.0 / self.right_coefficients(k)[0]

    def L(self, k: complex) -> complex:
        a, b = self.right_coefficients(k)
        return b / a

    def R(self, k: float) -> complex:
        """psi_- = exp(-ikx) on x < 0 is A exp(-ikx) + B exp(ikx) on x > b; R = B / A."""
        k = complex(k)
        psi, dpsi = self._propagate(k, np.array([1.0, -1j * k]), forward=True)
        A = (1j * k * psi - dpsi) * np.exp(1j * k * self.b) / (2j * k)
        B = (1j * k * psi + dpsi) * np.exp(-1j * k * self.b) / (2j * k)
        return B / A


def finite_well_condition(kappa: float, depth: float, width: float) -> float:
    p = math.sqrt(depth - kappa * kappa)
    return 2.0 * p * kappa * math.cos(p * width) + (kappa * kappa - p * p) * math.sin(p * width)


def finite_well_kappas(depth: float, width: float, n_scan: int = 20000) -> list[float]:
    """Bound states of q = -depth on (0, width), in decreasing order."""
    top = math.sqrt(depth) * (1.0 - 1e-9)
    grid = np.linspace(1e-9, top, n_scan)
    values = [finite_well_condition(kappa, depth, width) for kappa in grid]
    roots = [brentq(finite_well_condition, grid[i], grid[i + 1], args=(depth, width), xtol=1e-15)
             for i in range(n_scan - 1) if values[i] * values[i + 1] < 0]
    return sorted(roots, reverse=True)


def finite_well_norming_constant(kappa: float, depth: float, width: float) -> float:
    """c = ||psi_-||^-2 for psi_- = exp(kappa x) on x < 0."""
    p = math.sqrt(depth - kappa * kappa)

    def inside(x: float) -> float:
        return math.cos(p * x) + kappa / p * math.sin(p * x)

    interior, _ = quad(lambda x: inside(x) ** 2, 0.0, width, epsabs=1e-14, epsrel=1e-14)
    return 1.0 / (1.0 / (2.0 * kappa) + interior + inside(width) ** 2 / (2.0 * kappa))


def one_soliton_closed_form(x: np.ndarray, t: float, kappa: float, c: float) -> np.ndarray:
    """-8 kappa^2 G / (1 + G)^2 with G = (c / 2 kappa) exp(2 kappa x - 8 kappa^3 t)."""
    G = c / (2.0 * kappa) * np.exp(2.0 * kappa * np.asarray(x, dtype=float) - 8.0 * kappa ** 3 * t)
    return -8.0 * kappa ** 2 * G / (1.0 + G) ** 2
