import math
import unittest

import numpy as np

from kdvist.common.exceptions import ContourConfigurationError, SymbolEvaluationError
from kdvist.contour import (ExponentialSum, Oscillation, admissible_height, build_contour, build_rectangle,
                            cauchy_transform, pole_symbol, real_line_nodes, symbol_phi, xi_inverse)
from kdvist.scattering import BoundState


def simple_pole_integral(gamma: float, a: float, K: float) -> complex:
    """(2 pi i)^-1 * integral over the contour of d lambda / (lambda - i gamma)."""
    side = 0.5 if gamma > a else -0.5
    return side - math.atan(gamma / K) / math.pi


class TestContourQuadrature(unittest.TestCase):

    def test_pole_below_and_above_rectangle(self):
        for gamma, a in ((2.0, 1.0), (0.5, 1.0), (3.0, 2.5)):
            contour = build_contour(a, K=10.0)
            value = contour.integrate(1.0 / (contour.nodes - 1j * gamma)) / (2j * math.pi)
            assert abs(value - simple_pole_integral(gamma, a, 10.0)) < 1e-7

    def test_mirror_symmetry(self):
        contour = build_contour(1.5, K=10.0, n_ray=128, n_side=33, n_top=48)
        assert np.array_equal(contour.nodes[::-1], -np.conj(contour.nodes))
        assert np.array_equal(contour.weights[::-1], np.conj(contour.weights))
        # i / (lambda - 2i) is real-symmetric, so its integral is real
        value = contour.integrate(1j / (contour.nodes - 2j))
        assert abs(value.imag) < 1e-12
        assert abs(value.real + 2 * math.pi * (0.5 - math.atan(0.2) / math.pi)) < 1e-8

    def test_segment_tags(self):
        contour = build_contour(1.0, K=5.0, n_ray=64, n_side=16, n_top=32)
        assert contour.n_ray == 64 and contour.n_side == 16 and contour.n_top == 32
        assert len(contour) == 64 + 2 * 16 + 32
        top = contour.nodes[contour.segment('rect_top')]
        assert np.all(top.imag == 1.0)
        rays = contour.nodes[contour.on_rays]
        assert np.all(rays.imag == 0) and np.all(np.abs(rays.real) > 1.0)
        assert np.all(contour.nodes[contour.segment('rect_side_left')].real == -1.0)
        # the rectangle alone is a path from -a to a
        assert abs(contour.rectangle.integrate(np.ones(len(contour.rectangle))) - 2.0) < 1e-13

    def test_graded_rays_cover_the_phase(self):
        oscillation = Oscillation(t=1.0, x_abs=2.0)
        contour = build_contour(1.0, K=10.0, oscillation=oscillation)
        assert contour.n_ray > 256
        value = contour.integrate(1.0 / (contour.nodes - 2j)) / (2j * math.pi)
        assert abs(value - simple_pole_integral(2.0, 1.0, 10.0)) < 1e-8

    def test_real_line_shares_ray_nodes(self):
        contour = build_contour(1.0, K=8.0, n_ray=96)
        line = real_line_nodes(1.0, K=8.0, n_ray=96)
        assert np.array_equal(line.nodes[line.on_rays], contour.nodes[contour.on_rays])
        assert np.all(line.nodes.imag == 0)
        assert abs(line.integrate(np.ones(len(line))) - 16.0) < 1e-12

    def test_configuration_errors(self):
        with self.assertRaises(ContourConfigurationError):
            build_contour(1.0, kappa_max=1.0)
        with self.assertRaises(ContourConfigurationError):
            build_contour(1.0, K=1.0)
        with self.assertRaises(ContourConfigurationError):
            build_contour(1.0, n_ray=1)


class TestAdmissibleHeight(unittest.TestCase):

    def test_default_heights(self):
        assert admissible_height(0.0, 0.1, 0.0) == (1.0, [])
        a, warnings = admissible_height(0.5, 0.1, 1.0)
        assert a == 1.5 and warnings == []

    def test_lowered_for_growth(self):
        a, warnings = admissible_height(0.0, 1.0, 0.0)
        assert abs(a - 0.75 ** (1 / 3)) < 1e-9
        assert len(warnings) == 1

    def test_floor_keeps_clear_of_poles(self):
        a, warnings = admissible_height(2.0, 1.0, 0.0)
        assert abs(a - 2.1) < 1e-12
        assert len(warnings) == 2


class TestSymbols(unittest.TestCase):

    def test_xi_inverse(self):
        lam = np.array([1.0, 0.5 + 0.5j])
        expected = np.exp(-1j * (8 * lam ** 3 * 0.2 + 2 * lam * 1.5))
        assert np.allclose(xi_inverse(lam, 1.5, 0.2), expected, rtol=1e-15)
        assert abs(abs(xi_inverse(np.array([3.0]), 4.0, 1.0)[0]) - 1.0) < 1e-12
        with self.assertRaises(SymbolEvaluationError):
            xi_inverse(np.array([10.0 + 10.0j]), 0.0, 1.0)

    def test_exponential_sum(self):
        s = ExponentialSum(mu=np.array([1j, 2.0 + 1j]), g=np.array([1.0, 0.5]), x=1.0, t=0.1)
        sigma = np.array([0.0, 0.5])
        expected = np.exp(-sigma) + 0.5 * np.exp((2j - 1) * sigma)
        assert np.allclose(s(sigma), expected)
        assert np.allclose(s.dx().g, -2j * s.mu * s.g)
        assert len((s + ExponentialSum.empty()).mu) == 2
        assert ExponentialSum.empty().is_zero
        assert s.max_frequency == 2.0
        with self.assertRaises(SymbolEvaluationError):
            ExponentialSum(mu=np.array([-1j]), g=np.array([1.0]))
        with self.assertRaises(SymbolEvaluationError):
            ExponentialSum(mu=np.array([1j, 2j]), g=np.array([1.0]))

    def test_pole_symbol(self):
        s = pole_symbol([BoundState(kappa=1.0, c=2.0)], x=0.5, t=0.1)
        assert np.array_equal(s.mu, np.array([1j]))
        assert abs(s.g[0] - 2.0 * math.exp(1.0 - 0.8)) < 1e-14
        assert pole_symbol([], 0.0, 0.1).is_zero

    def test_symbol_of_rational_density(self):
        k = np.linspace(-0.5, 0.5, 11)
        for gamma, expected in ((2.0, 1.0 / (2.0j - k) ** 4), (0.5, np.zeros_like(k))):
            contour = build_contour(1.0, K=20.0, n_ray=1024)
            density = (contour.nodes - 1j * gamma) ** -4
            grid = symbol_phi(density, contour, 0.0, 1e-10, k)
            assert np.max(np.abs(grid.phi_values - expected)) < 2e-6

    def test_symbol_conjugate_symmetry(self):
        k = np.linspace(-0.5, 0.5, 11)
        contour = build_contour(1.0, K=20.0, n_ray=1024)
        density = (contour.nodes - 2j) ** -4
        assert symbol_phi(density, contour, 0.0, 1e-10, k).symmetry_defect < 1e-4
        # an imaginary multiple breaks Phi(-k) = conj Phi(k)
        assert symbol_phi(1j * density, contour, 0.0, 1e-10, k).symmetry_defect > 1.0

    def test_symbol_x_derivative(self):
        k = np.linspace(-0.5, 0.5, 11)
        contour = build_contour(1.0, K=20.0, n_ray=1024)
        density = (contour.nodes - 2j) ** -4
        x, t = 0.3, 0.01
        exact = symbol_phi(density, contour, x, t, k).dphi_dx_values
        errors = []
        for h in (1e-3, 1e-4):
            forward = symbol_phi(density, contour, x + h, t, k).phi_values
            backward = symbol_phi(density, contour, x - h, t, k).phi_values
            errors.append(np.max(np.abs((forward - backward) / (2.0 * h) - exact)))
        # O(h^2): one decade in h is two in the error
        assert errors[0] / errors[1] > 50.0, errors

    def test_symbol_needs_positive_time(self):
        contour = build_contour(1.0)
        with self.assertRaises(SymbolEvaluationError):
            symbol_phi(np.zeros(len(contour)), contour, 0.0, 0.0, np.array([0.1]))

    def test_symbol_on_rays_needs_grid_values(self):
        contour = build_contour(1.0, K=10.0)
        with self.assertRaises(SymbolEvaluationError):
            symbol_phi(np.zeros(len(contour)), contour, 0.0, 0.1, np.array([-2.0, 2.0]))

    def test_cauchy_transform_of_one(self):
        a = 1.0
        rect = build_rectangle(a)
        k = np.array([-0.3, 0.0, 0.3])
        expected = np.log(np.abs(a - k)) - np.log(np.abs(a + k)) - 1j * math.pi
        assert np.max(np.abs(cauchy_transform(np.ones(len(rect)), rect, k) - expected)) < 1e-10
