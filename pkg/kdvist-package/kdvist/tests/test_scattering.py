import math
import unittest

import numpy as np

from kdvist.common.exceptions import JostStepFailure, NearSingularTransmission, PoleProximity, SymbolEvaluationError
from kdvist.potential import make_preset, norms, truncate
from kdvist.scattering import (BoundState, L_analytic, ScatteringSlice, bound_states, check_momentum_grid,
                               jost_batch, jost_bound_ok, jost_solve, momentum_grid, norming_constant,
                               reflection_integral, require_regular, scattering_coefficients, slice_from_edges,
                               stability_condition, stability_constant, transmission_integral, weyl_m, wronskian)


class TestMomentumGrid(unittest.TestCase):

    def test_symmetric_without_zero(self):
        k = momentum_grid(5.0, 0.01, 0.01)
        assert np.array_equal(k, -k[::-1])
        assert not np.any(k == 0)
        assert abs(np.min(np.abs(k)) - 0.01) < 1e-15
        assert abs(np.max(k) - 5.0) < 1e-9

    def test_rejects_asymmetric_grid(self):
        with self.assertRaises(ValueError):
            check_momentum_grid(np.array([-1.0, 0.5, 1.0]))
        with self.assertRaises(ValueError):
            check_momentum_grid(np.array([-1.0, 0.0, 1.0]))


class TestZeroPotential(unittest.TestCase):

    def setUp(self):
        self.q = make_preset('zero')

    def test_jost_is_identity(self):
        for side in ('left', 'right'):
            solution = jost_solve(self.q, 1.3 + 0.2j, side)
            assert np.all(solution.m_values == 1.0)
            assert not np.any(solution.dm_values)
            assert solution.sup_norm == 1.0

    def test_coefficients(self):
        slice_ = scattering_coefficients(self.q, momentum_grid(5.0, 0.05, 0.05))
        assert np.allclose(slice_.T, 1.0, atol=0, rtol=1e-15)
        assert not np.any(slice_.R)
        assert not np.any(slice_.L)
        assert slice_.bound_states == ()
        assert bound_states(self.q) == []

    def test_weyl_function_is_ik(self):
        # m_+ = ik with k = i
        assert abs(weyl_m(self.q, -1.0) - (-1.0)) < 1e-15

    def test_L_vanishes_in_upper_half_plane(self):
        lam = np.array([0.5 + 0.5j, -2.0 + 1.0j, 3.0j])
        assert not np.any(L_analytic(self.q, lam))

    def test_wronskian(self):
        k = np.array([0.5, 1.0 + 1.0j])
        assert np.allclose(wronskian(self.q, k), 2j * k)


class TestSquareWell(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.q = make_preset('square_well', [1.0, 2.0])
        cls.k = momentum_grid(5.0, 0.01, 0.01)
        cls.slice = scattering_coefficients(cls.q, cls.k)

    def test_conjugate_symmetry(self):
        for values in (self.slice.T, self.slice.R, self.slice.L):
            assert np.max(np.abs(values[::-1] - np.conj(values))) < 1e-12

    def test_unitarity_and_reflection_below_one(self):
        s = self.slice
        assert np.max(np.abs(np.abs(s.T) ** 2 + np.abs(s.R) ** 2 - 1)) < 1e-6
        assert np.max(np.abs(np.abs(s.T) ** 2 + np.abs(s.L) ** 2 - 1)) < 1e-6
        assert np.all(np.abs(s.L) < 1.0)
        assert np.allclose(np.abs(s.L), np.abs(s.R), rtol=0, atol=1e-9)
        assert s.unitarity_residual < 1e-6
        assert s.wronskian_mismatch < 1e-5
        assert s.flagged == ()

    def test_bound_states(self):
        states = bound_states(self.q)
        assert len(states) == 1
        kappa, c = states[0].kappa, states[0].c
        assert 0 < kappa < 1 and c > 0
        # Lieb-Thirring
        assert sum(bs.kappa for bs in states) <= 0.5 * norms(self.q)[0]
        assert self.slice.bound_states == tuple(states)
        assert abs(norming_constant(self.q, kappa) - c) < 1e-14

    def test_weyl_consistency(self):
        # L from the right solution alone equals the Wronskian L, which also uses the left solution
        for index in np.flatnonzero(np.isin(np.round(self.k, 10), [0.5, 1.0, 2.0, -1.5])):
            assert abs(L_analytic(self.q, self.k[index]) - self.slice.L[index]) < 1e-6

    def test_L_analytic_matches_weyl_form(self):
        lam = 1.0 + 1.0j
        m_plus = weyl_m(self.q, lam ** 2)
        assert abs(L_analytic(self.q, lam) - (1j * lam - m_plus) / (1j * lam + m_plus)) < 1e-10

    def test_pole_proximity(self):
        states = bound_states(self.q)
        near = 1j * states[0].kappa + 0.01
        with self.assertRaises(PoleProximity):
            L_analytic(self.q, np.array([near]), states, exclusion_radius=0.05)
        # far enough is fine
        L_analytic(self.q, np.array([1j * states[0].kappa + 0.2]), states, exclusion_radius=0.05)

    def test_lower_half_plane_rejected(self):
        with self.assertRaises(SymbolEvaluationError):
            L_analytic(self.q, np.array([1.0 - 0.5j]))
        with self.assertRaises(SymbolEvaluationError):
            jost_solve(self.q, 1.0 - 0.5j, 'right')

    def test_integral_identities(self):
        for k in (0.5, 1.0, 2.0):
            index = int(np.argmin(np.abs(self.k - k)))
            T, L = self.slice.T[index], self.slice.L[index]
            assert abs(transmission_integral(self.q, k) - 1 / T) < 1e-3
            assert abs(reflection_integral(self.q, k) - L / T) < 1e-3

    def test_integral_identities_are_second_order(self):
        # the jumps at x = 0 and x = 2 sit on step nodes
        errors = []
        for step in (0.005, 0.0025):
            q = make_preset('square_well', [1.0, 2.0], grid_step=step)
            solution = jost_solve(q, 1.0, 'right')
            W = 2j * solution.m_values[0] + solution.dm_values[0]
            errors.append(abs(transmission_integral(q, 1.0) - W / 2j))
        assert errors[0] < 1e-4, errors
        assert errors[0] / errors[1] > 3.0, errors

    def test_sup_norm_covers_the_far_side(self):
        index = int(np.argmin(np.abs(self.k - 1.0)))
        T, R = self.slice.T[index], self.slice.R[index]
        far_side = abs(1 / T) + abs(R / T)
        assert far_side > 1.0
        assert jost_solve(self.q, self.k[index], 'right').sup_norm >= far_side - 1e-9

    def test_slice_from_edges_matches_batch(self):
        right = jost_batch(self.q, self.k, 'right')
        left = jost_batch(self.q, self.k, 'left')
        halves = [jost_batch(self.q, part, 'right') for part in np.array_split(self.k, 3)]
        stitched = tuple(np.concatenate(parts) for parts in zip(*halves))
        assert np.array_equal(stitched[0], right[0]) and np.array_equal(stitched[1], right[1])
        rebuilt = slice_from_edges(self.q, self.k, stitched, left, self.slice.bound_states)
        assert np.array_equal(rebuilt.L, self.slice.L)

    def test_file_round_trip(self):
        assert all(type(bs.kappa) is float and type(bs.c) is float for bs in self.slice.bound_states)
        restored = ScatteringSlice.loads(self.slice.dumps())
        assert restored.bound_states == self.slice.bound_states
        assert np.array_equal(restored.L, self.slice.L)
        assert restored.source_potential_hash == self.q.digest


class TestBoundsAndFailures(unittest.TestCase):

    def test_jost_bound(self):
        q = make_preset('exp_decay', [1.0, 1.0])
        sup, bound = jost_bound_ok(q, 2.0)
        assert sup <= bound
        assert abs(bound - math.exp(norms(q)[0] / 2.0)) < 1e-15

    def test_step_limit(self):
        q = make_preset('square_well', [1.0, 2.0])
        with self.assertRaises(JostStepFailure):
            jost_batch(q, np.array([200.0]), 'right')

    def test_stability(self):
        assert abs(stability_condition(1.0, 2.0) - 0.25 * math.exp(0.5)) < 1e-15
        q = make_preset('exp_decay', [1.0, 1.0])
        sup, distance = stability_constant(q, truncate(q, 4.0), 2.0, momentum_grid(5.0, 0.05, 0.05))
        assert distance > 0
        assert sup > 0

    def test_require_regular(self):
        q = make_preset('square_well', [1.0, 2.0])
        k = momentum_grid(1.0, 0.1, 0.1)
        slice_ = scattering_coefficients(q, k, singular_threshold=1e6)
        assert len(slice_.flagged) == k.size
        with self.assertRaises(NearSingularTransmission):
            require_regular(slice_)

    def test_bound_state_type(self):
        state = BoundState(kappa=1.0, c=2.0)
        assert state == BoundState(kappa=1.0, c=2.0)
