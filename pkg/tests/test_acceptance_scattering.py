import unittest

import numpy as np

from kdvist.potential import make_preset, norms
from kdvist.scattering import L_analytic, momentum_grid, scattering_coefficients
from kdvist.validate import (check_layer_stripping, check_residues_and_lt, check_truncation_rates, check_unitarity,
                             check_zf_trace)
from tests.utils import TransferMatrixOracle, finite_well_kappas, finite_well_norming_constant

# |k| in [0.05, 20]
WIDE_GRID = momentum_grid(20.0, 0.05, 0.05)
# the transfer-matrix and layer-stripping identities are resolved below 1e-6 only on the finer x grid
FINE_STEP = 0.001


class TestUnitarity(unittest.TestCase):

    def test_presets(self):
        for name, params in (('square_well', (1.0, 2.0)), ('gaussian_bump', (-1.0, 4.0, 0.7))):
            slice_ = scattering_coefficients(make_preset(name, params), WIDE_GRID)
            check = check_unitarity(slice_)
            assert check.passed, (name, check.residual, check.detail)
            assert check.residual < 1e-6
            assert slice_.flagged == ()


class TestTransferMatrix(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.q = make_preset('square_well', [1.0, 2.0], grid_step=FINE_STEP)
        cls.oracle = TransferMatrixOracle.square_well(1.0, 2.0)
        cls.slice = scattering_coefficients(cls.q, WIDE_GRID)

    def test_real_grid(self):
        for name in ('T', 'R', 'L'):
            exact = np.array([getattr(self.oracle, name)(k) for k in WIDE_GRID])
            error = np.max(np.abs(getattr(self.slice, name) - exact))
            assert error < 1e-6, (name, error)

    def test_upper_half_plane(self):
        # off the imaginary axis, where the only pole of L sits
        lam = np.array([u + 1j * v for u in (-2.0, -1.0, 0.5, 1.5, 3.0) for v in (0.3, 0.6)])
        assert lam.size == 10
        exact = np.array([self.oracle.L(z) for z in lam])
        error = np.max(np.abs(L_analytic(self.q, lam) - exact))
        assert error < 1e-6, error

    def test_real_axis_continuation(self):
        k = WIDE_GRID[::40]
        assert np.max(np.abs(L_analytic(self.q, k) - self.slice.L[::40])) < 1e-6


class TestBoundStates(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.q = make_preset('square_well', [1.0, 2.0])
        cls.slice = scattering_coefficients(cls.q, momentum_grid(5.0, 0.05, 0.05))

    def test_spectrum_matches_finite_well(self):
        kappas = finite_well_kappas(1.0, 2.0)
        assert len(kappas) == len(self.slice.bound_states) == 1
        state = self.slice.bound_states[0]
        assert abs(state.kappa - kappas[0]) < 1e-7
        c = finite_well_norming_constant(kappas[0], 1.0, 2.0)
        assert abs(state.c - c) / c < 1e-4

    def test_residues(self):
        l1, _ = norms(self.q)
        checks = check_residues_and_lt(self.slice, lambda lam: L_analytic(self.q, lam), l1)
        residues = [check for check in checks if check.name.startswith('residue')]
        assert len(residues) == 1
        for check in checks:
            assert check.passed, (check.name, check.residual, check.detail)
        assert residues[0].residual < 1e-4


class TestTraceFormula(unittest.TestCase):

    def test_zakharov_faddeev(self):
        for name, params in (('square_well', (1.0, 2.0)), ('exp_decay', (1.0, 1.0))):
            q = make_preset(name, params, b_max=20.0)
            check = check_zf_trace(q, scattering_coefficients(q, momentum_grid()))
            assert check.passed, (name, check.lhs, check.rhs, check.detail)
            assert check.residual < 1e-3


class TestLayerStripping(unittest.TestCase):

    def test_split_at_one(self):
        q = make_preset('square_well', [1.0, 2.0], grid_step=FINE_STEP)
        identity, bound = check_layer_stripping(q, 1.0, WIDE_GRID)
        assert identity.passed, (identity.residual, identity.detail)
        assert identity.residual < 1e-6
        assert bound.passed, bound.detail

    def test_split_beyond_support(self):
        q = make_preset('square_well', [1.0, 2.0])
        identity, bound = check_layer_stripping(q, 3.0, momentum_grid(5.0, 0.05, 0.05))
        assert identity.residual < 1e-12
        assert bound.passed


class TestTruncation(unittest.TestCase):

    def test_exponential_tail(self):
        q = make_preset('exp_decay', [1.0, 1.0])
        checks = check_truncation_rates(q, [2.0, 4.0, 8.0], a=2.0, k_grid=WIDE_GRID)
        assert [check.name for check in checks] == ['truncation_sup_band', 'truncation_l2[b=2]',
                                                     'truncation_l2[b=4]', 'truncation_l2[b=8]']
        for check in checks:
            assert check.passed, (check.name, check.lhs, check.rhs, check.detail)
        energies = [check.lhs for check in checks[1:]]
        assert energies[0] > energies[1] > energies[2]
