import unittest

import numpy as np

from kdvist.common.exceptions import (BasisResolutionError, ContourConfigurationError, GridReconstructionError,
                                      KdvIstError, SymbolEvaluationError)
from kdvist.contour import build_contour
from kdvist.potential import make_preset
from kdvist.reconstruct import (PointResult, ReconstructionField, ReconstructOptions, Reconstructor, one_soliton,
                                reconstruct_grid, reconstruct_point, reconstruct_proposition)
from kdvist.scattering import BoundState, momentum_grid, scattering_coefficients


class TestOneSoliton(unittest.TestCase):

    def setUp(self):
        self.reconstructor = Reconstructor(None, [BoundState(kappa=1.0, c=2.0)])

    def test_closed_form(self):
        x = np.linspace(-5.0, 10.0, 16)
        assert np.allclose(one_soliton(x, 0.0, 1.0, 2.0), -2.0 / np.cosh(x) ** 2, rtol=0, atol=1e-15)

    def test_matches_closed_form(self):
        for t in (0.1, 1.0):
            for x in np.linspace(-5.0, 10.0, 16):
                result = self.reconstructor.line_point(float(x), t)
                assert abs(result.q - one_soliton(x, t, 1.0, 2.0)) < 1e-6, (x, t, result.q)
                assert result.imag_residual < 1e-8
                assert result.min_eig > 0.99

    def test_numeric_derivative(self):
        numeric = Reconstructor(None, [BoundState(kappa=1.0, c=2.0)], ReconstructOptions(derivative='numeric'))
        result = numeric.line_point(0.5, 0.1)
        assert abs(result.q - one_soliton(0.5, 0.1, 1.0, 2.0)) < 1e-5

    def test_basis_refinement(self):
        data = [BoundState(kappa=1.0, c=2.0)]
        fixed = Reconstructor(None, data, ReconstructOptions(basis_size=64, refine_tol=None)).line_point(0.5, 0.1)
        refined = Reconstructor(None, data, ReconstructOptions(basis_size=64)).line_point(0.5, 0.1)
        assert refined.basis_size >= 2 * fixed.basis_size
        assert refined.basis_size <= 4096
        assert abs(refined.q - fixed.q) < 1e-8
        assert abs(refined.q - one_soliton(0.5, 0.1, 1.0, 2.0)) < 1e-6
        with self.assertRaises(BasisResolutionError):
            Reconstructor(None, data, ReconstructOptions(max_basis_size=32)).line_point(0.5, 0.1)

    def test_pure_data_has_no_contour_path(self):
        with self.assertRaises(GridReconstructionError) as context:
            self.reconstructor.grid(np.array([0.0, 1.0]), np.array([0.1]), path='contour')
        assert len(context.exception.failures) == 2

    def test_unknown_path(self):
        with self.assertRaises(ValueError):
            self.reconstructor.point(0.0, 0.1, path='marchenko')


class TestZeroPotential(unittest.TestCase):

    def test_both_paths_vanish(self):
        reconstructor = Reconstructor(make_preset('zero'))
        for path in ('contour', 'proposition'):
            assert reconstructor.point(1.0, 0.5, path).q == 0.0
        assert reconstruct_proposition(make_preset('zero'), 0.0, 0.1) == 0.0

    def test_time_must_be_positive(self):
        with self.assertRaises(SymbolEvaluationError):
            Reconstructor(make_preset('zero')).contour_point(0.0, 0.0)

    def test_slice_must_match(self):
        q = make_preset('square_well', [1.0, 2.0])
        other = make_preset('square_well', [1.0, 1.0])
        slice_ = scattering_coefficients(other, momentum_grid(1.0, 0.1, 0.1))
        with self.assertRaises(KdvIstError):
            Reconstructor.from_slice(q, slice_)

    def test_contour_must_clear_the_pole(self):
        q = make_preset('square_well', [1.0, 2.0])
        slice_ = scattering_coefficients(q, momentum_grid(2.0, 0.05, 0.05))
        reconstructor = Reconstructor.from_slice(q, slice_)
        contour = reconstructor.contour_for(1.0, 0.1)
        direct = reconstruct_point(slice_, contour, 1.0, 0.1, reconstructor.L(contour.nodes, slice_.bound_states))
        assert direct.q == reconstructor.contour_point(1.0, 0.1).q
        low = build_contour(0.5)
        with self.assertRaises(ContourConfigurationError):
            reconstruct_point(slice_, low, 1.0, 0.1, np.zeros(len(low), dtype=complex))


class TestField(unittest.TestCase):

    def setUp(self):
        self.x = np.linspace(-2.0, 2.0, 5)
        self.t = np.array([0.1, 0.5])

    def test_csv_is_deterministic(self):
        first = Reconstructor(None, [BoundState(kappa=1.0, c=2.0)]).grid(self.x, self.t, path='proposition')
        second = Reconstructor(None, [BoundState(kappa=1.0, c=2.0)]).grid(self.x, self.t, path='proposition')
        assert first.to_csv() == second.to_csv()
        assert first.dumps() == second.dumps()
        lines = first.to_csv().split('\n')
        assert lines[0] == 'x,t,q,hankel_norm,min_eig,imag_residual'
        assert len(lines) == 1 + self.x.size * self.t.size + 1
        # x runs fastest within each time block
        assert lines[1].startswith('-2,0.10000000000000001,')
        assert lines[2].startswith('-1,0.10000000000000001,')

    def test_progress_is_reported(self):
        ticks = []
        Reconstructor(None, [BoundState(kappa=1.0, c=2.0)]).grid(self.x, self.t, 'proposition', ticks.append)
        assert sum(ticks) == self.x.size * self.t.size

    def test_grid_helper_matches_method(self):
        reconstructor = Reconstructor(None, [BoundState(kappa=1.0, c=2.0)])
        field = reconstruct_grid(reconstructor, self.x, self.t, 'proposition')
        assert field.to_csv() == reconstructor.grid(self.x, self.t, path='proposition').to_csv()

    def test_tail_decay(self):
        x = np.linspace(0.0, 12.0, 13)
        results = {(i, j): PointResult(x=float(xi), t=float(t), q=float(one_soliton(xi, t, 1.0, 2.0)))
                   for i, xi in enumerate(x) for j, t in enumerate(self.t)}
        field = ReconstructionField.from_points(x, self.t, results, 'proposition')
        for t, rate in field.tail_decay().items():
            assert abs(rate + 2.0) < 1e-3, (t, rate)
        assert field.max_imag_residual == 0.0
        assert field.values.shape == (13, 2)
