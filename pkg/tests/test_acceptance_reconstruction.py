import unittest

import numpy as np

from kdvist.contour import real_line_symbol
from kdvist.hankel import DEFAULT_BASIS_SIZE, DEFAULT_S_MAX, hankel_matrix, hankel_norm, required_basis_size
from kdvist.pde_ref import crosscheck_table, evolve_kdv, sized_for
from kdvist.potential import make_preset, truncate
from kdvist.reconstruct import ReconstructOptions, Reconstructor, reconstruct_proposition
from kdvist.scattering import BoundState, L_analytic
from kdvist.validate import check_hankel_norm_lt1
from tests.utils import one_soliton_closed_form


class TestHankelNorm(unittest.TestCase):

    def test_square_well_stays_below_one(self):
        reconstructor = Reconstructor(make_preset('square_well', [1.0, 2.0]))
        for x in (0.0, 2.0):
            for t in (0.1, 0.5):
                check = check_hankel_norm_lt1(reconstructor, x, t)
                assert check.passed, (x, t, check.lhs)
                assert 0.0 <= check.lhs < 1.0
                assert check.detail.startswith('margin')


class TestOneSoliton(unittest.TestCase):

    def test_rank_one_data(self):
        reconstructor = Reconstructor(None, [BoundState(kappa=1.0, c=2.0)])
        x = np.linspace(-5.0, 10.0, 31)
        for t in (0.1, 1.0):
            exact = one_soliton_closed_form(x, t, 1.0, 2.0)
            # c = 2 kappa puts the crest at x = 4t
            assert np.allclose(exact, -2.0 / np.cosh(x - 4.0 * t) ** 2, rtol=0, atol=1e-14)
            q = np.array([reconstructor.point(float(xi), t, 'proposition').q for xi in x])
            assert np.max(np.abs(q - exact)) < 1e-6, t

    def test_shifted_crest(self):
        reconstructor = Reconstructor(None, [BoundState(kappa=1.0, c=0.5)])
        for xi in (-1.0, 0.0, 1.5):
            result = reconstructor.point(xi, 0.1, 'proposition')
            assert abs(result.q - one_soliton_closed_form(xi, 0.1, 1.0, 0.5)) < 1e-6


class TestPathEquivalence(unittest.TestCase):

    def test_square_well_sample(self):
        reconstructor = Reconstructor(make_preset('square_well', [1.0, 2.0]))
        worst = 0.0
        for t in (0.1, 0.3, 0.5):
            for x in (-2.0, 0.0, 1.0, 2.5, 5.0):
                contour = reconstructor.point(x, t, 'contour')
                line = reconstructor.point(x, t, 'proposition')
                worst = max(worst, abs(contour.q - line.q))
                assert contour.imag_residual < 1e-3
        assert worst < 1e-4, worst


class TestPdeCrosscheck(unittest.TestCase):

    def test_shallow_well(self):
        q = make_preset('square_well', [0.5, 2.0])
        times = [0.1, 0.5]
        x = np.linspace(-5.0, 15.0, 41)
        field = Reconstructor(q).grid(x, np.array(times), path='contour')
        run = evolve_kdv(q, times, sized_for(max(times)))
        assert not run.contaminated
        table = crosscheck_table(run, {t: field.values[:, j] for j, t in enumerate(times)}, x)
        assert list(table['t']) == times
        assert table['max_abs_error'].max() < 1e-2, table.to_string()


class TestTruncatedData(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.q = make_preset('exp_decay', [1.0, 1.0])

    def test_symbol_gap_shrinks(self):
        x, t = 0.5, 0.1
        line = Reconstructor(self.q, options=ReconstructOptions(a=2.0)).line_for(x, t)
        L = L_analytic(self.q, line.nodes)
        gaps = []
        for b in (2.0, 4.0, 8.0, 16.0):
            difference = real_line_symbol(line, L - L_analytic(truncate(self.q, b), line.nodes), [], x, t)
            basis = max(DEFAULT_BASIS_SIZE, required_basis_size(difference, DEFAULT_S_MAX))
            gaps.append(hankel_norm(hankel_matrix(difference, basis, DEFAULT_S_MAX)))
        assert all(wide > narrow for wide, narrow in zip(gaps, gaps[1:])), gaps
        assert gaps[-1] < 1e-5, gaps

    def test_reconstruction_settles(self):
        reference = reconstruct_proposition(self.q, 0.5, 0.1)
        gaps = [abs(reconstruct_proposition(truncate(self.q, b), 0.5, 0.1) - reference) for b in (5.0, 10.0, 15.0)]
        assert gaps[0] < 1e-2, gaps
        assert gaps[1] <= gaps[0] + 1e-7, gaps
        assert max(gaps[1:]) < 1e-4, gaps


class TestTimeContinuity(unittest.TestCase):

    def test_no_jumps_in_t(self):
        reconstructor = Reconstructor(make_preset('square_well', [0.5, 2.0]))
        times = np.linspace(0.1, 0.2, 11)
        values = np.array([reconstructor.point(1.0, float(t), 'proposition').q for t in times])
        steps = np.abs(np.diff(values))
        for i in range(1, steps.size - 1):
            # a step is bounded by its neighbours, the local derivative estimate
            assert steps[i] <= 10.0 * max(steps[i - 1], steps[i + 1]) + 1e-9, (times[i], steps)
