import asyncio
import contextlib
import io
import tempfile
import unittest
from pathlib import Path

import msgspec
import numpy as np

from kdvist.common.exceptions import ConfigError, KdvIstError
from kdvist.potential import make_preset
from kdvist.scattering import momentum_grid, scattering_coefficients

from pipeline.cli import build_parser, parse_overrides, resolve_config
from pipeline.pipeline_service import PipelineService
from pipeline.run_config import RunConfig, apply_overrides, config_hash, load_config, reconstruct_options, t_list
from pipeline.scatter_cache import ScatterCache
from pipeline.worker_pool import WorkerPool


class Squares(object):

    def square(self, value: float) -> float:
        if value < 0:
            raise KdvIstError(f'negative input {value}')
        return value * value


def small_config(directory: str, **overrides) -> RunConfig:
    pairs = [('output.directory', directory), ('grid.k_max', '4'), ('grid.k_step', '0.02'),
             ('grid.k_gap', '0.02'), ('workers', '1')]
    return apply_overrides(RunConfig(), pairs + [(key, str(value)) for key, value in overrides.items()])


def run_quietly(coroutine) -> tuple[int, str]:
    out = io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(io.StringIO()):
        status = asyncio.run(coroutine)
    return status, out.getvalue()


class TestConfig(unittest.TestCase):

    def test_parse_overrides(self):
        assert parse_overrides(['--grid.b_max', '10', '--reconstruction.t_list=[0.1, 1.0]']) == \
            [('grid.b_max', '10'), ('reconstruction.t_list', '[0.1, 1.0]')]
        with self.assertRaises(ConfigError):
            parse_overrides(['--grid.b_max'])
        with self.assertRaises(ConfigError):
            parse_overrides(['b_max'])

    def test_apply_overrides(self):
        config = apply_overrides(RunConfig(), [('grid.b_max', '10'), ('reconstruction.t_list', '[0.1, 1.0]'),
                                               ('potential.preset', 'exp_decay'), ('contour.a', 'null')])
        assert config.grid.b_max == 10.0
        assert config.reconstruction.t_list == [0.1, 1.0]
        assert config.potential.preset == 'exp_decay'
        assert config.contour.a is None
        options = reconstruct_options(apply_overrides(RunConfig(), [('hankel.refine_tol', 'null'),
                                                                    ('hankel.max_basis_size', '1024')]))
        assert options.refine_tol is None
        assert options.max_basis_size == 1024
        assert reconstruct_options(RunConfig()).refine_tol == 1e-6
        # the default is untouched
        assert RunConfig().grid.b_max == 20.0

    def test_bad_overrides(self):
        for pair in (('grid.nothing', '1'), ('nowhere.b_max', '1'), ('grid.b_max', 'wide')):
            with self.assertRaises(ConfigError):
                apply_overrides(RunConfig(), [pair])
        with self.assertRaises(ConfigError):
            reconstruct_options(apply_overrides(RunConfig(), [('reconstruction.path', 'marchenko')]))
        with self.assertRaises(ConfigError):
            t_list(apply_overrides(RunConfig(), [('reconstruction.t_list', '[0.0]')]))
        with self.assertRaises(ConfigError):
            load_config('/nonexistent/run.json')

    def test_config_file_and_flags(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'run.json'
            path.write_bytes(msgspec.json.encode({'grid': {'b_max': 8.0}, 'workers': 2}))
            args, extra = build_parser().parse_known_args(['reconstruct', '--config', str(path),
                                                           '--path', 'proposition', '--grid.k_max', '5'])
            config = resolve_config(args, extra)
        assert config.grid.b_max == 8.0
        assert config.grid.k_max == 5.0
        assert config.workers == 2
        assert config.reconstruction.path == 'proposition'

    def test_config_hash(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig())
        assert config_hash(RunConfig()) != config_hash(apply_overrides(RunConfig(), [('grid.b_max', '10')]))


class TestWorkerPool(unittest.TestCase):

    def test_least_loaded_schedule(self):
        workers = WorkerPool(2).schedule([(n,) for n in range(5)], costs=[3, 1, 1, 1, 1])
        assert [w.worker_id for w in workers] == [1, 2]
        assert [index for index, _ in workers[0].assigned_items] == [0, 4]
        assert [index for index, _ in workers[1].assigned_items] == [1, 2, 3]
        assert workers[0].assigned_cost == 4.0
        assert workers[1].assigned_cost == 3.0

    def test_results_merge_by_index(self):
        ticks = []
        outcome = asyncio.run(WorkerPool(1, batch_size=2).map(Squares(), 'square', [(3.0,), (-1.0,), (2.0,)],
                                                              progress=ticks.append))
        assert outcome.results == [9.0, None, 4.0]
        assert outcome.failures == [(1, 'KdvIstError: negative input -1.0')]
        assert not outcome.ok
        assert sum(ticks) == 3

    def test_worker_count(self):
        with self.assertRaises(KdvIstError):
            WorkerPool(0)


class TestScatterCache(unittest.TestCase):

    def test_round_trip_and_corruption(self):
        q = make_preset('square_well', [1.0, 2.0])
        k = momentum_grid(2.0, 0.1, 0.1)
        slice_ = scattering_coefficients(q, k)
        with tempfile.TemporaryDirectory() as directory:
            cache = ScatterCache(Path(directory))
            assert cache.get(q.digest, k) is None
            path = cache.put(slice_)
            cached = cache.get(q.digest, k)
            assert np.array_equal(cached.L, slice_.L)
            assert cached.bound_states == slice_.bound_states
            assert (cache.hits, cache.misses) == (1, 1)
            # another grid is another entry
            assert cache.get(q.digest, momentum_grid(2.0, 0.05, 0.1)) is None
            path.write_bytes(b'not gzip')
            assert cache.get(q.digest, k) is None
            disabled = ScatterCache(Path(directory), enabled=False)
            assert disabled.put(slice_) is None
            assert disabled.get(q.digest, k) is None


class TestCommands(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def service(self, name: str, **overrides) -> PipelineService:
        service = PipelineService(small_config(str(self.root / name), **overrides))
        service.cache = ScatterCache(self.root / 'cache')
        return service

    def test_scatter_zero(self):
        status, out = run_quietly(self.service('zero', **{'potential.preset': 'zero',
                                                          'potential.params': '[]'}).cmd_scatter())
        assert status == 0
        assert out.startswith('0 bound states, L ≡ 0')
        manifest = msgspec.json.decode((self.root / 'zero' / 'scatter' / 'manifest.json').read_bytes())
        assert manifest['command'] == 'scatter'
        assert 'slice.json' in manifest['outputs']
        assert 'jost' in manifest['timings_ms']

    def test_perturbed_validation_fails(self):
        status, out = run_quietly(self.service('perturbed', **{'validation.perturb_scale': '0.1'}).cmd_validate())
        assert status == 1
        assert out.strip().endswith('FAIL')
        report = msgspec.json.decode((self.root / 'perturbed' / 'validate' / 'report.json').read_bytes())
        assert report['passed'] is False
        failed = {check['name'] for check in report['checks'] if not check['passed']}
        assert 'unitarity' in failed
        manifest = msgspec.json.decode((self.root / 'perturbed' / 'validate' / 'manifest.json').read_bytes())
        assert manifest['warnings'] == ['L perturbed by a factor 1.1 on the scattering-data side']

    def test_reconstruct_is_deterministic(self):
        digests = []
        for run in ('first', 'second'):
            status, _ = run_quietly(self.service(run, **{'potential.params': '[0.3, 2.0]',
                                                         'reconstruction.nx': '5',
                                                         'reconstruction.t_list': '[0.1]'}).cmd_reconstruct())
            assert status == 0
            manifest = msgspec.json.decode((self.root / run / 'reconstruct' / 'manifest.json').read_bytes())
            digests.append((manifest['outputs']['field.csv'], manifest['outputs']['field.json']))
        assert digests[0] == digests[1]
        assert (self.root / 'first' / 'reconstruct' / 'field.csv').read_bytes() == \
            (self.root / 'second' / 'reconstruct' / 'field.csv').read_bytes()
        # the second run read the slice back from the cache
        assert len(list((self.root / 'cache').glob('*.msgpack.gz'))) == 1

    def test_crosscheck_outputs(self):
        status, out = run_quietly(self.service('crosscheck', **{'potential.params': '[0.5, 2.0]',
                                                                'reconstruction.nx': '5',
                                                                'reconstruction.t_list': '[0.1]'}).cmd_crosscheck())
        assert status == 0
        assert 'max_abs_error' in out
        manifest = msgspec.json.decode((self.root / 'crosscheck' / 'crosscheck' / 'manifest.json').read_bytes())
        assert {'crosscheck.csv', 'field.csv', 'pde_manifest.json', 'overlay.csv'} <= set(manifest['outputs'])
        overlay = (self.root / 'crosscheck' / 'crosscheck' / 'overlay.csv').read_text().split('\n')
        assert overlay[0] == 'x,t,q_ist,q_pde'

    def test_sweep_tables(self):
        status, _ = run_quietly(self.service('sweep', **{'potential.preset': 'exp_decay',
                                                         'potential.params': '[1.0, 1.0]',
                                                         'sweep.b_list': '[2.0, 4.0]',
                                                         'sweep.basis_sizes': '[32, 64]'}).cmd_sweep())
        assert status in (0, 1)
        truncation = (self.root / 'sweep' / 'sweep' / 'truncation.csv').read_text().strip().split('\n')
        assert truncation[0] == 'b,q_b,abs_diff,energy,energy_bound'
        assert [row.split(',')[0] for row in truncation[1:]] == ['2', '4']
        basis = (self.root / 'sweep' / 'sweep' / 'basis.csv').read_text().strip().split('\n')
        assert basis[0] == 'basis_size,q,hankel_norm,abs_diff'
        assert [row.split(',')[0] for row in basis[1:]] == ['32', '64']
