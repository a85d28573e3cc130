import asyncio
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from kdvist.common.exceptions import GridReconstructionError, KdvIstError
from kdvist.common.hashing import digest_bytes
from kdvist.common.logging import logging
from kdvist.pde_ref import crosscheck_table, evolve_kdv
from kdvist.potential import Potential, make_preset, truncate
from kdvist.reconstruct import PointResult, ReconstructionField, ReconstructOptions, Reconstructor
from kdvist.scattering import (BoundState, ScatteringSlice, bound_states, check_momentum_grid, jost_batch,
                               slice_from_edges)
from kdvist.validate import (PRESET_BATTERY, Tolerances, ValidationReport, check_truncation_rates,
                             validate_potential)

from pipeline.manifest import ManifestRecorder
from pipeline.run_config import (RunConfig, build_potential, cache_dir, config_hash, k_grid, pde_params,
                                 reconstruct_options, t_list, tolerances, x_grid)
from pipeline.scatter_cache import ScatterCache
from pipeline.worker_pool import WorkerPool

CSV_FLOAT_FORMAT: str = '%.17g'


@dataclass
class ScatterEngine:
    q: Potential

    def edges(self, k: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        m0, dm0 = jost_batch(self.q, k, 'right')
        mb, dmb = jost_batch(self.q, k, 'left')
        return m0, dm0, mb, dmb


@dataclass
class ValidationEngine:
    k_grid: np.ndarray
    tolerances: Tolerances
    options: ReconstructOptions
    hankel_points: tuple[tuple[float, float], ...]
    grid_step: float
    b_max: float

    def validate(self, name: str, params: tuple[float, ...]) -> ValidationReport:
        q = make_preset(name, params, grid_step=self.grid_step, b_max=self.b_max)
        return validate_potential(q, self.k_grid, self.tolerances, self.options, self.hankel_points)


@dataclass
class SweepEngine:
    q: Potential
    options: ReconstructOptions

    def truncated_point(self, b: float, x: float, t: float) -> PointResult:
        q_b = truncate(self.q, b) if b < self.q.b_max else self.q
        return Reconstructor(q_b, options=self.options).line_point(x, t)

    def basis_point(self, basis_size: int, x: float, t: float) -> PointResult:
        options = replace(self.options, basis_size=basis_size, refine_tol=None)
        return Reconstructor(self.q, options=options).contour_point(x, t)


def _write(path: Path, payload: bytes | str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.encode() if isinstance(payload, str) else payload
    path.write_bytes(data)
    return digest_bytes(data)


def _frame_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')


class PipelineService(object):

    def __init__(self, config: RunConfig):
        self.config = config
        self.config_hash = config_hash(config)
        self.output_dir = Path(config.output.directory)
        self.cache = ScatterCache(cache_dir(), enabled=config.output.use_cache)
        self.pool = WorkerPool(max(1, config.workers))

    def recorder(self, command: str) -> ManifestRecorder:
        return ManifestRecorder(command, self.config_hash)

    def finish(self, command: str, recorder: ManifestRecorder):
        _write(self.output_dir / command / 'manifest.json', recorder.dumps())
        logging.info(f'{command} finished | timings (ms): {recorder.manifest.timings_ms}')

    def warn_all(self, recorder: ManifestRecorder, warnings: list[str]):
        for message in warnings:
            recorder.warn(message)
            logging.warning(message)

    async def scatter(self, q: Potential, recorder: ManifestRecorder) -> ScatteringSlice:
        """The scattering slice of `q`, from the cache when possible; k-grid batches run on the pool."""
        k = check_momentum_grid(k_grid(self.config))
        cached = self.cache.get(q.digest, k)
        if cached is not None:
            logging.info(f'scattering cache hit for potential {q.digest}')
            return cached
        logging.info(f'scattering cache miss for potential {q.digest}: integrating {k.size} momenta')
        with recorder.phase('jost'):
            chunks = np.array_split(k, self.pool.n_workers * 4)
            outcome = await self.pool.map(ScatterEngine(q), 'edges', [(chunk,) for chunk in chunks if chunk.size],
                                          costs=[chunk.size for chunk in chunks if chunk.size])
            if not outcome.ok:
                raise KdvIstError(f'Jost integration failed: {outcome.failures[0][1]}')
            m0, dm0, mb, dmb = (np.concatenate(parts) for parts in zip(*outcome.results))
        with recorder.phase('bound_states'):
            states = bound_states(q)
        slice_ = slice_from_edges(q, k, (m0, dm0), (mb, dmb), states)
        self.cache.put(slice_)
        return slice_

    async def cmd_scatter(self) -> int:
        recorder = self.recorder('scatter')
        q = build_potential(self.config)
        logging.info(f'scatter started for {q.preset_tag or q.digest}')
        slice_ = await self.scatter(q, recorder)
        recorder.output('slice.json', _write(self.output_dir / 'scatter' / 'slice.json', slice_.dumps()))
        print(self.scatter_summary(slice_))
        if slice_.flagged:
            self.warn_all(recorder, [f'{len(slice_.flagged)} near-singular grid point(s) flagged in the slice'])
        self.finish('scatter', recorder)
        return 0

    @staticmethod
    def scatter_summary(slice_: ScatteringSlice) -> str:
        n = len(slice_.bound_states)
        lines = [f'{n} bound state{"" if n == 1 else "s"}'
                 + (', L ≡ 0' if not np.any(slice_.L) else f', max |L| = {np.max(np.abs(slice_.L)):.6g}')]
        if n:
            table = pd.DataFrame({'kappa': [bs.kappa for bs in slice_.bound_states],
                                  'energy': [-bs.kappa ** 2 for bs in slice_.bound_states],
                                  'c': [bs.c for bs in slice_.bound_states]})
            lines.append(table.to_string(index=False, float_format=lambda v: f'{v:.12g}'))
        lines.append(f'unitarity residual {slice_.unitarity_residual:.3e}, '
                     f'Wronskian mismatch {slice_.wronskian_mismatch:.3e}')
        return '\n'.join(lines)

    async def cmd_validate(self) -> int:
        recorder = self.recorder('validate')
        v = self.config.validation
        points = tuple((float(x), float(t)) for x, t in v.hankel_points)
        options = reconstruct_options(self.config)
        if v.battery:
            engine = ValidationEngine(k_grid(self.config), tolerances(self.config), options, points,
                                      self.config.grid.grid_step, self.config.grid.b_max)
            with recorder.phase('battery'):
                outcome = await self.pool.map(engine, 'validate', PRESET_BATTERY)
            for index, reason in outcome.failures:
                logging.error(f'preset {PRESET_BATTERY[index]} could not be validated: {reason}')
            reports = [report for report in outcome.results if report is not None]
            errored = not outcome.ok
        else:
            q = build_potential(self.config)
            slice_ = await self.scatter(q, recorder)
            perturb = None
            if v.perturb_scale:
                scale = 1.0 + v.perturb_scale
                perturb = lambda L: scale * L  # noqa: E731
                self.warn_all(recorder, [f'L perturbed by a factor {scale:g} on the scattering-data side'])
            with recorder.phase('checks'):
                reports = [validate_potential(q, slice_.k_grid, tolerances(self.config), options, points,
                                              perturb=perturb, slice_=slice_)]
            errored = False
        for n, report in enumerate(reports):
            name = f'report_{n}.json' if len(reports) > 1 else 'report.json'
            recorder.output(name, _write(self.output_dir / 'validate' / name, report.dumps()))
            for check in report.failures:
                logging.error(f'check {check.name} failed for {report.provenance.get("preset") or "potential"}: '
                              f'residual {check.residual:.3e} > {check.tolerance:.3e} {check.detail}')
        passed = all(report.passed for report in reports) and not errored
        print(f'{sum(len(r.checks) for r in reports)} checks, '
              f'{sum(len(r.failures) for r in reports)} failed: {"PASS" if passed else "FAIL"}')
        self.finish('validate', recorder)
        return 0 if passed else 1

    async def reconstruct_field(self, q: Potential, recorder: ManifestRecorder, path: str | None = None,
                                x: np.ndarray | None = None) -> tuple[ReconstructionField, Reconstructor]:
        slice_ = await self.scatter(q, recorder)
        reconstructor = Reconstructor.from_slice(q, slice_, reconstruct_options(self.config))
        path = path or self.config.reconstruction.path
        x = x_grid(self.config) if x is None else x
        times = t_list(self.config)
        keys = [(i, j) for j in range(times.size) for i in range(x.size)]
        items = [(float(x[i]), float(times[j]), path) for i, j in keys]
        with recorder.phase(f'reconstruct_{path}'), tqdm(total=len(items), desc=f'{path} path', leave=False) as bar:
            outcome = await self.pool.map(reconstructor, 'point', items, progress=bar.update)
        if not outcome.ok:
            failures = [(items[index][0], items[index][1], reason) for index, reason in outcome.failures]
            for xf, tf, reason in failures:
                logging.error(f'reconstruction failed at (x={xf:g}, t={tf:g}): {reason}')
            raise GridReconstructionError(failures)
        field = ReconstructionField.from_points(x, times, dict(zip(keys, outcome.results)), path)
        self.warn_all(recorder, sorted(set(field.warnings)))
        return field, reconstructor

    async def path_check(self, field: ReconstructionField, reconstructor: Reconstructor,
                         n_points: int) -> pd.DataFrame:
        """The other path at an evenly spread sample of the grid points."""
        other = 'proposition' if field.path == 'contour' else 'contour'
        keys = [(i, j) for j in range(field.t_list.size) for i in range(field.x_grid.size)]
        picks = [keys[int(n)] for n in np.unique(np.linspace(0, len(keys) - 1, n_points).round().astype(int))]
        items = [(float(field.x_grid[i]), float(field.t_list[j]), other) for i, j in picks]
        outcome = await self.pool.map(reconstructor, 'point', items)
        rows = []
        for (i, j), result in zip(picks, outcome.results):
            if result is None:
                continue
            rows.append({'x': field.x_grid[i], 't': field.t_list[j], field.path: field.values[i, j],
                         other: result.q, 'abs_diff': abs(field.values[i, j] - result.q)})
        return pd.DataFrame(rows, columns=['x', 't', field.path, other, 'abs_diff'])

    async def cmd_reconstruct(self) -> int:
        recorder = self.recorder('reconstruct')
        q = build_potential(self.config)
        field, reconstructor = await self.reconstruct_field(q, recorder)
        out = self.output_dir / 'reconstruct'
        recorder.output('field.csv', _write(out / 'field.csv', field.to_csv()))
        recorder.output('field.json', _write(out / 'field.json', field.dumps()))
        n_check = self.config.reconstruction.path_check_points
        if n_check > 0:
            with recorder.phase('path_check'):
                agreement = await self.path_check(field, reconstructor, n_check)
            recorder.output('path_check.csv', _write(out / 'path_check.csv', _frame_csv(agreement)))
            print(f'path agreement: max |contour - proposition| = {agreement["abs_diff"].max():.3e} '
                  f'over {len(agreement)} point(s)')
        print(f'{field.values.size} points, max |Im q| = {field.max_imag_residual:.3e}, '
              f'tail decay rates {field.tail_decay()}')
        self.finish('reconstruct', recorder)
        return 0

    async def cmd_crosscheck(self) -> int:
        recorder = self.recorder('crosscheck')
        q = build_potential(self.config)
        times = t_list(self.config)
        params = pde_params(self.config, float(np.max(times)))
        logging.info(f'PDE reference on [-{params.domain_half_width:g}, {params.domain_half_width:g}] '
                     f'with {params.n_modes} modes, dt = {params.dt:g}')
        with recorder.phase('crosscheck'):
            (field, _), run = await asyncio.gather(self.reconstruct_field(q, recorder),
                                                   asyncio.to_thread(evolve_kdv, q, times, params))
        self.warn_all(recorder, run.warnings)
        table = crosscheck_table(run, {float(t): field.values[:, j] for j, t in enumerate(field.t_list)},
                                 field.x_grid)
        out = self.output_dir / 'crosscheck'
        recorder.output('crosscheck.csv', _write(out / 'crosscheck.csv', _frame_csv(table)))
        recorder.output('field.csv', _write(out / 'field.csv', field.to_csv()))
        recorder.output('pde_manifest.json', _write(out / 'pde_manifest.json', run.manifest()))
        overlay = pd.concat([pd.DataFrame({'x': field.x_grid, 't': t, 'q_ist': field.values[:, j],
                                           'q_pde': run.at(float(t), field.x_grid)})
                             for j, t in enumerate(field.t_list)], ignore_index=True)
        recorder.output('overlay.csv', _write(out / 'overlay.csv', _frame_csv(overlay)))
        print(table.to_string(index=False, float_format=lambda v: f'{v:.3e}'))
        self.finish('crosscheck', recorder)
        return 0

    async def cmd_sweep(self) -> int:
        recorder = self.recorder('sweep')
        q = build_potential(self.config)
        s = self.config.sweep
        options = reconstruct_options(self.config)
        engine = SweepEngine(q, options)
        out = self.output_dir / 'sweep'
        with recorder.phase('truncation'):
            b_list = [b for b in s.b_list if b < q.b_max]
            checks = check_truncation_rates(q, b_list, s.a, k_grid(self.config), self.config.tolerances.truncation_band,
                                            band_check=(q.preset_tag or '').startswith('exp_decay'))
            items = [(b, s.x, s.t) for b in b_list] + [(q.b_max, s.x, s.t)]
            with tqdm(total=len(items), desc='truncation sweep') as bar:
                outcome = await self.pool.map(engine, 'truncated_point', items, progress=bar.update)
        reference = outcome.results[-1]
        bounds = {check.name: check for check in checks if check.name.startswith('truncation_l2')}
        rows = []
        for (b, _, _), result in zip(items[:-1], outcome.results[:-1]):
            check = bounds.get(f'truncation_l2[b={b:g}]')
            rows.append({'b': b,
                         'q_b': result.q if result is not None else np.nan,
                         'abs_diff': abs(result.q - reference.q) if result is not None and reference else np.nan,
                         'energy': check.lhs if check else np.nan,
                         'energy_bound': check.rhs if check else np.nan})
        truncation = pd.DataFrame(rows, columns=['b', 'q_b', 'abs_diff', 'energy', 'energy_bound'])
        recorder.output('truncation.csv', _write(out / 'truncation.csv', _frame_csv(truncation)))
        for check in checks:
            if not check.passed:
                logging.error(f'sweep check {check.name} failed: {check.lhs:.4g} vs {check.rhs:.4g} {check.detail}')
        with recorder.phase('basis'):
            items = [(int(n), s.x, s.t) for n in s.basis_sizes]
            with tqdm(total=len(items), desc='basis sweep') as bar:
                outcome = await self.pool.map(engine, 'basis_point', items, progress=bar.update)
        finest = outcome.results[-1]
        basis = pd.DataFrame([{'basis_size': n, 'q': r.q if r else np.nan, 'hankel_norm': r.hankel_norm if r else np.nan,
                               'abs_diff': abs(r.q - finest.q) if r and finest else np.nan}
                              for (n, _, _), r in zip(items, outcome.results)],
                             columns=['basis_size', 'q', 'hankel_norm', 'abs_diff'])
        recorder.output('basis.csv', _write(out / 'basis.csv', _frame_csv(basis)))
        for index, reason in outcome.failures:
            logging.error(f'basis sweep point {items[index]} failed: {reason}')
        print(truncation.to_string(index=False))
        print(basis.to_string(index=False))
        self.finish('sweep', recorder)
        return 0 if all(check.passed for check in checks) else 1

    async def main(self, command: str) -> int:
        handler = getattr(self, f'cmd_{command}')
        try:
            return await handler()
        finally:
            await logging.shutdown()
