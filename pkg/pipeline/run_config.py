import os
from pathlib import Path

import msgspec
import numpy as np

from kdvist.common.exceptions import ConfigError
from kdvist.common.hashing import digest_bytes
from kdvist.common.serialization import json_serialization
from kdvist.contour import (DEFAULT_GROWTH_CAP, DEFAULT_N_RAY, DEFAULT_N_SIDE, DEFAULT_N_TOP, DEFAULT_POLE_RADIUS,
                            DEFAULT_RAY_CUTOFF)
from kdvist.hankel import ALPHA_FLOOR, DEFAULT_BASIS_SIZE, DEFAULT_S_MAX, MAX_BASIS_SIZE, REFINEMENT_TOL
from kdvist.pde_ref import DEFAULT_DT, PdeParams, sized_for
from kdvist.potential import DEFAULT_B_MAX, DEFAULT_GRID_STEP, Potential, make_preset
from kdvist.reconstruct import IMAG_TOLERANCE, ReconstructOptions
from kdvist.scattering import DEFAULT_K_GAP, DEFAULT_K_MAX, DEFAULT_K_STEP, momentum_grid
from kdvist.validate import Tolerances

CACHE_DIR: str = os.getenv('KDVIST_CACHE_DIR', os.path.join(os.path.expanduser('~'), '.cache', 'kdvist'))
WORKERS: int = int(os.getenv('KDVIST_WORKERS', 1))


class PotentialConfig(msgspec.Struct, forbid_unknown_fields=True):
    # either a preset call or a JSON potential file
    preset: str | None = 'square_well'
    params: list[float] = msgspec.field(default_factory=lambda: [1.0, 2.0])
    file: str | None = None


class GridConfig(msgspec.Struct, forbid_unknown_fields=True):
    grid_step: float = DEFAULT_GRID_STEP
    b_max: float = DEFAULT_B_MAX
    k_max: float = DEFAULT_K_MAX
    k_step: float = DEFAULT_K_STEP
    k_gap: float = DEFAULT_K_GAP


class ContourConfig(msgspec.Struct, forbid_unknown_fields=True):
    a: float | None = None
    ray_cutoff: float = DEFAULT_RAY_CUTOFF
    n_ray: int = DEFAULT_N_RAY
    n_side: int = DEFAULT_N_SIDE
    n_top: int = DEFAULT_N_TOP
    growth_cap: float = DEFAULT_GROWTH_CAP
    pole_radius: float = DEFAULT_POLE_RADIUS


class HankelConfig(msgspec.Struct, forbid_unknown_fields=True):
    basis_size: int = DEFAULT_BASIS_SIZE
    s_max: float = DEFAULT_S_MAX
    alpha_floor: float = ALPHA_FLOOR
    # null turns the doubling off
    refine_tol: float | None = REFINEMENT_TOL
    max_basis_size: int = MAX_BASIS_SIZE


class ReconstructionConfig(msgspec.Struct, forbid_unknown_fields=True):
    x_min: float = -5.0
    x_max: float = 15.0
    nx: int = 41
    t_list: list[float] = msgspec.field(default_factory=lambda: [0.1, 0.5])
    path: str = 'contour'
    derivative: str = 'analytic'
    imag_tol: float = IMAG_TOLERANCE
    strict: bool = False
    # compare against the other path on this many (x, t) samples; 0 disables
    path_check_points: int = 0


class PdeConfig(msgspec.Struct, forbid_unknown_fields=True):
    # None sizes the periodic box from the cross-check window and t_max
    domain_half_width: float | None = None
    n_modes: int | None = None
    dt: float = DEFAULT_DT
    k_band: float = 10.0
    strict: bool = False


class SweepConfig(msgspec.Struct, forbid_unknown_fields=True):
    b_list: list[float] = msgspec.field(default_factory=lambda: [2.0, 4.0, 8.0])
    basis_sizes: list[int] = msgspec.field(default_factory=lambda: [64, 128, 256, 512])
    x: float = 0.0
    t: float = 0.1
    a: float = 2.0


class ValidationConfig(msgspec.Struct, forbid_unknown_fields=True):
    # run the preset battery instead of the configured potential
    battery: bool = False
    # multiplies L by (1 + perturb_scale) on the scattering-data side; used to show the checks react
    perturb_scale: float = 0.0
    hankel_points: list[list[float]] = msgspec.field(default_factory=lambda: [[0.0, 0.1], [0.0, 0.5],
                                                                              [2.0, 0.1], [2.0, 0.5]])


class ToleranceConfig(msgspec.Struct, forbid_unknown_fields=True):
    unitarity: float = Tolerances.unitarity
    zf_trace: float = Tolerances.zf_trace
    layer_stripping: float = Tolerances.layer_stripping
    truncation_band: float = Tolerances.truncation_band
    residue: float = Tolerances.residue
    hankel_norm: float = Tolerances.hankel_norm
    weyl: float = Tolerances.weyl
    transmission: float = Tolerances.transmission
    deformation: float = Tolerances.deformation
    cauchy_constant: float = Tolerances.cauchy_constant


class OutputConfig(msgspec.Struct, forbid_unknown_fields=True):
    directory: str = 'kdvist-output'
    use_cache: bool = True


class RunConfig(msgspec.Struct, forbid_unknown_fields=True):
    potential: PotentialConfig = msgspec.field(default_factory=PotentialConfig)
    grid: GridConfig = msgspec.field(default_factory=GridConfig)
    contour: ContourConfig = msgspec.field(default_factory=ContourConfig)
    hankel: HankelConfig = msgspec.field(default_factory=HankelConfig)
    reconstruction: ReconstructionConfig = msgspec.field(default_factory=ReconstructionConfig)
    pde: PdeConfig = msgspec.field(default_factory=PdeConfig)
    sweep: SweepConfig = msgspec.field(default_factory=SweepConfig)
    validation: ValidationConfig = msgspec.field(default_factory=ValidationConfig)
    tolerances: ToleranceConfig = msgspec.field(default_factory=ToleranceConfig)
    output: OutputConfig = msgspec.field(default_factory=OutputConfig)
    workers: int = WORKERS


def load_config(path: str | None = None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return msgspec.json.decode(Path(path).read_bytes(), type=RunConfig)
    except (OSError, msgspec.DecodeError) as e:
        raise ConfigError(f'cannot load run config {path}: {e}') from e


def _parse_value(raw: str):
    # JSON literals first (numbers, lists, null, true/false); anything else is a bare string
    try:
        return msgspec.json.decode(raw.encode())
    except msgspec.DecodeError:
        return raw


def apply_overrides(config: RunConfig, overrides: list[tuple[str, str]]) -> RunConfig:
    """Applies `--section.key value` pairs; keys mirror the config tree one-to-one."""
    tree = msgspec.to_builtins(config)
    for dotted, raw in overrides:
        *sections, leaf = dotted.split('.')
        node = tree
        for section in sections:
            if not isinstance(node.get(section), dict):
                raise ConfigError(f'unknown config section in --{dotted}')
            node = node[section]
        if leaf not in node:
            raise ConfigError(f'unknown config key --{dotted}')
        node[leaf] = _parse_value(raw)
    try:
        return msgspec.convert(tree, type=RunConfig)
    except msgspec.ValidationError as e:
        raise ConfigError(f'invalid override: {e}') from e


def config_hash(config: RunConfig) -> str:
    return digest_bytes(json_serialization(config))


def build_potential(config: RunConfig) -> Potential:
    p = config.potential
    if p.file is not None:
        try:
            return Potential.loads(Path(p.file).read_bytes())
        except OSError as e:
            raise ConfigError(f'cannot read potential file {p.file}: {e}') from e
    if p.preset is None:
        raise ConfigError('potential needs either a preset or a file')
    return make_preset(p.preset, p.params, grid_step=config.grid.grid_step, b_max=config.grid.b_max)


def k_grid(config: RunConfig) -> np.ndarray:
    g = config.grid
    try:
        return momentum_grid(g.k_max, g.k_step, g.k_gap)
    except ValueError as e:
        raise ConfigError(f'invalid momentum grid: {e}') from e


def x_grid(config: RunConfig) -> np.ndarray:
    r = config.reconstruction
    if r.nx < 1:
        raise ConfigError(f'reconstruction.nx must be positive, got {r.nx}')
    return np.linspace(r.x_min, r.x_max, r.nx)


def t_list(config: RunConfig) -> np.ndarray:
    times = np.asarray(config.reconstruction.t_list, dtype=float)
    if times.size == 0 or np.any(times <= 0):
        raise ConfigError(f'reconstruction.t_list must hold positive times, got {times.tolist()}')
    return times


def reconstruct_options(config: RunConfig) -> ReconstructOptions:
    c, h, r = config.contour, config.hankel, config.reconstruction
    if r.path not in ('contour', 'proposition'):
        raise ConfigError(f"reconstruction.path must be 'contour' or 'proposition', got {r.path!r}")
    if r.derivative not in ('analytic', 'numeric'):
        raise ConfigError(f"reconstruction.derivative must be 'analytic' or 'numeric', got {r.derivative!r}")
    return ReconstructOptions(a=c.a, ray_cutoff=c.ray_cutoff, n_ray=c.n_ray, n_side=c.n_side, n_top=c.n_top,
                              growth_cap=c.growth_cap, pole_radius=c.pole_radius, basis_size=h.basis_size,
                              s_max=h.s_max, alpha_floor=h.alpha_floor, refine_tol=h.refine_tol,
                              max_basis_size=h.max_basis_size, imag_tol=r.imag_tol,
                              derivative=r.derivative, strict=r.strict)


def tolerances(config: RunConfig) -> Tolerances:
    return Tolerances(**msgspec.structs.asdict(config.tolerances))


def pde_params(config: RunConfig, t_max: float) -> PdeParams:
    p, r = config.pde, config.reconstruction
    params = sized_for(t_max, (r.x_min, r.x_max), p.k_band, p.dt)
    return PdeParams(domain_half_width=p.domain_half_width or params.domain_half_width,
                     n_modes=p.n_modes or params.n_modes, dt=p.dt, strict=p.strict, k_band=params.k_band)


def cache_dir() -> Path:
    return Path(CACHE_DIR)
