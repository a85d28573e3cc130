"""Command line entry point.

    python -m pipeline.cli <scatter|validate|reconstruct|crosscheck|sweep> [--config run.json] [--section.key value ...]

Every leaf of the run config has a flag (`--grid.b_max 10`, `--reconstruction.t_list "[0.1, 1.0]"`,
`--workers 4`); flags override the config file. Exit status: 0 success, 1 failed checks, 2 errors.
"""
import argparse
import asyncio
import sys

from kdvist.common.exceptions import ConfigError, KdvIstError, ValidationFailure

from pipeline.pipeline_service import PipelineService
from pipeline.run_config import RunConfig, apply_overrides, load_config

COMMANDS: tuple[str, ...] = ('scatter', 'validate', 'reconstruct', 'crosscheck', 'sweep')
EXIT_FAILED_CHECKS: int = 1
EXIT_ERROR: int = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='kdvist', allow_abbrev=False,
                                     description='Inverse scattering pipeline for the KdV equation.')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command, allow_abbrev=False)
        sub.add_argument('--config', default=None, help='JSON run config; defaults apply when omitted')
        if command == 'reconstruct':
            # shorthand for --reconstruction.path
            sub.add_argument('--path', choices=('contour', 'proposition'), default=None)
    return parser


def parse_overrides(tokens: list[str]) -> list[tuple[str, str]]:
    """`--a.b value` and `--a.b=value` pairs from the arguments argparse did not consume."""
    overrides = []
    position = 0
    while position < len(tokens):
        token = tokens[position]
        if not token.startswith('--') or len(token) == 2:
            raise ConfigError(f'unexpected argument {token!r}')
        key, separator, value = token[2:].partition('=')
        if not separator:
            if position + 1 >= len(tokens):
                raise ConfigError(f'missing value for --{key}')
            position += 1
            value = tokens[position]
        overrides.append((key, value))
        position += 1
    return overrides


def resolve_config(args: argparse.Namespace, extra: list[str]) -> RunConfig:
    overrides = parse_overrides(extra)
    if getattr(args, 'path', None) is not None:
        overrides.append(('reconstruction.path', args.path))
    return apply_overrides(load_config(args.config), overrides)


def main(argv: list[str] | None = None) -> int:
    args, extra = build_parser().parse_known_args(argv)
    try:
        config = resolve_config(args, extra)
        return asyncio.run(PipelineService(config).main(args.command))
    except ValidationFailure as e:
        print(f'validation failed: {e}', file=sys.stderr)
        return EXIT_FAILED_CHECKS
    except KdvIstError as e:
        print(f'{type(e).__name__}: {e}', file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
