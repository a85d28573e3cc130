import platform
from contextlib import contextmanager
from importlib import metadata
from timeit import default_timer as timer

import msgspec
import psutil

from kdvist.common.serialization import json_serialization

PACKAGES: tuple[str, ...] = ('kdvist', 'numpy', 'scipy', 'msgspec', 'pandas', 'cloudpickle', 'cityhash', 'aiologger')


class HostInfo(msgspec.Struct):
    python: str
    platform: str
    cpu_count: int
    total_memory_mb: float


class RunManifest(msgspec.Struct):
    command: str
    config_hash: str
    versions: dict[str, str]
    host: HostInfo
    timings_ms: dict[str, float] = {}
    outputs: dict[str, str] = {}
    warnings: list[str] = []


def package_versions() -> dict[str, str]:
    versions = {}
    for package in PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = 'not installed'
    return versions


def host_info() -> HostInfo:
    return HostInfo(python=platform.python_version(),
                    platform=platform.platform(),
                    cpu_count=psutil.cpu_count(logical=True) or 1,
                    total_memory_mb=psutil.virtual_memory().total / (1024 * 1024))


class ManifestRecorder(object):
    """Collects per-phase timings and output digests for one command."""

    def __init__(self, command: str, config_hash: str):
        self.manifest = RunManifest(command=command, config_hash=config_hash,
                                    versions=package_versions(), host=host_info())

    @contextmanager
    def phase(self, name: str):
        start = timer()
        try:
            yield
        finally:
            self.manifest.timings_ms[name] = round((timer() - start) * 1000, 3)

    def output(self, name: str, digest: str):
        self.manifest.outputs[name] = digest

    def warn(self, message: str):
        self.manifest.warnings.append(message)

    def dumps(self) -> bytes:
        return json_serialization(self.manifest)
