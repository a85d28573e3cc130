from pathlib import Path

import msgspec
import numpy as np

from kdvist.common.hashing import digest_array
from kdvist.common.serialization import compressed_msgpack_deserialization, compressed_msgpack_serialization
from kdvist.scattering import ScatteringSlice, ScatteringSliceFile


class ScatterCache(object):
    """Scattering slices on disk, keyed by potential digest and momentum grid.

    Entries are gzip-compressed msgpack; a corrupt entry is treated as a miss and overwritten.
    """

    def __init__(self, directory: Path, enabled: bool = True):
        self.directory = directory
        self.enabled = enabled
        self.hits: int = 0
        self.misses: int = 0

    @staticmethod
    def key(potential_digest: str, k_grid: np.ndarray) -> str:
        return f'{potential_digest}-{digest_array(k_grid, prefix=b"k_grid")}'

    def entry_path(self, potential_digest: str, k_grid: np.ndarray) -> Path:
        return self.directory / f'{self.key(potential_digest, k_grid)}.msgpack.gz'

    def get(self, potential_digest: str, k_grid: np.ndarray) -> ScatteringSlice | None:
        if not self.enabled:
            return None
        path = self.entry_path(potential_digest, k_grid)
        try:
            data = compressed_msgpack_deserialization(path.read_bytes(), ScatteringSliceFile)
        except (OSError, EOFError, msgspec.DecodeError):
            self.misses += 1
            return None
        self.hits += 1
        return ScatteringSlice.from_file(data)

    def put(self, slice_: ScatteringSlice) -> Path | None:
        if not self.enabled:
            return None
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.entry_path(slice_.source_potential_hash, slice_.k_grid)
        # write-then-rename so concurrent runs never read a half-written entry
        tmp = path.with_suffix('.tmp')
        tmp.write_bytes(compressed_msgpack_serialization(slice_.to_file()))
        tmp.replace(path)
        return path
