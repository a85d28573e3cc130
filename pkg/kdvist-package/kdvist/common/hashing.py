import cityhash
import numpy as np


def digest_bytes(payload: bytes) -> str:
    """CityHash64 of a byte string as a 16 digit hex string."""
    return f'{cityhash.CityHash64(payload):016x}'


def digest_array(*arrays: np.ndarray, prefix: bytes = b'') -> str:
    # little-endian float64 / complex128 so digests agree across hosts
    parts = [prefix]
    for array in arrays:
        array = np.asarray(array)
        dtype = np.dtype('<c16') if np.iscomplexobj(array) else np.dtype('<f8')
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    return digest_bytes(b''.join(parts))
