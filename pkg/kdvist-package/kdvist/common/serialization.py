import gzip

import cloudpickle
import msgspec
import numpy as np


def json_serialization(serializable_object: object) -> bytes:
    """Serializes an object (msgspec Struct, dict, list, scalars) to JSON.

    Args:
        serializable_object (object): Object to serialize.

    Returns:
        bytes: UTF-8 JSON bytes.
    """
    return msgspec.json.encode(serializable_object)


def json_deserialization(serialized_object: bytes, obj_type: type | None = None) -> object:
    """Deserializes JSON bytes, optionally validating against a type.

    Args:
        serialized_object (bytes): JSON bytes.
        obj_type (type | None): Target type; unknown fields are rejected by forbid_unknown_fields Structs.

    Returns:
        object: The decoded object.
    """
    if obj_type is None:
        return msgspec.json.decode(serialized_object)
    return msgspec.json.decode(serialized_object, type=obj_type)


def msgpack_serialization(serializable_object: object) -> bytes:
    """Serializes an object using MessagePack.

    Args:
        serializable_object (object): Object to serialize.

    Returns:
        bytes: Serialized byte representation.
    """
    return msgspec.msgpack.encode(serializable_object)


def msgpack_deserialization(serialized_object: bytes, obj_type: type | None = None) -> object:
    """Deserializes a MessagePack-encoded byte object.

    Args:
        serialized_object (bytes): Serialized MessagePack bytes.
        obj_type (type | None): Optional target type.

    Returns:
        object: The deserialized object.
    """
    if obj_type is None:
        return msgspec.msgpack.decode(serialized_object)
    return msgspec.msgpack.decode(serialized_object, type=obj_type)


def compressed_msgpack_serialization(serializable_object: object) -> bytes:
    """Serializes and compresses an object using MessagePack and gzip.

    The gzip header timestamp is pinned so equal objects give equal bytes.

    Args:
        serializable_object (object): Object to serialize.

    Returns:
        bytes: Compressed and serialized bytes.
    """
    return gzip.compress(msgpack_serialization(serializable_object), mtime=0)


def compressed_msgpack_deserialization(serialized_object: bytes, obj_type: type | None = None) -> object:
    """Decompresses and deserializes a gzip-compressed MessagePack object.

    Args:
        serialized_object (bytes): Compressed serialized bytes.
        obj_type (type | None): Optional target type.

    Returns:
        object: The deserialized object.
    """
    return msgpack_deserialization(gzip.decompress(serialized_object), obj_type)


def cloudpickle_serialization(serializable_object: object) -> bytes:
    """Serializes an object using cloudpickle.

    Args:
        serializable_object (object): Object to serialize.

    Returns:
        bytes: Serialized byte representation.
    """
    return cloudpickle.dumps(serializable_object)


def cloudpickle_deserialization(serialized_object: bytes) -> object:
    """Deserializes a cloudpickle-encoded byte object.

    Args:
        serialized_object (bytes): Serialized cloudpickle bytes.

    Returns:
        object: The deserialized object.
    """
    return cloudpickle.loads(serialized_object)


def complex_to_pairs(values: np.ndarray) -> list[list[float]]:
    """Converts a complex array to a list of [re, im] pairs.

    Args:
        values (np.ndarray): Complex values.

    Returns:
        list[list[float]]: One [re, im] pair per value.
    """
    values = np.asarray(values, dtype=complex)
    return np.stack([values.real, values.imag], axis=-1).tolist()


def pairs_to_complex(pairs: list[list[float]]) -> np.ndarray:
    """Inverse of `complex_to_pairs`.

    Args:
        pairs (list[list[float]]): [re, im] pairs.

    Returns:
        np.ndarray: Complex array.
    """
    if len(pairs) == 0:
        return np.zeros(0, dtype=complex)
    arr = np.asarray(pairs, dtype=float)
    return arr[:, 0] + 1j * arr[:, 1]
