"""
NWCK1 checkpoint container

    magic "NWCK1" | u32 little-endian header length | UTF-8 JSON header | tensor blobs

The header echoes the model configuration, the training seed and any provenance metadata, and
indexes every state entry (parameters and normalization statistics) by name, dtype, shape and
blob offset. Floating point entries are stored as little-endian float32, integer entries as
little-endian int64.
"""
import json
import logging
import os
import struct

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import torch

from nowcast.exceptions import CheckpointError, ConfigError
from nowcast.model.config import ModelConfig
from nowcast.model.network import NowcastNetwork


CHECKPOINT_MAGIC = b"NWCK1"

CHECKPOINT_VERSION = 1

HEADER_LENGTH = struct.Struct("<I")

FLOAT_DTYPE = np.dtype("<f4")

INT_DTYPE = np.dtype("<i8")


@dataclass
class Checkpoint:
    """A decoded checkpoint"""
    config: ModelConfig
    state: Dict[str, torch.Tensor]
    seed: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    def build_network(self) -> NowcastNetwork:
        """Fresh network carrying the stored weights"""
        network = NowcastNetwork(self.config)

        try:
            network.load_state_dict(self.state)

        except RuntimeError as err:
            raise CheckpointError(f"weights do not fit the stored configuration: {err}") from err

        return network


def encode_checkpoint(network: NowcastNetwork, seed: int, metadata: Dict[str, Any] = None) -> bytes:
    """
    Serialize a network to checkpoint bytes

    Keyword arguments:
    network -- the network to store
    seed -- the training seed
    metadata -- extra JSON-serializable provenance (default: None)
    """
    index = []

    blobs = []

    offset = 0

    for name, tensor in network.state_dict().items():
        dtype = FLOAT_DTYPE if tensor.is_floating_point() else INT_DTYPE

        blob = tensor.detach().cpu().numpy().astype(dtype).tobytes(order="C")

        index.append({
            "name": name,
            "dtype": dtype.str,
            "shape": list(tensor.shape),
            "offset": offset,
            "length": len(blob),
        })

        blobs.append(blob)

        offset += len(blob)

    header = json.dumps({
        "version": CHECKPOINT_VERSION,
        "config": network.config.to_dict(),
        "seed": seed,
        "metadata": metadata or {},
        "tensors": index,
    }, sort_keys=True).encode("utf-8")

    return CHECKPOINT_MAGIC + HEADER_LENGTH.pack(len(header)) + header + b"".join(blobs)


def decode_checkpoint(data: bytes, path: str = None) -> Checkpoint:
    """
    Parse checkpoint bytes

    Keyword arguments:
    data -- the checkpoint content
    path -- path reported in errors (default: None)
    """
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not an NWCK1 checkpoint", path=path)

    start = len(CHECKPOINT_MAGIC) + HEADER_LENGTH.size

    if len(data) < start:
        raise CheckpointError("truncated header", path=path)

    (header_length,) = HEADER_LENGTH.unpack_from(data, len(CHECKPOINT_MAGIC))

    try:
        header = json.loads(data[start:start + header_length].decode("utf-8"))

    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"unreadable header: {err}", path=path) from err

    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported version {header.get('version')}", path=path)

    try:
        config = ModelConfig.from_dict(header["config"])

    except (ConfigError, TypeError, KeyError) as err:
        raise CheckpointError(f"invalid model configuration: {err}", path=path) from err

    blob_start = start + header_length

    state = {}

    for entry in header["tensors"]:
        begin = blob_start + entry["offset"]

        end = begin + entry["length"]

        if end > len(data):
            raise CheckpointError(f"tensor '{entry['name']}' runs past the end of the file", path=path)

        values = np.frombuffer(data[begin:end], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])

        state[entry["name"]] = torch.from_numpy(values.copy())

    return Checkpoint(config=config, state=state, seed=int(header["seed"]), metadata=header.get("metadata", {}))


def save_checkpoint(path: Union[str, Path], network: NowcastNetwork, seed: int,
                    metadata: Dict[str, Any] = None) -> Path:
    """
    Write a checkpoint atomically: a temporary sibling file is renamed over the destination, so
    an interrupted write leaves the previous checkpoint intact

    Keyword arguments:
    path -- destination file
    network -- the network to store
    seed -- the training seed
    metadata -- extra JSON-serializable provenance (default: None)
    """
    path = Path(path)

    temporary = path.with_name(path.name + ".tmp")

    try:
        path.parent.mkdir(parents=True, exist_ok=True)

        temporary.write_bytes(encode_checkpoint(network, seed, metadata))

        os.replace(temporary, path)

    except OSError as os_err:
        raise CheckpointError(f"unable to write: {os_err.strerror}", path=str(path)) from os_err

    logging.debug(f"checkpoint written to {path}")

    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint file

    Keyword arguments:
    path -- the checkpoint file
    """
    try:
        data = Path(path).read_bytes()

    except OSError as os_err:
        raise CheckpointError(f"unable to read: {os_err.strerror}", path=str(path)) from os_err

    return decode_checkpoint(data, path=str(path))
