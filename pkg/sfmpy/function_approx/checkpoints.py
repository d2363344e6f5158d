import os
from dataclasses import dataclass, field
from typing import List

import numpy as np

from sfmpy.function_approx.mlp import Mlp

CHECKPOINT_MAGIC = b'SFM1'


@dataclass
class CheckpointRecord:
    tag: str
    layer_sizes: List[int]
    values: np.ndarray
    activations: List[str] = field(default_factory=list)


def mlp_record(tag: str, net: Mlp) -> CheckpointRecord:
    return CheckpointRecord(tag=tag, layer_sizes=list(net.layer_sizes), values=net.params.copy(), activations=list(net.activations))


def vector_record(tag: str, values: np.ndarray) -> CheckpointRecord:
    values = np.asarray(values, dtype=np.float64).ravel()
    return CheckpointRecord(tag=tag, layer_sizes=[len(values)], values=values)


def record_to_mlp(record: CheckpointRecord) -> Mlp:
    if len(record.activations) == 0:
        raise ValueError(f'Checkpoint record {record.tag} does not describe a network')
    return Mlp(record.layer_sizes, record.activations, params=record.values)


def _encode_text(text: str) -> bytes:
    encoded = text.encode('utf8')
    return np.array([len(encoded)], dtype='<u4').tobytes() + encoded


def write_checkpoint(path: str, records: List[CheckpointRecord]):
    """
    Write records back to back. Each record is: the SFM1 magic, a uint32 count and the uint32 layer
    sizes, the tag and the comma-joined activation tags (uint32 length + utf8), a uint64 value count,
    then the values as little-endian float64.
    """
    chunks = []
    for record in records:
        chunks.append(CHECKPOINT_MAGIC)
        chunks.append(np.array([len(record.layer_sizes)] + list(record.layer_sizes), dtype='<u4').tobytes())
        chunks.append(_encode_text(record.tag))
        chunks.append(_encode_text(','.join(record.activations)))
        values = np.asarray(record.values, dtype='<f8').ravel()
        chunks.append(np.array([len(values)], dtype='<u8').tobytes())
        chunks.append(values.tobytes())
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(b''.join(chunks))


def read_checkpoint(path: str) -> List[CheckpointRecord]:
    with open(path, 'rb') as f:
        data = f.read()

    def _read_text(offset):
        length = int(np.frombuffer(data, dtype='<u4', count=1, offset=offset)[0])
        offset += 4
        return data[offset:offset + length].decode('utf8'), offset + length

    records = []
    offset = 0
    while offset < len(data):
        if data[offset:offset + 4] != CHECKPOINT_MAGIC:
            raise ValueError(f'{path} is not an SFM1 checkpoint (bad magic at byte {offset})')
        offset += 4
        n_sizes = int(np.frombuffer(data, dtype='<u4', count=1, offset=offset)[0])
        offset += 4
        layer_sizes = np.frombuffer(data, dtype='<u4', count=n_sizes, offset=offset).astype(int).tolist()
        offset += 4 * n_sizes
        tag, offset = _read_text(offset)
        activation_text, offset = _read_text(offset)
        n_values = int(np.frombuffer(data, dtype='<u8', count=1, offset=offset)[0])
        offset += 8
        values = np.frombuffer(data, dtype='<f8', count=n_values, offset=offset).astype(np.float64)
        offset += 8 * n_values
        activations = activation_text.split(',') if activation_text else []
        records.append(CheckpointRecord(tag=tag, layer_sizes=layer_sizes, values=values, activations=activations))
    return records


def save_mlp_checkpoint(path: str, net: Mlp, tag: str = 'mlp'):
    write_checkpoint(path, [mlp_record(tag, net)])


def load_mlp_checkpoint(path: str) -> Mlp:
    records = read_checkpoint(path)
    if len(records) != 1:
        raise ValueError(f'{path} holds {len(records)} records, expected a single network')
    return record_to_mlp(records[0])


def records_by_tag(records: List[CheckpointRecord]) -> dict:
    out = {}
    for r in records:
        if r.tag in out:
            raise ValueError(f'Duplicate checkpoint tag: {r.tag}')
        out[r.tag] = r
    return out
