import json
import struct

import numpy as np

from pathlib import Path
from dataclasses import dataclass, field

from app.core.model import InstanceClassifierConfig, ModelParams
from app.core.pooling import PoolingConfig
from app.errors import IngestionError


MAGIC = b"MILCKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """
    Everything needed to rebuild and evaluate a trained model.

    Attributes:
        model (InstanceClassifierConfig): Architecture.
        pooling (PoolingConfig): Bag pooling operator.
        params (ModelParams): Trained weights.
        train (dict): Snapshot of the TrainConfig used.
        layout (dict): Patch protocol (patch/subimage sizes, white filter) of the training data.
        best_epoch (int): Epoch whose weights were kept.
        best_val_loss (float): Validation loss at best_epoch.
    """

    model: InstanceClassifierConfig
    pooling: PoolingConfig
    params: ModelParams
    train: dict = field(default_factory=dict)
    layout: dict = field(default_factory=dict)
    best_epoch: int = 0
    best_val_loss: float = float("nan")

    def config_blob(self) -> bytes:
        payload = {
            "model": self.model.to_dict(),
            "pooling": self.pooling.to_dict(),
            "train": self.train,
            "layout": self.layout,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "params_version": self.params.version,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save(checkpoint: Checkpoint) -> bytes:
    """
    Serialize a checkpoint.

    Layout (little-endian): magic "MILCKPT", u32 format version, u32 length +
    UTF-8 JSON config blob, then one record per tensor: u32 length + UTF-8
    name, u32 rank, u64 extents, f64 payload in row-major order.
    """
    blob = checkpoint.config_blob()
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(blob)), blob]
    for name, tensor in checkpoint.params.tensors.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)) + encoded)
        chunks.append(struct.pack("<I", tensor.ndim) + struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    return b"".join(chunks)


def load(data: bytes) -> Checkpoint:
    """
    Parse bytes produced by `save`.

    Raises:
        IngestionError: On a bad magic, unknown version or truncated record.
    """
    view = memoryview(data)
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(view):
            raise IngestionError("Truncated checkpoint")
        chunk = bytes(view[offset:offset + n])
        offset += n
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise IngestionError("Not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise IngestionError(f"Unsupported checkpoint version {version}")
    (blob_length,) = struct.unpack("<I", take(4))
    config = json.loads(take(blob_length).decode("utf-8"))

    tensors = {}
    while offset < len(view):
        (name_length,) = struct.unpack("<I", take(4))
        name = take(name_length).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)

    return Checkpoint(
        model=InstanceClassifierConfig.from_dict(config["model"]),
        pooling=PoolingConfig(**config["pooling"]),
        params=ModelParams(tensors, config.get("params_version", 0)),
        train=config["train"],
        layout=config["layout"],
        best_epoch=config["best_epoch"],
        best_val_loss=config["best_val_loss"],
    )


def save_file(checkpoint: Checkpoint, filename: str | Path):
    Path(filename).parent.mkdir(parents=True, exist_ok=True)
    Path(filename).write_bytes(save(checkpoint))


def load_file(filename: str | Path) -> Checkpoint:
    try:
        data = Path(filename).read_bytes()
    except OSError as e:
        raise IngestionError(f"Cannot read checkpoint '{filename}': {e}") from e
    return load(data)
