"""
Model checkpoint file

Byte layout (all integers little-endian):

    magic        16 bytes  b"ALPHAFORGE-CKPT\\n"
    header_len    8 bytes  unsigned 64-bit length of the header
    header       JSON, UTF-8, keys sorted, no whitespace
    payload      parameter arrays back to back, float64 little-endian, row-major

The header holds format_version, model_kind, factor_names, config, seed,
metrics and an `arrays` list of {name, shape, offset, nbytes}; offsets are
relative to the start of the payload. Nothing time-dependent is written, so
equal models give equal bytes.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from alphaforge.errors import DataError, MissingArtifactError
from alphaforge.models import build_model

logger = logging.getLogger(__name__)

MAGIC = b"ALPHAFORGE-CKPT\n"
FORMAT_VERSION = 1
DTYPE = "<f8"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


@dataclass
class ModelCheckpoint:
    model_kind: str
    factor_names: tuple
    params: dict
    config: dict = field(default_factory=dict)
    seed: int = 0
    metrics: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        self.factor_names = tuple(self.factor_names)

    @property
    def n_features(self):
        return len(self.factor_names)

    def build_model(self):
        model = build_model(self.model_kind, self.n_features, self.config.get("model", {}))
        model.load_state_dict(self.params)
        return model

    def to_bytes(self):
        arrays, chunks, offset = [], [], 0
        for name, value in self.params.items():
            data = np.ascontiguousarray(value, dtype=DTYPE).tobytes()
            arrays.append({"name": name, "shape": list(np.shape(value)), "offset": offset, "nbytes": len(data)})
            chunks.append(data)
            offset += len(data)
        header = {
            "format_version": self.format_version,
            "model_kind": self.model_kind,
            "factor_names": list(self.factor_names),
            "config": _jsonable(self.config),
            "seed": int(self.seed),
            "metrics": _jsonable(self.metrics),
            "arrays": arrays,
            "dtype": DTYPE,
        }
        header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob, source="<bytes>"):
        if not blob.startswith(MAGIC):
            raise DataError(f"{source} is not a model checkpoint")
        start = len(MAGIC)
        (header_len,) = struct.unpack_from("<Q", blob, start)
        start += 8
        header = json.loads(blob[start:start + header_len].decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise DataError(f"{source}: unsupported checkpoint format {header.get('format_version')}")
        payload = memoryview(blob)[start + header_len:]
        params = {}
        for entry in header["arrays"]:
            raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
            params[entry["name"]] = np.frombuffer(raw, dtype=header["dtype"]).reshape(entry["shape"]).astype(np.float64)
        return cls(header["model_kind"], tuple(header["factor_names"]), params, header["config"],
                   header["seed"], header["metrics"], header["format_version"])

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        logger.info("Wrote %s checkpoint %s", self.model_kind, path)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(path.name, path)
        return cls.from_bytes(path.read_bytes(), str(path))
