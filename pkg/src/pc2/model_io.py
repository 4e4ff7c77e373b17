"""
Binary model file.

Layout (little-endian):

    magic        4 bytes   b"PC2M"
    version      u16
    n_dims       u16
    per dim      u8 kind, u16 name length, name (UTF-8), f64 a, f64 b
    p            u16
    q            f64
    cardinality  u32
    indices      cardinality x n_dims u16
    beta         cardinality f64
    diagnostics  u32 length, JSON (UTF-8, sorted keys)

The multi-index list is stored explicitly, so a reader never depends on
the enumeration order of the writing version.
"""

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from pc2.basis import BasisSpec, InputSpec, MarginalKind, MultiIndexSet, make_marginal
from pc2.errors import Pc2Error
from pc2.solvers import FitDiagnostics, Pc2Model

MAGIC = b"PC2M"
FORMAT_VERSION = 1

_KIND_CODES = {
    MarginalKind.DETERMINISTIC: 0,
    MarginalKind.UNIFORM: 1,
    MarginalKind.GAUSSIAN: 2,
}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


class ModelFormatError(Pc2Error):
    """Raised for unreadable or inconsistent model files."""
    pass


@dataclass(frozen=True, eq=False)
class StoredModel:
    model: Pc2Model
    diagnostics: dict[str, Any] = field(default_factory=dict)


def diagnostics_dict(diagnostics: FitDiagnostics, timing: bool = True) -> dict[str, Any]:
    data = asdict(diagnostics)
    if not timing:
        data["wall_time"] = {stage: 0.0 for stage in data["wall_time"]}
    return data


class ModelWriter:
    """Serializes fitted models."""

    def to_bytes(self, model: Pc2Model, diagnostics: dict[str, Any] | None = None) -> bytes:
        basis = model.basis
        parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, basis.input.dim)]
        for marginal in basis.input.marginals:
            name = marginal.name.encode("utf-8")
            a, b = marginal.params
            parts.append(struct.pack("<BH", _KIND_CODES[marginal.kind], len(name)))
            parts.append(name)
            parts.append(struct.pack("<dd", a, b))
        parts.append(struct.pack("<Hd", basis.p, basis.q))
        parts.append(struct.pack("<I", basis.cardinality))
        parts.append(basis.indices.array.astype("<u2").tobytes())
        parts.append(np.asarray(model.beta, dtype="<f8").tobytes())
        blob = json.dumps(diagnostics or {}, sort_keys=True).encode("utf-8")
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
        return b"".join(parts)

    def write(self, model: Pc2Model, file_path: str | Path, diagnostics: dict[str, Any] | None = None) -> Path:
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes(model, diagnostics))
        return path


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("Model file is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


class ModelReader:
    """Reads model files written by ModelWriter."""

    def from_bytes(self, data: bytes) -> StoredModel:
        cursor = _Cursor(data)
        if cursor.take(4) != MAGIC:
            raise ModelFormatError("Not a pc2 model file (bad magic)")
        version, n_dims = cursor.unpack("<HH")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"Unsupported model format version {version}")

        marginals = []
        for _ in range(n_dims):
            code, name_len = cursor.unpack("<BH")
            if code not in _CODE_KINDS:
                raise ModelFormatError(f"Unknown dimension kind code {code}")
            name = cursor.take(name_len).decode("utf-8")
            a, b = cursor.unpack("<dd")
            try:
                marginals.append(make_marginal(_CODE_KINDS[code], name, a, b))
            except Pc2Error as exc:
                raise ModelFormatError(f"Invalid dimension {name!r}: {exc}") from exc

        p, q = cursor.unpack("<Hd")
        (cardinality,) = cursor.unpack("<I")
        indices = np.frombuffer(cursor.take(2 * cardinality * n_dims), dtype="<u2")
        beta = np.frombuffer(cursor.take(8 * cardinality), dtype="<f8").astype(float)
        (blob_len,) = cursor.unpack("<I")
        try:
            diagnostics = json.loads(cursor.take(blob_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ModelFormatError(f"Corrupt diagnostics block: {exc}") from exc
        if cursor.pos != len(data):
            raise ModelFormatError(f"{len(data) - cursor.pos} trailing bytes after model data")

        try:
            basis = BasisSpec(
                InputSpec(tuple(marginals)),
                int(p),
                float(q),
                MultiIndexSet(indices.reshape(cardinality, n_dims).astype(np.int64)),
            )
        except Pc2Error as exc:
            raise ModelFormatError(f"Inconsistent basis: {exc}") from exc
        return StoredModel(Pc2Model(basis, beta), diagnostics)

    def read(self, file_path: str | Path) -> StoredModel:
        path = Path(file_path)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise ModelFormatError(f"Cannot read model {path}: {exc}") from exc
        return self.from_bytes(data)


def write_model(
    model: Pc2Model,
    file_path: str | Path,
    diagnostics: dict[str, Any] | None = None,
) -> Path:
    """Write a fitted model to a binary model file."""
    return ModelWriter().write(model, file_path, diagnostics)


def read_model(file_path: str | Path) -> StoredModel:
    """Read a binary model file."""
    return ModelReader().read(file_path)
