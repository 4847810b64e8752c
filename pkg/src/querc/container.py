"""Binary model container with bit-exact round trips.

Layout (all integers little-endian):

    magic "QRC1" | u32 format_version | u8 kind tag | u32 section count
    per section: u16 name length | name (UTF-8) | u64 payload length | payload

Matrix sections hold ``u8 ndim | ndim * u64 shape | row-major f64 data``;
JSON sections hold canonical UTF-8 JSON (sorted keys, no whitespace).
The kind tag is readable without parsing the body, so callers can detect a
mismatched model kind up front.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContainerError

MAGIC = b"QRC1"
FORMAT_VERSION = 1

KIND_TAGS = {"doc2vec": 1, "lstm_autoencoder": 2, "forest_classifier": 3}
TAG_KINDS = {tag: kind for kind, tag in KIND_TAGS.items()}

_HEADER = struct.Struct("<4sIB I".replace(" ", ""))  # magic, version, kind, n_sections


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode_matrix(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    head = struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes(order="C")


def decode_matrix(payload: bytes) -> np.ndarray:
    if len(payload) < 1:
        raise ContainerError("truncated matrix section")
    ndim = payload[0]
    off = 1 + 8 * ndim
    if len(payload) < off:
        raise ContainerError("truncated matrix shape")
    shape = struct.unpack_from(f"<{ndim}Q", payload, 1)
    n = int(np.prod(shape)) if ndim else 1
    if len(payload) != off + 8 * n:
        raise ContainerError("matrix payload length does not match its shape")
    return np.frombuffer(payload, dtype="<f8", count=n, offset=off).reshape(shape).copy()


@dataclass
class ModelArtifact:
    """A decoded container: kind, version, and named binary sections."""

    kind: str
    format_version: int = FORMAT_VERSION
    sections: dict[str, bytes] = field(default_factory=dict)

    def put_matrix(self, name: str, arr: np.ndarray) -> None:
        self.sections[name] = encode_matrix(arr)

    def matrix(self, name: str) -> np.ndarray:
        return decode_matrix(self._section(name))

    def put_json(self, name: str, obj) -> None:
        self.sections[name] = canonical_json(obj)

    def json(self, name: str):
        return json.loads(self._section(name).decode("utf-8"))

    def _section(self, name: str) -> bytes:
        try:
            return self.sections[name]
        except KeyError:
            raise ContainerError(f"container has no section {name!r}") from None


def save_model(artifact: ModelArtifact, path) -> None:
    if artifact.kind not in KIND_TAGS:
        raise ContainerError(f"unknown model kind {artifact.kind!r}")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", artifact.format_version)
    blob += struct.pack("<B", KIND_TAGS[artifact.kind])
    blob += struct.pack("<I", len(artifact.sections))
    for name, payload in artifact.sections.items():
        raw = name.encode("utf-8")
        blob += struct.pack("<H", len(raw))
        blob += raw
        blob += struct.pack("<Q", len(payload))
        blob += payload
    with open(path, "wb") as fh:
        fh.write(blob)


def peek_kind(path) -> str:
    """Read the model kind from the header without parsing the body."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(9)
    except OSError as exc:
        raise ContainerError(f"cannot read model {path}: {exc}") from exc
    _check_header(head, path)
    return TAG_KINDS[head[8]]


def _check_header(head: bytes, path) -> None:
    if len(head) < 9:
        raise ContainerError(f"{path}: truncated header")
    if head[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic {head[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", head, 4)
    if version != FORMAT_VERSION:
        raise ContainerError(
            f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}"
        )
    if head[8] not in TAG_KINDS:
        raise ContainerError(f"{path}: unknown kind tag {head[8]}")


def load_model(path, expect_kind: str | None = None) -> ModelArtifact:
    """Load a container; ``expect_kind`` turns a kind mismatch into an error
    before the body is parsed."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ContainerError(f"cannot read model {path}: {exc}") from exc
    _check_header(data[:9], path)
    kind = TAG_KINDS[data[8]]
    if expect_kind is not None and kind != expect_kind:
        raise ContainerError(f"{path}: model kind is {kind!r}, expected {expect_kind!r}")
    try:
        (n_sections,) = struct.unpack_from("<I", data, 9)
        off = 13
        sections: dict[str, bytes] = {}
        for _ in range(n_sections):
            (name_len,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + name_len].decode("utf-8")
            off += name_len
            (payload_len,) = struct.unpack_from("<Q", data, off)
            off += 8
            payload = data[off : off + payload_len]
            if len(payload) != payload_len:
                raise ContainerError(f"{path}: truncated section {name!r}")
            off += payload_len
            sections[name] = bytes(payload)
        if off != len(data):
            raise ContainerError(f"{path}: {len(data) - off} trailing bytes")
    except struct.error as exc:
        raise ContainerError(f"{path}: truncated container: {exc}") from exc
    version = struct.unpack_from("<I", data, 4)[0]
    return ModelArtifact(kind=kind, format_version=version, sections=sections)
