"""Portable named-tensor container and its binary file format.

Layout::

    b"SFDW1\\n"
    uint64 little-endian header length
    UTF-8 header, one line per tensor: name \\t dtype \\t d0,d1,... \\t offset
    payload: little-endian IEEE-754 values, offsets relative to payload start

Tensors are kept in float64 in memory; ``f32`` entries are widened on load and
narrowed again on save, so a 32-bit store round-trips bit-exactly.
"""
from __future__ import annotations

import struct
from collections.abc import Iterator, Mapping
from dataclasses import dataclass

import numpy as np

MAGIC = b"SFDW1\n"
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class WeightFileError(ValueError):
    """Malformed or inconsistent weight file."""


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    dtype: str
    shape: tuple[int, ...]
    offset: int

    @property
    def nbytes(self) -> int:
        return int(np.prod(self.shape)) * _DTYPES[self.dtype].itemsize


class WeightStore(Mapping):
    """Immutable-by-convention mapping from dotted names to float64 arrays."""

    def __init__(self, tensors: Mapping[str, np.ndarray] | None = None, dtype: str = "f32"):
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype tag {dtype!r}")
        self._arrays: dict[str, np.ndarray] = {}
        self._dtypes: dict[str, str] = {}
        for name, arr in (tensors or {}).items():
            self.add(name, arr, dtype)

    def add(self, name: str, array, dtype: str = "f32") -> None:
        if name in self._arrays:
            raise WeightFileError(f"duplicate tensor name {name!r}")
        if not name or any(ch in name for ch in "\t\n"):
            raise WeightFileError(f"invalid tensor name {name!r}")
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype tag {dtype!r}")
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim == 0 or arr.ndim > 4 or min(arr.shape) < 1:
            raise WeightFileError(f"{name}: shape {arr.shape} must have 1-4 extents, all >= 1")
        if dtype == "f32":
            arr = arr.astype("<f4").astype(np.float64)
        arr.setflags(write=False)
        self._arrays[name] = arr
        self._dtypes[name] = dtype

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._arrays[name]
        except KeyError:
            raise KeyError(f"missing weight {name!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def dtype_of(self, name: str) -> str:
        return self._dtypes[name]

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        """Entries under ``prefix.`` with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self._arrays.items() if k.startswith(p)}

    def manifest(self) -> list[ManifestEntry]:
        entries, offset = [], 0
        for name in sorted(self._arrays):
            e = ManifestEntry(name, self._dtypes[name], self._arrays[name].shape, offset)
            entries.append(e)
            offset += e.nbytes
        return entries

    def to_bytes(self) -> bytes:
        entries = self.manifest()
        header = "".join(
            f"{e.name}\t{e.dtype}\t{','.join(map(str, e.shape))}\t{e.offset}\n" for e in entries
        ).encode("utf-8")
        parts = [MAGIC, struct.pack("<Q", len(header)), header]
        for e in entries:
            parts.append(self._arrays[e.name].astype(_DTYPES[e.dtype]).tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "WeightStore":
        if blob[: len(MAGIC)] != MAGIC:
            raise WeightFileError("bad magic bytes; not a weight file")
        pos = len(MAGIC)
        if len(blob) < pos + 8:
            raise WeightFileError("truncated file: missing header length")
        (hlen,) = struct.unpack("<Q", blob[pos : pos + 8])
        pos += 8
        if len(blob) < pos + hlen:
            raise WeightFileError("truncated file: header shorter than declared")
        try:
            header = blob[pos : pos + hlen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFileError(f"header is not UTF-8: {exc}") from None
        payload = memoryview(blob)[pos + hlen :]

        entries: list[ManifestEntry] = []
        seen: set[str] = set()
        for lineno, line in enumerate(header.splitlines(), 1):
            fields = line.split("\t")
            if len(fields) != 4:
                raise WeightFileError(f"header line {lineno}: expected 4 tab-separated fields")
            name, dtype, shape_s, off_s = fields
            if name in seen:
                raise WeightFileError(f"duplicate tensor name {name!r}")
            seen.add(name)
            if dtype not in _DTYPES:
                raise WeightFileError(f"{name}: unknown dtype {dtype!r}")
            try:
                shape = tuple(int(d) for d in shape_s.split(","))
                offset = int(off_s)
            except ValueError:
                raise WeightFileError(f"{name}: malformed shape or offset") from None
            if min(shape) < 1 or offset < 0:
                raise WeightFileError(f"{name}: invalid shape {shape} or offset {offset}")
            entries.append(ManifestEntry(name, dtype, shape, offset))

        spans = sorted(entries, key=lambda e: e.offset)
        for prev, cur in zip(spans, spans[1:]):
            if prev.offset + prev.nbytes > cur.offset:
                raise WeightFileError(f"{cur.name}: payload overlaps {prev.name}")
        store = cls()
        for e in entries:
            end = e.offset + e.nbytes
            if end > len(payload):
                raise WeightFileError(f"{e.name}: truncated payload ({end} > {len(payload)} bytes)")
            arr = np.frombuffer(payload[e.offset : end], dtype=_DTYPES[e.dtype]).reshape(e.shape)
            store.add(e.name, arr, e.dtype)
        return store

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "WeightStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def weightstore_save(store: WeightStore) -> bytes:
    return store.to_bytes()


def weightstore_load(blob: bytes) -> WeightStore:
    return WeightStore.from_bytes(blob)
