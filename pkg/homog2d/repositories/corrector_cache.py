"""
File-backed store for corrector bundles and nodal field blocks.

Layout (little-endian): magic, u16 version, u32 N (or M), u32 m, float64 arrays in a
fixed order, then the CRC32 of everything before it.
"""

from __future__ import annotations

import logging
import struct
import zlib
from pathlib import Path

import numpy as np

from homog2d.core.errors import CacheChecksumError, CacheFormatError
from homog2d.services.cell import CorrectorBundle
from homog2d.services.mesh import DomainMesh, Field

logger = logging.getLogger(__name__)

BUNDLE_MAGIC = b"HOM2"
FIELD_MAGIC = b"HOMF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHII")
_CRC = struct.Struct("<I")
_FLOAT = np.dtype("<f8")


def _bundle_shapes(N: int, m: int) -> list[tuple[int, ...]]:
    """χ₀..χ₂, Θ₀..Θ₂, b, E."""
    block = (m, m, N, N)
    return [block] * 3 + [block] * 3 + [(2, 3, *block), (2, 2, 3, *block)]


def _pack(magic: bytes, size: int, m: int, arrays: list[np.ndarray]) -> bytes:
    payload = _HEADER.pack(magic, FORMAT_VERSION, size, m)
    payload += b"".join(np.ascontiguousarray(a, dtype=_FLOAT).tobytes() for a in arrays)
    return payload + _CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF)


def _unpack(data: bytes, magic: bytes, path: Path) -> tuple[int, int, memoryview]:
    if len(data) < _HEADER.size + _CRC.size or data[:4] != magic:
        raise CacheFormatError(
            f"{path} is not a {magic.decode()} file", details={"path": str(path), "magic": data[:4].hex()}
        )
    body, (stored,) = data[: -_CRC.size], _CRC.unpack(data[-_CRC.size :])
    actual = zlib.crc32(body) & 0xFFFFFFFF
    if actual != stored:
        raise CacheChecksumError(
            f"{path}: CRC32 mismatch (stored {stored:08x}, computed {actual:08x})",
            details={"path": str(path)},
        )
    _, version, size, m = _HEADER.unpack_from(body)
    if version != FORMAT_VERSION:
        raise CacheFormatError(
            f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})",
            details={"path": str(path), "version": version},
        )
    return size, m, memoryview(body)[_HEADER.size :]


def _split(payload: memoryview, shapes: list[tuple[int, ...]], path: Path) -> list[np.ndarray]:
    expected = sum(int(np.prod(s)) for s in shapes) * _FLOAT.itemsize
    if len(payload) != expected:
        raise CacheFormatError(
            f"{path}: payload has {len(payload)} bytes, header implies {expected}",
            details={"path": str(path)},
        )
    arrays, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(payload, dtype=_FLOAT, count=count, offset=offset).reshape(shape).copy())
        offset += count * _FLOAT.itemsize
    return arrays


def write_bundle(bundle: CorrectorBundle, path: Path) -> Path:
    arrays = [*bundle.chi, *bundle.theta, bundle.b, bundle.E]
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(_pack(BUNDLE_MAGIC, bundle.N, bundle.m, arrays))
    tmp.replace(path)
    return path


def read_bundle(path: Path, digest: str = "") -> CorrectorBundle:
    N, m, payload = _unpack(path.read_bytes(), BUNDLE_MAGIC, path)
    arrays = _split(payload, _bundle_shapes(N, m), path)
    return CorrectorBundle(
        N=N,
        m=m,
        digest=digest,
        chi=np.stack(arrays[0:3]),
        theta=np.stack(arrays[3:6]),
        b=arrays[6],
        E=arrays[7],
    )


def cache_roundtrip(bundle: CorrectorBundle, path: Path) -> CorrectorBundle:
    """Write then read back; arrays come back bit-identical."""
    write_bundle(bundle, path)
    return read_bundle(path, bundle.digest)


def write_field_block(u: Field, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_pack(FIELD_MAGIC, u.mesh.M, u.m, [u.full()]))
    return path


def read_field_block(path: Path) -> Field:
    M, m, payload = _unpack(path.read_bytes(), FIELD_MAGIC, path)
    (full,) = _split(payload, [(m, M + 2, M + 2)], path)
    return Field.from_full(DomainMesh(M=M), full)


class CorrectorCacheRepository:
    """
    Corrector bundles keyed by coefficient digest, torus size and solve tolerance.

    A bundle solved at a tighter tolerance also serves a looser request.
    """

    def __init__(self, root: Path) -> None:
        self._root = root

    @classmethod
    def create(cls, root: Path) -> "CorrectorCacheRepository":
        root.mkdir(parents=True, exist_ok=True)
        return cls(root)

    @property
    def root(self) -> Path:
        return self._root

    def path_for(self, digest: str, N: int, tol: float) -> Path:
        return self._root / f"{digest[:16]}-N{N}-tol{tol:g}.hom2"

    def _solved_tolerances(self, digest: str, N: int) -> dict[float, Path]:
        found = {}
        for path in self._root.glob(f"{digest[:16]}-N{N}-tol*.hom2"):
            try:
                found[float(path.stem.rsplit("-tol", 1)[1])] = path
            except ValueError:
                logger.warning(f"Ignoring cache file {path.name}: unreadable tolerance in its name")
        return found

    def load(self, digest: str, N: int, tol: float) -> CorrectorBundle | None:
        """Cached bundle, or None on a miss, an N or tolerance mismatch or a damaged file."""
        solved = self._solved_tolerances(digest, N)
        usable = sorted((t for t in solved if t <= tol), reverse=True)
        if not usable:
            others = sorted(p.name for p in self._root.glob(f"{digest[:16]}-N*.hom2"))
            if others:
                logger.warning(
                    f"Cache holds {others} for this coefficient set but N={N}, tol={tol:g} was requested; bypassing"
                )
            else:
                logger.info(f"Cache miss for {digest[:16]} at N={N}")
            return None
        path = solved[usable[0]]
        try:
            bundle = read_bundle(path, digest)
        except (CacheFormatError, CacheChecksumError) as exc:
            logger.warning(f"Ignoring cache file {path.name}: {exc.message}; recomputing")
            return None
        if bundle.N != N:
            logger.warning(f"Cache file {path.name} holds N={bundle.N}, expected {N}; bypassing")
            return None
        logger.info(f"Cache hit {path.name}")
        return bundle

    def save(self, bundle: CorrectorBundle, tol: float) -> Path:
        path = write_bundle(bundle, self.path_for(bundle.digest, bundle.N, tol))
        logger.info(f"Cached correctors to {path}")
        return path
