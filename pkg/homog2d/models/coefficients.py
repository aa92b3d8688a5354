"""
Periodic coefficient sets expressed as short trigonometric polynomials.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MAX_MODES = 64

# 1-based "i.j.alpha.beta" (A), "i.alpha.beta" (V, B), "alpha.beta" (c)
KEY_ARITY = {"A": 4, "V": 3, "B": 3, "c": 2}


class FourierEntry(BaseModel):
    """constant + Σ (cos_amp·cos 2π(k·y) + sin_amp·sin 2π(k·y))."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    constant: float = 0.0
    modes: list[tuple[int, int, float, float]] = Field(default_factory=list, max_length=MAX_MODES)

    @property
    def kmax(self) -> int:
        return max((max(abs(k1), abs(k2)) for k1, k2, _, _ in self.modes), default=0)

    @property
    def sup_bound(self) -> float:
        return abs(self.constant) + sum(abs(ca) + abs(sa) for _, _, ca, sa in self.modes)

    def evaluate(self, y1: np.ndarray | float, y2: np.ndarray | float) -> np.ndarray:
        y1 = np.asarray(y1, dtype=np.float64)
        y2 = np.asarray(y2, dtype=np.float64)
        out = np.full(np.broadcast_shapes(y1.shape, y2.shape), self.constant, dtype=np.float64)
        for k1, k2, cos_amp, sin_amp in self.modes:
            # phase reduced mod 1 keeps dyadic lattices bit-periodic
            phase = 2.0 * np.pi * np.mod(k1 * y1 + k2 * y2, 1.0)
            if cos_amp:
                out += cos_amp * np.cos(phase)
            if sin_amp:
                out += sin_amp * np.sin(phase)
        return out

    def derivative(self, axis: int, y1: np.ndarray | float, y2: np.ndarray | float) -> np.ndarray:
        """∂/∂y_axis (axis 0 or 1) of the entry."""
        y1 = np.asarray(y1, dtype=np.float64)
        y2 = np.asarray(y2, dtype=np.float64)
        out = np.zeros(np.broadcast_shapes(y1.shape, y2.shape), dtype=np.float64)
        for k1, k2, cos_amp, sin_amp in self.modes:
            k = (k1, k2)[axis]
            if k == 0:
                continue
            phase = 2.0 * np.pi * np.mod(k1 * y1 + k2 * y2, 1.0)
            out += 2.0 * np.pi * k * (sin_amp * np.cos(phase) - cos_amp * np.sin(phase))
        return out


def parse_key(kind: str, key: str) -> tuple[int, ...]:
    """'1.2.1.1' -> (0, 1, 0, 0)."""
    parts = key.split(".")
    if len(parts) != KEY_ARITY[kind] or not all(p.isdigit() for p in parts):
        raise ValueError(f"{kind} key '{key}' must have {KEY_ARITY[kind]} dot-separated 1-based indices")
    return tuple(int(p) - 1 for p in parts)


def format_key(index: tuple[int, ...]) -> str:
    return ".".join(str(i + 1) for i in index)


class CoefficientSet(BaseModel):
    """Coefficients (A, V, B, c) of L_ε together with λ, μ and κ."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    name: str = "custom"
    m: int = Field(..., ge=1, le=4, description="Number of unknown components")
    A: dict[str, FourierEntry] = Field(..., description="a_ij^{αβ} keyed 'i.j.α.β'")
    V: dict[str, FourierEntry] = Field(default_factory=dict, description="V_i^{αβ} keyed 'i.α.β'")
    B: dict[str, FourierEntry] = Field(default_factory=dict, description="B_i^{αβ} keyed 'i.α.β'")
    c: dict[str, FourierEntry] = Field(default_factory=dict, description="c^{αβ} keyed 'α.β'")
    lam: float = Field(0.0, alias="lambda", ge=0.0)
    mu: float = Field(..., gt=0.0, le=1.0, description="Declared ellipticity constant")
    kappa: float = Field(0.0, ge=0.0, description="Declared bound on V, B, c")

    @field_validator("A", "V", "B", "c")
    @classmethod
    def _check_keys(cls, value: dict[str, FourierEntry], info) -> dict[str, FourierEntry]:
        for key in value:
            parse_key(info.field_name, key)
        return value

    @model_validator(mode="after")
    def _check_ranges(self) -> "CoefficientSet":
        for kind in KEY_ARITY:
            for key in getattr(self, kind):
                index = parse_key(kind, key)
                spatial = index[: KEY_ARITY[kind] - 2]
                components = index[KEY_ARITY[kind] - 2 :]
                if any(i > 1 for i in spatial) or any(a >= self.m for a in components):
                    raise ValueError(f"{kind} key '{key}' out of range for m={self.m}")
        if not self.A:
            raise ValueError("A must have at least one entry")
        return self

    def entries(self, kind: str) -> Iterator[tuple[tuple[int, ...], FourierEntry]]:
        for key, entry in getattr(self, kind).items():
            yield parse_key(kind, key), entry

    @property
    def kmax(self) -> int:
        return max((entry.kmax for kind in KEY_ARITY for _, entry in self.entries(kind)), default=0)

    @property
    def has_lower_order(self) -> bool:
        return bool(self.V or self.B or self.c)

    def a_component(self, i: int, j: int, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        """a_ij^{··} sampled at (y1, y2); shape (m, m, *y.shape)."""
        return self._component("A", (i, j), y1, y2)

    def v_component(self, i: int, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return self._component("V", (i,), y1, y2)

    def b_component(self, i: int, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return self._component("B", (i,), y1, y2)

    def c_values(self, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return self._component("c", (), y1, y2)

    def _component(self, kind: str, spatial: tuple[int, ...], y1, y2) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(y1), np.shape(y2))
        out = np.zeros((self.m, self.m, *shape), dtype=np.float64)
        for index, entry in self.entries(kind):
            if index[: len(spatial)] == spatial:
                alpha, beta = index[len(spatial) :]
                out[alpha, beta] = entry.evaluate(y1, y2)
        return out

    def tensor_A(self, y1, y2) -> np.ndarray:
        """Full a_ij^{αβ}; shape (2, 2, m, m, *y.shape)."""
        return np.stack(
            [np.stack([self.a_component(i, j, y1, y2) for j in range(2)]) for i in range(2)]
        )

    def adjoint(self) -> "CoefficientSet":
        """Coefficients of the formal adjoint L*_ε."""

        def relabel(kind: str, source: dict[str, FourierEntry], swap) -> dict[str, FourierEntry]:
            return {format_key(swap(parse_key(kind, key))): entry for key, entry in source.items()}

        return self.model_copy(
            update={
                "name": f"{self.name}-adjoint",
                "A": relabel("A", self.A, lambda t: (t[1], t[0], t[3], t[2])),
                "V": relabel("B", self.B, lambda t: (t[0], t[2], t[1])),
                "B": relabel("V", self.V, lambda t: (t[0], t[2], t[1])),
                "c": relabel("c", self.c, lambda t: (t[1], t[0])),
            }
        )

    def leading_order(self) -> "CoefficientSet":
        """Only A; λ = 0."""
        return self.model_copy(
            update={"name": f"{self.name}-leading", "V": {}, "B": {}, "c": {}, "lam": 0.0, "kappa": 0.0}
        )

    def with_lambda(self, lam: float) -> "CoefficientSet":
        return self.model_copy(update={"lam": float(lam)})

    def digest(self) -> str:
        """sha256 of the canonical serialization; the name does not contribute."""
        payload = self.model_dump(by_alias=True, exclude={"name"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
