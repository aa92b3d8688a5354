"""
Writer for run artifacts: CSV tables, report.txt, JSON echo and hand-written SVG plots.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

from homog2d.repositories.corrector_cache import write_field_block
from homog2d.services.mesh import Field

logger = logging.getLogger(__name__)

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")
WIDTH, HEIGHT, MARGIN = 640, 440, 60


def format_value(value: Any) -> str:
    """Floats with 17 significant digits so reruns compare byte for byte."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if value is None:
        return ""
    return str(value)


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(
    title: str,
    series: dict[str, Sequence[tuple[float, float]]],
    *,
    x_label: str,
    y_label: str,
    log_x: bool = True,
    log_y: bool = True,
    lines: bool = True,
) -> str:
    """One polyline (or scatter) per series on shared, optionally logarithmic axes."""
    tx = (lambda v: math.log10(v)) if log_x else float
    ty = (lambda v: math.log10(v)) if log_y else float
    points = {
        name: [(tx(x), ty(y)) for x, y in data if (x > 0 or not log_x) and (y > 0 or not log_y)]
        for name, data in series.items()
    }
    every = [p for data in points.values() for p in data]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{_escape(title)}</text>',
    ]
    if every:
        x_lo, x_hi = min(p[0] for p in every), max(p[0] for p in every)
        y_lo, y_hi = min(p[1] for p in every), max(p[1] for p in every)
        x_hi, y_hi = max(x_hi, x_lo + 1e-9), max(y_hi, y_lo + 1e-9)

        def sx(v: float) -> float:
            return MARGIN + (v - x_lo) / (x_hi - x_lo) * (WIDTH - 2 * MARGIN)

        def sy(v: float) -> float:
            return HEIGHT - MARGIN - (v - y_lo) / (y_hi - y_lo) * (HEIGHT - 2 * MARGIN)

        parts.append(
            f'<path d="M{MARGIN},{MARGIN} V{HEIGHT - MARGIN} H{WIDTH - MARGIN}" stroke="black" fill="none"/>'
        )
        for value, anchor in ((x_lo, "start"), (x_hi, "end")):
            label = f"1e{value:.2f}" if log_x else f"{value:.3g}"
            parts.append(
                f'<text x="{sx(value):.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="{anchor}" '
                f'font-family="sans-serif" font-size="11">{label}</text>'
            )
        for value in (y_lo, y_hi):
            label = f"1e{value:.2f}" if log_y else f"{value:.3g}"
            parts.append(
                f'<text x="{MARGIN - 6}" y="{sy(value):.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{label}</text>'
            )
        for index, (name, data) in enumerate(points.items()):
            colour = PALETTE[index % len(PALETTE)]
            if lines and len(data) > 1:
                path = " ".join(f"{'M' if k == 0 else 'L'}{sx(x):.2f},{sy(y):.2f}" for k, (x, y) in enumerate(data))
                parts.append(f'<path d="{path}" stroke="{colour}" stroke-width="2" fill="none"/>')
            for x, y in data:
                parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="{3 if lines else 1.5}" fill="{colour}"/>')
            parts.append(
                f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * index}" fill="{colour}" '
                f'font-family="sans-serif" font-size="11">{_escape(name)}</text>'
            )
    parts.append(
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 16}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">{_escape(x_label)}</text>'
    )
    parts.append(
        f'<text x="16" y="{HEIGHT / 2:.1f}" transform="rotate(-90 16 {HEIGHT / 2:.1f})" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_escape(y_label)}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


class ReportRepository:
    """All artifacts of one run live under a single output directory."""

    def __init__(self, output_dir: Path) -> None:
        self._output_dir = output_dir
        self._written: list[Path] = []

    @classmethod
    def create(cls, output_dir: Path) -> "ReportRepository":
        output_dir.mkdir(parents=True, exist_ok=True)
        return cls(output_dir)

    @property
    def output_dir(self) -> Path:
        return self._output_dir

    @property
    def written(self) -> list[Path]:
        return list(self._written)

    def _target(self, name: str) -> Path:
        path = self._output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self._written.append(path)
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._target(name)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            count = 0
            for row in rows:
                writer.writerow([format_value(v) for v in row])
                count += 1
        logger.debug(f"wrote {path} ({count} rows)")
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self._target(name)
        path.write_text(text, encoding="utf-8")
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_svg(self, name: str, title: str, series: dict[str, Sequence[tuple[float, float]]], **kwargs) -> Path:
        return self.write_text(name, render_svg(title, series, **kwargs))

    def write_field_csv(self, name: str, u: Field) -> Path:
        """One row per node and component: x, y, component, value."""
        x1, x2 = u.mesh.coordinates
        full = u.full()
        rows = (
            (float(x1[i, j]), float(x2[i, j]), alpha + 1, float(full[alpha, i, j]))
            for alpha in range(u.m)
            for i in range(u.mesh.n)
            for j in range(u.mesh.n)
        )
        return self.write_csv(name, ("x", "y", "component", "value"), rows)

    def write_field_block(self, name: str, u: Field) -> Path:
        """Binary copy of a field in the cache's block format."""
        return write_field_block(u, self._target(name))
