"""Bundled test paths, in field coordinates (inches, origin at the
bottom-left corner of a 144 x 144 field).

Both paths attach a heading target to every waypoint so the robot faces its
direction of travel; that is what lets the forward-looking camera see wall
images intermittently.

``figure7``
    Mixed test path: straight runs, a left turn, an elliptical arc over the
    top, and two closing turns. In path-local coordinates it starts at
    (0, 0) and ends at (75, 2); it is shifted by ``FIGURE7_OFFSET`` into
    the field.
``cycle``
    One closed warehouse -> hub -> warehouse loop. The warehouse is near
    the top-left corner; the loop runs counter-clockwise around the field.
"""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np

from .guidance import Path

FIGURE7_OFFSET = (24.0, 40.0)
WAREHOUSE = (24.0, 120.0)
HUB = (76.0, 40.0)

_ARC_STEP = math.radians(15.0)


class _Builder:
    def __init__(self, start: Tuple[float, float]):
        self.points: List[Tuple[float, float]] = [start]

    @property
    def here(self):
        return self.points[-1]

    def line(self, x, y):
        self.points.append((float(x), float(y)))
        return self

    def arc(self, cx, cy, rx, ry, phi0, phi1):
        """Elliptical arc from parameter ``phi0`` to ``phi1`` (sign sets direction)."""
        n = max(2, int(math.ceil(abs(phi1 - phi0) / _ARC_STEP)))
        for phi in np.linspace(phi0, phi1, n + 1)[1:]:
            self.points.append((cx + rx * math.cos(phi), cy + ry * math.sin(phi)))
        return self

    def build(self, offset=(0.0, 0.0)) -> Path:
        pts = np.array(self.points) + np.asarray(offset, dtype=float)
        seg = np.diff(pts, axis=0)
        tangent = np.arctan2(seg[:, 1], seg[:, 0])
        headings = [float(tangent[0])] + [float(h) for h in tangent]
        return Path(pts, headings)


def figure7() -> Path:
    b = _Builder((0.0, 0.0))
    b.line(20, 0)
    b.arc(20, 10, 10, 10, -math.pi / 2, 0.0)          # left turn, now heading up
    b.line(30, 45)
    b.arc(45, 45, 15, 10, math.pi, 0.0)               # elliptical arc, clockwise
    b.line(60, 20)
    b.arc(67, 20, 7, 7, math.pi, 1.5 * math.pi)       # left turn, heading right
    b.arc(67, 5, 8, 8, math.pi / 2, 0.0)              # right turn, heading down
    b.line(75, 2)
    return b.build(FIGURE7_OFFSET)


def cycle() -> Path:
    wx, wy = WAREHOUSE
    hx, hy = HUB
    b = _Builder((wx, wy))
    b.line(wx, 60)
    b.arc(44, 60, 20, 20, math.pi, 1.5 * math.pi)
    b.line(hx, hy)
    b.arc(76, 60, 20, 20, -math.pi / 2, 0.0)
    b.line(96, 112)
    b.arc(76, 112, 20, 20, 0.0, math.pi / 2)
    b.line(36, 132)
    b.arc(36, 120, 12, 12, math.pi / 2, math.pi)
    path = b.build()
    # close exactly on the warehouse despite arc round-off
    path = Path(np.vstack([path.waypoints[:-1], [WAREHOUSE]]), path.headings)
    return path


CANONICAL_PATHS = {"figure7": figure7, "cycle": cycle}


def get_path(name: str) -> Path:
    try:
        return CANONICAL_PATHS[name]()
    except KeyError:
        raise ValueError(f"unknown path {name!r}; choose from {sorted(CANONICAL_PATHS)}") from None
