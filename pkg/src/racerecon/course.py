"""Regatta course geometry.

World frame: x runs along the direction of travel with the finish line at
x = 0 and the start at x = -race_distance; y runs across the lanes, lane 1
occupying [0, lane_width).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import ConfigError


class WorldPoint(NamedTuple):
    x: float
    y: float


class Buoy(NamedTuple):
    point: WorldPoint
    boundary: int
    segment: int


@dataclass(frozen=True)
class CourseSpec:
    race_distance: float = 500.0
    lane_count: int = 9
    lane_width: float = 9.0
    segment_spacing: float = 12.5
    buoy_boundaries: tuple[int, ...] = (0,)
    # lane number -> boat class name; boat classes are declared, never inferred
    boats: dict[int, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.race_distance > 0 and math.isfinite(self.race_distance)):
            raise ConfigError(f"race_distance must be positive, got {self.race_distance}")
        if self.lane_count < 1:
            raise ConfigError(f"lane_count must be >= 1, got {self.lane_count}")
        if not self.lane_width > 0:
            raise ConfigError(f"lane_width must be positive, got {self.lane_width}")
        if not self.segment_spacing > 0:
            raise ConfigError(f"segment_spacing must be positive, got {self.segment_spacing}")
        for b in self.buoy_boundaries:
            if not 0 <= b <= self.lane_count:
                raise ConfigError(f"buoy boundary {b} outside 0..{self.lane_count}")
        for lane in self.boats:
            if not 1 <= lane <= self.lane_count:
                raise ConfigError(f"boat declared for lane {lane} outside 1..{self.lane_count}")
        object.__setattr__(self, "buoy_boundaries", tuple(self.buoy_boundaries))

    @property
    def row_count(self) -> int:
        return int(math.floor(self.race_distance / self.segment_spacing + 1e-9)) + 1

    @property
    def segment_count(self) -> int:
        return int(round(self.race_distance / self.segment_spacing))

    @property
    def width(self) -> float:
        return self.lane_count * self.lane_width

    def segment_centers(self):
        s = self.segment_spacing
        return [-self.race_distance + s / 2 + k * s for k in range(self.segment_count)]

    def lane_center(self, lane: int) -> float:
        return (lane - 0.5) * self.lane_width

    def to_json(self) -> dict:
        d = {
            "race_distance_m": self.race_distance,
            "lane_count": self.lane_count,
            "lane_width_m": self.lane_width,
            "segment_spacing_m": self.segment_spacing,
            "buoy_boundaries": list(self.buoy_boundaries),
        }
        if self.boats:
            d["boats"] = {str(k): v for k, v in sorted(self.boats.items())}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CourseSpec":
        try:
            return cls(
                race_distance=float(d["race_distance_m"]),
                lane_count=int(d["lane_count"]),
                lane_width=float(d["lane_width_m"]),
                segment_spacing=float(d["segment_spacing_m"]),
                buoy_boundaries=tuple(int(b) for b in d["buoy_boundaries"]),
                boats={int(k): str(v) for k, v in d.get("boats", {}).items()},
            )
        except KeyError as e:
            raise ConfigError(f"course config missing field {e.args[0]!r}") from None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"course config malformed: {e}") from None


def load_course(path) -> CourseSpec:
    path = Path(path)
    try:
        with open(path) as f:
            d = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"course config not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"course config {path} is not valid JSON: {e}") from None
    return CourseSpec.from_json(d)


def buoy_world_positions(spec: CourseSpec) -> list[Buoy]:
    """All buoys, boundary-major then segment row from the start line."""
    out = []
    for b in spec.buoy_boundaries:
        y = b * spec.lane_width
        for s in range(spec.row_count):
            x = -spec.race_distance + s * spec.segment_spacing
            out.append(Buoy(WorldPoint(x, y), b, s))
    return out


def assign_lane(spec: CourseSpec, p) -> int | None:
    """Lane number for a world point, or None outside the course strip.

    Lanes are half-open intervals [lower, upper) across the track.
    """
    y = p[1]
    if not math.isfinite(y) or y < 0:
        return None
    j = int(math.floor(y / spec.lane_width)) + 1
    return j if j <= spec.lane_count else None
