"""Sensor configuration: physical constants, config file I/O, validation.

All lengths are millimetres, angles radians, forces newtons unless a field
name says otherwise.  Config objects are frozen dataclasses and safe to
share across worker processes.

The config file format is flat ``section.key = value`` text, one entry per
line, ``#`` starts a comment.  Unknown keys are errors.  ``save_config``
followed by ``load_config`` is the identity on valid configs.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(Exception):
    """Missing file, malformed line, unknown key, or invariant violation."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Mechanical layout of the circular eight-whisker array.

    Whisker i sits on a ring of ``ring_radius`` at azimuth 2*pi*i/n.  Each
    whisker is a rigid rod pivoting at the membrane: ``l_u`` extends from
    the pivot to the free tip, ``l_l`` from the pivot down to the marker
    (electromagnet) end that the camera sees.
    """

    n_whiskers: int = 8
    ring_radius: float = 12.0
    whisker_total_len: float = 69.0
    l_u: float = 63.0
    l_l: float = 4.5
    membrane_thickness: float = 3.0
    membrane_inradius: float = 16.0
    whisker_diameter: float = 1.0
    marker_diameter: float = 4.0

    def azimuth(self, i: int) -> float:
        return 2.0 * math.pi * i / self.n_whiskers

    @property
    def azimuths(self) -> np.ndarray:
        return np.arange(self.n_whiskers) * (2.0 * math.pi / self.n_whiskers)

    @property
    def rod_radius(self) -> float:
        return self.whisker_diameter / 2.0

    @property
    def marker_radius(self) -> float:
        return self.marker_diameter / 2.0


@dataclass(frozen=True)
class CameraModel:
    """Orthographic camera looking at the marker plane.

    ``k`` is the scale in mm per pixel; image +x is right, +y is down.
    The uniform-scale assumption holds because marker travel is small
    compared to the camera distance.
    """

    width_px: int = 640
    height_px: int = 480
    k: float = 0.07
    center_x: float = 320.0
    center_y: float = 240.0

    @property
    def center_px(self) -> np.ndarray:
        return np.array([self.center_x, self.center_y])


@dataclass(frozen=True)
class ActuationParams:
    """Voltage-to-deflection model of one electromagnet/permanent-magnet pair.

    The steady-state deflection is linear, ``gain`` rad per volt, the
    magnetic torque balancing the torsional spring.  ``damping`` over
    ``spring_stiffness`` sets the first-order relaxation time constant.
    """

    gain: float = 0.06           # rad per volt, steady state
    spring_stiffness: float = 2.0  # N*mm per rad
    damping: float = 0.1         # N*mm*s per rad
    max_voltage: float = 6.0
    coil_resistance: float = 7.0  # ohm, informational

    @property
    def time_constant(self) -> float:
        return self.damping / self.spring_stiffness


@dataclass(frozen=True)
class VisionParams:
    """Thresholds and kernel sizes of the marker tracking pipeline.

    Red wraps the hue origin, so the mask accepts hue <= hue_lo or
    hue >= hue_hi (degrees).  The erosion kernel is square all-ones,
    anchored at offsets -(n//2) .. n - n//2 - 1 in each axis.
    """

    hue_lo: float = 10.0
    hue_hi: float = 350.0
    s_min: float = 0.5
    v_min: float = 0.3
    erosion_kernel: int = 10
    min_area: int = 50
    max_match_dist: float = 60.0
    connectivity: int = 8


@dataclass(frozen=True)
class SensorConfig:
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    camera: CameraModel = field(default_factory=CameraModel)
    actuation: ActuationParams = field(default_factory=ActuationParams)
    vision: VisionParams = field(default_factory=VisionParams)
    seed: int = 0


_SECTIONS = {
    "geometry": ArrayGeometry,
    "camera": CameraModel,
    "actuation": ActuationParams,
    "vision": VisionParams,
}

_INT_FIELDS = {
    "geometry.n_whiskers",
    "camera.width_px",
    "camera.height_px",
    "vision.erosion_kernel",
    "vision.min_area",
    "vision.connectivity",
    "seed",
}


def _all_keys() -> list[str]:
    keys = []
    for name, cls in _SECTIONS.items():
        keys.extend(f"{name}.{f.name}" for f in dataclasses.fields(cls))
    keys.append("seed")
    return keys


def _parse_value(key: str, text: str, lineno: int) -> int | float:
    try:
        if key in _INT_FIELDS:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {text!r} for {key}") from None


def load_config(path: str | Path) -> SensorConfig:
    """Read a config file, fill absent fields with defaults, validate.

    Raises ConfigError for a missing file, malformed or unknown entries
    (with line numbers), or any invariant violation.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")

    known = set(_all_keys())
    overrides: dict[str, int | float] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        overrides[key] = _parse_value(key, value.strip(), lineno)

    sections: dict[str, object] = {}
    for name, cls in _SECTIONS.items():
        kwargs = {
            f.name: overrides[f"{name}.{f.name}"]
            for f in dataclasses.fields(cls)
            if f"{name}.{f.name}" in overrides
        }
        sections[name] = cls(**kwargs)
    config = SensorConfig(seed=int(overrides.get("seed", 0)), **sections)

    problems = validate(config)
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))
    return config


def save_config(config: SensorConfig, path: str | Path) -> None:
    """Write every field as ``section.key = value``; floats use repr."""
    lines = []
    for name, cls in _SECTIONS.items():
        section = getattr(config, name)
        for f in dataclasses.fields(cls):
            lines.append(f"{name}.{f.name} = {getattr(section, f.name)!r}")
    lines.append(f"seed = {config.seed}")
    Path(path).write_text("\n".join(lines) + "\n")


def validate(config: SensorConfig) -> list[str]:
    """Return a list of invariant violations; empty iff the config is valid.

    Checks that depend on other fields being sane (the marker-in-frame
    check needs valid geometry and camera scale) are skipped once a
    prerequisite has already been reported, so one root cause yields one
    violation.
    """
    g, c, a, v = config.geometry, config.camera, config.actuation, config.vision
    problems: list[str] = []
    geom_ok = True

    def geom_check(ok: bool, msg: str) -> None:
        nonlocal geom_ok
        if not ok:
            problems.append(msg)
            geom_ok = False

    geom_check(g.n_whiskers >= 1, "geometry.n_whiskers must be >= 1")
    geom_check(g.l_l > 0, "geometry.l_l must be > 0")
    geom_check(g.l_u > 0, "geometry.l_u must be > 0")
    geom_check(g.l_u + g.l_l <= g.whisker_total_len,
               "geometry: l_u + l_l must not exceed whisker_total_len")
    geom_check(g.ring_radius < g.membrane_inradius,
               "geometry.ring_radius must be smaller than membrane_inradius")
    geom_check(g.whisker_diameter > 0, "geometry.whisker_diameter must be > 0")
    geom_check(g.marker_diameter > 0, "geometry.marker_diameter must be > 0")
    geom_check(g.membrane_thickness > 0, "geometry.membrane_thickness must be > 0")

    cam_ok = True
    if c.k <= 0:
        problems.append("camera.k must be > 0")
        cam_ok = False
    if c.width_px < 1 or c.height_px < 1:
        problems.append("camera dimensions must be positive")
        cam_ok = False

    if a.gain < 0:
        problems.append("actuation.gain must be >= 0")
    if a.spring_stiffness <= 0:
        problems.append("actuation.spring_stiffness must be > 0")
    if a.damping <= 0:
        problems.append("actuation.damping must be > 0")
    if a.max_voltage <= 0:
        problems.append("actuation.max_voltage must be > 0")

    if v.erosion_kernel < 1:
        problems.append("vision.erosion_kernel must be >= 1")
    if v.min_area < 1:
        problems.append("vision.min_area must be >= 1")
    if not (0.0 <= v.hue_lo <= 360.0 and 0.0 <= v.hue_hi <= 360.0):
        problems.append("vision hue thresholds must lie in [0, 360]")
    if not (0.0 <= v.s_min <= 1.0 and 0.0 <= v.v_min <= 1.0):
        problems.append("vision saturation/value minima must lie in [0, 1]")
    if v.max_match_dist <= 0:
        problems.append("vision.max_match_dist must be > 0")
    if v.connectivity not in (4, 8):
        problems.append("vision.connectivity must be 4 or 8")

    if geom_ok and cam_ok:
        margin = g.marker_radius / c.k
        pos = neutral_marker_positions(g, c)
        inside = (
            (pos[:, 0] >= margin) & (pos[:, 0] <= c.width_px - 1 - margin)
            & (pos[:, 1] >= margin) & (pos[:, 1] <= c.height_px - 1 - margin)
        )
        if not inside.all():
            bad = int(np.flatnonzero(~inside)[0])
            problems.append(
                f"neutral marker {bad} does not fit the frame with a marker-radius margin"
            )

    return problems


def neutral_marker_positions(geometry: ArrayGeometry, camera: CameraModel) -> np.ndarray:
    """Pixel positions of the markers at rest, one row (x, y) per whisker.

    position[i] = center + (ring_radius / k) * (cos az_i, sin az_i).
    Pure formula; whether the result fits the frame is validate()'s job.
    """
    az = geometry.azimuths
    r_px = geometry.ring_radius / camera.k
    return camera.center_px + r_px * np.stack([np.cos(az), np.sin(az)], axis=1)
