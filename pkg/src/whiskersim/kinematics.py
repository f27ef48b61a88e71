"""Marker pixel displacement to whisker deflection angle and tip position.

Conventions: image +x right, +y down; the renderer maps sensor-frame
planar mm to pixels with the same orientation, so a tip moving along +x
drives its base marker (and hence the pixel displacement p) along -x.
The deflection angle is measured between the rod and its neutral axis.

The tip x/y formulas are linear in p while the angle uses arcsin, so
x^2 + y^2 + z^2 does not equal l_u^2 off-axis; the implemented formulas
are kept verbatim and the discrepancy is documented here rather than
"fixed".
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class SaturationError(ValueError):
    """Tracked displacement implies sin(angle) > 1: inconsistent geometry.

    Raised instead of clamping: a silent clamp would corrupt downstream
    classification features.
    """


@dataclass(frozen=True)
class TipPose:
    theta: float   # rad from neutral axis
    x_tip: float   # mm relative to the pivot
    y_tip: float
    z_tip: float


def deflection_angle(p_x: float, p_y: float, k: float, l_l: float) -> float:
    """Deflection angle from marker pixel displacement.

    theta = arcsin(k * sqrt(px^2 + py^2) / l_l).  Raises SaturationError
    when the argument exceeds 1.
    """
    if k <= 0 or l_l <= 0:
        raise ValueError("k and l_l must be positive")
    arg = k * math.hypot(p_x, p_y) / l_l
    if arg > 1.0:
        raise SaturationError(
            f"displacement {arg * l_l / k:.3f} px exceeds l_l/k = {l_l / k:.3f} px"
        )
    return math.asin(arg)


def tip_position(p_x: float, p_y: float, k: float, l_l: float, l_u: float) -> TipPose:
    """Tip pose from marker pixel displacement.

    x = -(l_u/l_l) k p_x, y = -(l_u/l_l) k p_y, z = l_u cos(theta).
    """
    theta = deflection_angle(p_x, p_y, k, l_l)
    scale = l_u / l_l * k
    return TipPose(
        theta=theta,
        x_tip=-scale * p_x,
        y_tip=-scale * p_y,
        z_tip=l_u * math.cos(theta),
    )


def pixel_from_tilt(theta: float, azimuth: float, k: float, l_l: float) -> tuple[float, float]:
    """Exact inverse of deflection_angle for a tilt of ``theta`` toward ``azimuth``.

    ``azimuth`` is the planar direction the tip moves in; the marker (and
    the pixel displacement) moves the opposite way with magnitude
    l_l sin(theta) / k.
    """
    if not 0.0 <= theta < math.pi / 2:
        raise ValueError("theta must lie in [0, pi/2)")
    mag = l_l * math.sin(theta) / k
    return (-mag * math.cos(azimuth), -mag * math.sin(azimuth))
