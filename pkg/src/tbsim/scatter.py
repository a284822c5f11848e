"""Rotating scattering surface.

The surface redirects the converter output toward the analyzer.  A
rotation by ``phi`` steers the specular lobe away from the fixed
collection optics while the diffuse floor falls off smoothly; only the
*amount* of collected light changes - the time-bin phase is untouched,
which is what makes the interference visibility angle-flat.

The model is a Gaussian specular lobe on top of a bidirectional
Lambertian floor (cosine of the illumination angle times cosine of the
observation angle).  All parameters are exposed; the defaults are
calibrated so that a full angle scan varies in intensity by well over
10x between phi = 0 and |phi| = 45 deg while staying measurable, and
collapses below a practical floor by |phi| = 60 deg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SurfaceConfig:
    """Geometry and reflectance of the scattering surface.

    ``base_incidence_deg`` is the incidence angle at zero rotation
    (specular alignment).  Positive ``rotation_phi_deg`` increases the
    incidence angle.
    """

    base_incidence_deg: float = 25.0
    rotation_phi_deg: float = 0.0
    specular_strength: float = 0.54
    specular_width_deg: float = 8.0
    diffuse_albedo: float = 0.18
    aperture_factor: float = 1.0

    def __post_init__(self):
        if not -90.0 <= self.rotation_phi_deg <= 90.0:
            raise ValueError(f"rotation_phi_deg must be in [-90, 90], got {self.rotation_phi_deg}")
        if not 0.0 <= self.diffuse_albedo <= 1.0:
            raise ValueError(f"diffuse_albedo must be in [0, 1], got {self.diffuse_albedo}")
        if self.specular_strength < 0.0:
            raise ValueError("specular_strength must be >= 0")
        if self.specular_width_deg <= 0.0:
            raise ValueError("specular_width_deg must be > 0")
        if self.aperture_factor < 0.0:
            raise ValueError("aperture_factor must be >= 0")


def incidence_angle_deg(cfg: SurfaceConfig) -> float:
    """Incidence angle in degrees: base angle plus rotation (sign adds)."""
    return cfg.base_incidence_deg + cfg.rotation_phi_deg


def collection_efficiency(cfg: SurfaceConfig) -> float:
    """Fraction of scattered photons gathered by the analyzer aperture.

    specular_strength * exp(-phi^2 / (2 w^2))
      + diffuse_albedo * cos(theta_in) * cos(theta_out) * aperture_factor,
    clamped to [0, 1].  theta_in is the incidence angle, theta_out the
    fixed camera direction measured from the rotated surface normal;
    grazing or back-facing geometry contributes nothing.  The result is
    independent of any interferometer phase.
    """
    phi = cfg.rotation_phi_deg
    theta_in = math.radians(cfg.base_incidence_deg + phi)
    theta_out = math.radians(cfg.base_incidence_deg - phi)
    specular = cfg.specular_strength * math.exp(-(phi * phi) / (2.0 * cfg.specular_width_deg**2))
    diffuse = (
        cfg.diffuse_albedo
        * max(math.cos(theta_in), 0.0)
        * max(math.cos(theta_out), 0.0)
        * cfg.aperture_factor
    )
    return min(max(specular + diffuse, 0.0), 1.0)
