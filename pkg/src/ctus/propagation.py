"""Depth-marched acoustic propagation over the fan grid.

Fields are (radial sample, scanline) arrays. Intensity starts at 1 on the
probe face row and is marched row by row: at each pixel the impedance step
to the next radial sample defines a Fresnel interface, the reflected part
(weighted by Lambert irradiance) feeds the echo map, and the transmitted
part is attenuated by the Lambert-Beer law and distributed to the three
forward neighbors with cosine obstacle weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acoustics import AcousticSlice
from .errors import NonPositiveImpedance, ShapeMismatch

#: cosine-of-connection-angle threshold below which a forward contribution
#: also counts as scattering enhancement
SCATTER_COS_THRESHOLD = 0.8

# forward 3-neighbor obstacle weights: connection directions (1, -1), (1, 0),
# (1, 1) against the straight-down propagation direction (1, 0)
_COS_DIAG = 1.0 / np.sqrt(2.0)
_NEIGHBOR_COS = np.array([_COS_DIAG, 1.0, _COS_DIAG])


@dataclass(frozen=True)
class FanGeometry:
    num_scanlines: int
    samples_per_line: int
    radial_step_mm: float
    fov_angle_deg: float
    probe_radius_mm: float
    frequency_mhz: float = 5.0

    def __post_init__(self):
        if min(self.num_scanlines, self.samples_per_line) < 1:
            raise ValueError("grid dimensions must be positive")
        if not (0.0 < self.fov_angle_deg < 180.0):
            raise ValueError("fov_angle_deg must be in (0, 180)")
        if min(self.radial_step_mm, self.probe_radius_mm, self.frequency_mhz) <= 0:
            raise ValueError("physical parameters must be positive")

    @property
    def shape(self):
        return (self.samples_per_line, self.num_scanlines)

    @property
    def scanline_angles_rad(self) -> np.ndarray:
        half = np.deg2rad(self.fov_angle_deg) / 2.0
        return np.linspace(-half, half, self.num_scanlines)

    @property
    def radii_mm(self) -> np.ndarray:
        return self.probe_radius_mm + np.arange(self.samples_per_line) * self.radial_step_mm

    @property
    def depth_mm(self) -> float:
        return self.samples_per_line * self.radial_step_mm


@dataclass(frozen=True)
class PhysicsParams:
    frequency_mhz: float = 5.0
    beer_alpha: float = 1.0
    scatter_gain: float = 0.1
    squeeze_relief: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.squeeze_relief <= 1.0):
            raise ValueError("squeeze_relief must be in (0, 1]")
        if self.scatter_gain < 0 or self.beer_alpha < 0:
            raise ValueError("gains must be nonnegative")


@dataclass
class PropagationResult:
    transmission: np.ndarray  # [0, 1]
    echo: np.ndarray  # >= 0
    absorption: np.ndarray  # per-pixel single-step absorption factor in [0, 1]


def fresnel_reflection(z1, z2, theta_i=0.0):
    """Fresnel power reflection and refraction angle at an impedance step.

    Returns (R, theta_t); theta_t is NaN on total internal reflection
    (where R is forced to 1). Accepts scalars or broadcastable arrays.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if np.any(z1 <= 0) or np.any(z2 <= 0):
        raise NonPositiveImpedance("impedances must be positive")
    theta_i = np.asarray(theta_i, dtype=float)
    sin_t = np.sin(theta_i) * z1 / z2  # Snell: sin(t1)/sin(t2) = Z2/Z1
    tir = np.abs(sin_t) > 1.0
    sin_t_safe = np.where(tir, 0.0, sin_t)
    cos_t = np.sqrt(1.0 - sin_t_safe**2)
    cos_i = np.cos(theta_i)
    r_perp = ((z1 * cos_i - z2 * cos_t) / (z1 * cos_i + z2 * cos_t)) ** 2
    r_par = ((z2 * cos_i - z1 * cos_t) / (z2 * cos_i + z1 * cos_t)) ** 2
    R = 0.5 * (r_perp + r_par)
    R = np.where(tir, 1.0, np.clip(R, 0.0, 1.0))
    theta_t = np.where(tir, np.nan, np.arcsin(sin_t_safe))
    if R.ndim == 0:
        return float(R), float(theta_t)
    return R, theta_t


def beer_absorption(i0, a, d_cm, f_mhz, alpha=1.0):
    """Lambert-Beer intensity after traversing d_cm of tissue."""
    return np.asarray(i0, dtype=float) * 10.0 ** (
        -alpha * np.asarray(a, dtype=float) * d_cm * f_mhz / 10.0
    )


def lambert_factor(propagation_dir, interface_normal):
    """|cos| between propagation direction and interface normal (2D unit vectors)."""
    d = np.asarray(propagation_dir, dtype=float)
    n = np.asarray(interface_normal, dtype=float)
    return float(abs(d @ n))


def _interface_normals(impedance: np.ndarray):
    """Per-pixel unit normal of the impedance gradient (central differences).

    Returns (n_r, n_s, grad_mag); zero-gradient pixels get the straight-down
    normal (1, 0) and grad_mag 0.
    """
    g_r, g_s = np.gradient(impedance)
    mag = np.hypot(g_r, g_s)
    safe = np.where(mag > 0, mag, 1.0)
    n_r = np.where(mag > 0, g_r / safe, 1.0)
    n_s = np.where(mag > 0, g_s / safe, 0.0)
    return n_r, n_s, mag


def propagate(slc: AcousticSlice, geom: FanGeometry, params: PhysicsParams = PhysicsParams()) -> PropagationResult:
    """Depth-ordered march; see module docstring for the per-row steps."""
    Z = np.asarray(slc.impedance, dtype=float)
    if Z.shape != geom.shape:
        raise ShapeMismatch(f"slice shape {Z.shape} != fan grid {geom.shape}")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(slc.attenuation))):
        raise ValueError("slice fields must be finite")
    R_rows, S = geom.shape
    atten = np.asarray(slc.attenuation, dtype=float)
    atten = np.where(slc.squeeze_mask, atten * params.squeeze_relief, atten)
    d_cm = geom.radial_step_mm / 10.0
    step_absorption = 10.0 ** (-params.beer_alpha * atten * d_cm * params.frequency_mhz / 10.0)

    n_r, n_s, grad_mag = _interface_normals(Z)
    # incidence angle of the straight-down ray against the local normal
    cos_i = np.abs(n_r)
    theta_i = np.arccos(np.clip(cos_i, 0.0, 1.0))

    # forward neighbor weights; edge columns renormalized over in-grid neighbors
    w = _NEIGHBOR_COS / _NEIGHBOR_COS.sum()
    w_left, w_center, w_right = w

    intensity = np.zeros((R_rows, S))
    echo = np.zeros((R_rows, S))
    intensity[0] = 1.0

    for r in range(R_rows - 1):
        I = intensity[r]
        z1 = Z[r]
        z2 = Z[r + 1]
        refl, _ = fresnel_reflection(z1, z2, theta_i[r])
        refl = np.asarray(refl)
        # no interface without an impedance gradient
        refl = np.where(grad_mag[r] > 0, refl, 0.0)
        lam = cos_i[r]
        echo[r] += I * refl * lam
        transmitted = I * (1.0 - refl) * step_absorption[r]
        # distribute to (r+1, s-1), (r+1, s), (r+1, s+1)
        nxt = intensity[r + 1]
        nxt += w_center * transmitted
        nxt[:-1] += w_left * transmitted[1:]
        nxt[1:] += w_right * transmitted[:-1]
        # edge columns lose a diagonal neighbor: renormalize to conserve energy
        nxt[0] += w_left * transmitted[0]
        nxt[-1] += w_right * transmitted[-1]
        # diagonal connections fall below the cosine threshold: scattering
        if params.scatter_gain > 0:
            scat = params.scatter_gain * refl * transmitted
            echo[r + 1, :-1] += w_left * scat[1:]
            echo[r + 1, 1:] += w_right * scat[:-1]
            echo[r + 1, 0] += w_left * scat[0]
            echo[r + 1, -1] += w_right * scat[-1]

    return PropagationResult(
        transmission=np.clip(intensity, 0.0, 1.0),
        echo=echo,
        absorption=step_absorption,
    )
