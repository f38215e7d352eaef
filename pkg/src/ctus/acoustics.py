"""HU -> acoustic property mapping via piecewise-linear lookup tables.

Default anchors combine published tissue rows (skin, fat, muscle) with
implementation defaults for air, water, and cortical bone; both tables are
overridable from the simulation config.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# (hu, impedance 1e6 kg m^-2 s^-1)
DEFAULT_IMPEDANCE_ANCHORS = [
    (-1000.0, 0.0004),  # air
    (-100.0, 1.352),    # fat
    (0.0, 1.48),        # water
    (40.0, 1.794),      # skin / soft tissue
    (60.0, 1.647),      # muscle
    (700.0, 7.8),       # cortical bone
]

# (hu, attenuation dB cm^-1 MHz^-1)
DEFAULT_ATTENUATION_ANCHORS = [
    (-1000.0, 40.0),
    (-100.0, 0.975),
    (0.0, 0.002),
    (40.0, 0.22),
    (60.0, 1.47),
    (700.0, 6.9),
]


@dataclass(frozen=True)
class AcousticLut:
    impedance_anchors: tuple = tuple(DEFAULT_IMPEDANCE_ANCHORS)
    attenuation_anchors: tuple = tuple(DEFAULT_ATTENUATION_ANCHORS)

    def __post_init__(self):
        for name, anchors in (
            ("impedance", self.impedance_anchors),
            ("attenuation", self.attenuation_anchors),
        ):
            hu = np.array([a[0] for a in anchors], dtype=float)
            val = np.array([a[1] for a in anchors], dtype=float)
            if len(hu) < 1:
                raise ValueError(f"{name} anchors empty")
            if np.any(np.diff(hu) <= 0):
                raise ValueError(f"{name} anchor HU values must be strictly increasing")
            if name == "impedance" and np.any(val <= 0):
                raise ValueError("impedance values must be positive")
            if name == "attenuation" and np.any(val < 0):
                raise ValueError("attenuation values must be nonnegative")
        object.__setattr__(
            self, "impedance_anchors", tuple(tuple(a) for a in self.impedance_anchors)
        )
        object.__setattr__(
            self, "attenuation_anchors", tuple(tuple(a) for a in self.attenuation_anchors)
        )

    @staticmethod
    def from_config(section: dict) -> "AcousticLut":
        """Build from `{"impedance": [[hu, Z], ...], "attenuation": [[hu, a], ...]}`."""
        kwargs = {}
        if "impedance" in section:
            kwargs["impedance_anchors"] = tuple(tuple(p) for p in section["impedance"])
        if "attenuation" in section:
            kwargs["attenuation_anchors"] = tuple(tuple(p) for p in section["attenuation"])
        return AcousticLut(**kwargs)


def _interp(anchors, hu):
    xs = np.array([a[0] for a in anchors], dtype=float)
    ys = np.array([a[1] for a in anchors], dtype=float)
    return np.interp(hu, xs, ys)  # np.interp clamps at the end anchors


def hu_to_impedance(lut: AcousticLut, hu):
    """Piecewise-linear impedance lookup, clamped outside the anchor range."""
    return _interp(lut.impedance_anchors, hu)


def hu_to_attenuation(lut: AcousticLut, hu):
    """Piecewise-linear attenuation lookup, clamped outside the anchor range."""
    return _interp(lut.attenuation_anchors, hu)


@dataclass
class AcousticSlice:
    """Co-registered 2D fields on the fan grid."""

    hu: np.ndarray
    impedance: np.ndarray
    attenuation: np.ndarray
    squeeze_mask: np.ndarray
    geometry: object = None  # FanGeometry, attached by the pipeline

    def __post_init__(self):
        shapes = {self.hu.shape, self.impedance.shape, self.attenuation.shape, self.squeeze_mask.shape}
        if len(shapes) != 1:
            raise ValueError(f"field shapes differ: {shapes}")


def build_acoustic_slice(hu_field, lut: AcousticLut, squeeze_mask=None, geometry=None) -> AcousticSlice:
    hu = np.asarray(hu_field, dtype=float)
    if not np.all(np.isfinite(hu)):
        raise ValueError("hu field contains non-finite values")
    if squeeze_mask is None:
        squeeze_mask = np.zeros(hu.shape, dtype=bool)
    return AcousticSlice(
        hu=hu,
        impedance=np.asarray(hu_to_impedance(lut, hu), dtype=float),
        attenuation=np.asarray(hu_to_attenuation(lut, hu), dtype=float),
        squeeze_mask=np.asarray(squeeze_mask, dtype=bool),
        geometry=geometry,
    )
