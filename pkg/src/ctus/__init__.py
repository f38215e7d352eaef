"""CT-derived B-mode ultrasound simulation and CT-US registration toolkit."""

from .acoustics import AcousticLut, AcousticSlice, build_acoustic_slice, hu_to_attenuation, hu_to_impedance
from .kinematics import ProbePose, SurfaceState, move_free, move_on_curve, pose_to_slice_geometry, slice_curves
from .mesh import SurfaceMesh, clip_region, load_obj, save_obj, skin_mesh_from_volume
from .metrics import chamfer, dice, evaluate_pair, report
from .press import ProbeContact, apply_press, squeeze_band_mask, warp_displacement
from .propagation import FanGeometry, PhysicsParams, PropagationResult, beer_absorption, fresnel_reflection, lambert_factor, propagate
from .registration import (
    IcpResult,
    PointCloud,
    ScrewPlan,
    coarse_align,
    ct_surface_cloud,
    frames_to_pointcloud,
    mask_to_contour,
    screw_error,
    trimmed_icp,
)
from .rigid import RigidTransform
from .synthesis import UsFrame, blend, elevational_enhancement, make_label, radial_noise, scan_convert
from .volume import CtVolume, SliceGeometry, hu_at, load_volume, sample_slice, save_volume

__version__ = "0.1.0"
