"""Depth-pinned 6D pose and focal-length refinement by render-and-compare."""

from .alignment import (
    AlignmentProvider,
    Correspondence,
    GaussNewtonProvider,
    SilhouetteFDProvider,
    observability,
)
from .errors import FocalSplitError
from .experiments import (
    AmbiguityCurve,
    EvalRecord,
    SceneSamplerConfig,
    ambiguity_sweep,
    evaluate,
    generate_scene,
    run_benchmark,
)
from .geometry import (
    CameraIntrinsics,
    PixelPoint,
    Pose,
    Rotation,
    Vec3,
    geodesic_distance,
    project_point,
    rotation_from_axis_angle,
    transform_point,
)
from .meshes import Mesh, builtin_mesh
from .refiner import (
    RefinementConfig,
    RefinementState,
    RefinementTrajectory,
    UpdateVector,
    apply_update,
    init_state,
    refine,
)
from .renderer import BBox2D, SilhouetteImage, projected_bbox, render_silhouette, silhouette_iou
from .reparam import AnnotatedScene, ReannotationReport, reannotate, reannotation_residual, restore_metric

__version__ = "0.1.0"
