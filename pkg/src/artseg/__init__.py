"""Prior-knowledge segmentation toolkit for adaptive radiotherapy workflows.

Provides prompt generation/augmentation for promptable segmenters, prior-scan
context assembly, a rigid-registration mask-propagation baseline, surface and
overlap metrics with an exact distance transform, synthetic phantom data, and
a CLI harness that drives pluggable segmentation backends.
"""

from .errors import ArtsegError
from .geometry import BBox3, StructuringElement, dilate, erode, expand_bbox, mask_bbox
from .manifest import CaseEntry, DatasetManifest
from .metrics import MetricReport, asd, dice, evaluate_case, hd95, nsd, surface_voxels
from .phantom import PhantomSpec, SuiteSpec, generate_case, generate_manifest
from .prompts import (
    AugPolicy,
    InputStack,
    PromptSet,
    assemble_input,
    augment_prompts,
    generate_prompts,
    select_prior,
    test_time_bbox_jitter,
)
from .registration import (
    RegConfig,
    RigidTransform,
    propagate_mask,
    register_rigid,
    resample,
    similarity,
)
from .volume_io import BinaryMask, Volume, read_mask, read_nifti, write_nifti

__version__ = "0.1.0"

__all__ = [
    "ArtsegError",
    "AugPolicy",
    "BBox3",
    "BinaryMask",
    "CaseEntry",
    "DatasetManifest",
    "InputStack",
    "MetricReport",
    "PhantomSpec",
    "PromptSet",
    "RegConfig",
    "RigidTransform",
    "StructuringElement",
    "SuiteSpec",
    "Volume",
    "asd",
    "assemble_input",
    "augment_prompts",
    "dice",
    "dilate",
    "erode",
    "evaluate_case",
    "expand_bbox",
    "generate_case",
    "generate_manifest",
    "generate_prompts",
    "hd95",
    "mask_bbox",
    "nsd",
    "propagate_mask",
    "read_mask",
    "read_nifti",
    "register_rigid",
    "resample",
    "select_prior",
    "similarity",
    "surface_voxels",
    "test_time_bbox_jitter",
    "write_nifti",
]
