"""Prompt generation, stochastic augmentation, and prior-context assembly.

The initial prompt pair is the current mask's bounding box plus the prior
annotation. Training-time augmentation jitters the in-plane box faces with
signed deltas, erodes or dilates the mask prompt, then keeps a randomly
selected subset of the prompts (both / box only / mask only / none). At test
time only the box is jittered - a random non-empty subset of the four in-plane
faces - and nothing is ever dropped.

Every operation is a pure function of (inputs, policy, rng state); per-case
streams are derived as mix(global_seed, case_id) so cases can run in parallel
with reproducible results.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingPrior
from .geometry import BBox3, StructuringElement, dilate, erode, expand_bbox, mask_bbox
from .manifest import DatasetManifest
from .volume_io import BinaryMask, Volume

SCENARIOS = ("both", "bbox-only", "mask-only", "none")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent per-case stream: stable hash of the keys folded into the seed."""
    digest = hashlib.sha256("/".join(str(k) for k in keys).encode()).digest()
    entropy = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), entropy]))


@dataclass(frozen=True)
class PromptSet:
    bbox: BBox3 | None
    mask: BinaryMask | None
    dims: tuple
    provenance: str = "initial"  # or "augmented"
    selection: str | None = None  # scenario recorded after selection

    def __post_init__(self):
        if self.bbox is None and self.mask is None and self.selection != "none":
            raise ValueError("prompt set without prompts must record the none scenario")
        if self.bbox is not None and not self.bbox.within(self.dims):
            raise ValueError(f"bbox {self.bbox} outside grid {self.dims}")


@dataclass(frozen=True)
class AugPolicy:
    """Knobs for the stochastic prompt augmenter; JSON-round-trippable."""

    bbox_max_px: int = 5
    bbox_mode: str = "train"  # "train" or "test"
    morph_radius_range: tuple = (0, 2)
    morph_op_prob: float = 0.5  # probability of dilation (vs erosion)
    selection_weights: dict = field(
        default_factory=lambda: {
            "both": 0.4,
            "bbox-only": 0.25,
            "mask-only": 0.25,
            "none": 0.1,
        }
    )
    seed: int = 0

    def __post_init__(self):
        if self.bbox_max_px < 0:
            raise ValueError("bbox_max_px must be >= 0")
        if self.bbox_mode not in ("train", "test"):
            raise ValueError(f"unknown bbox_mode {self.bbox_mode!r}")
        lo, hi = self.morph_radius_range
        if lo < 0 or hi < lo:
            raise ValueError(f"invalid morph_radius_range {self.morph_radius_range}")
        object.__setattr__(self, "morph_radius_range", (int(lo), int(hi)))
        if set(self.selection_weights) != set(SCENARIOS):
            raise ValueError(f"selection_weights must cover {SCENARIOS}")
        w = [float(self.selection_weights[s]) for s in SCENARIOS]
        if any(x < 0 for x in w):
            raise ValueError("selection weights must be nonnegative")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"selection weights sum to {sum(w)}, expected 1")

    def weights_vector(self):
        return np.array([self.selection_weights[s] for s in SCENARIOS], dtype=float)

    def to_json(self) -> str:
        doc = {
            "bbox_max_px": self.bbox_max_px,
            "bbox_mode": self.bbox_mode,
            "morph_radius_range": list(self.morph_radius_range),
            "morph_op_prob": self.morph_op_prob,
            "selection_weights": {s: self.selection_weights[s] for s in SCENARIOS},
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AugPolicy":
        doc = json.loads(text)
        return cls(
            bbox_max_px=int(doc["bbox_max_px"]),
            bbox_mode=doc["bbox_mode"],
            morph_radius_range=tuple(doc["morph_radius_range"]),
            morph_op_prob=float(doc["morph_op_prob"]),
            selection_weights=dict(doc["selection_weights"]),
            seed=int(doc["seed"]),
        )


def generate_prompts(current_mask: BinaryMask, prior_mask: BinaryMask) -> PromptSet:
    """Initial prompt pair: box of the current mask plus the prior annotation."""
    current_mask.require_same_geometry(prior_mask, "current and prior masks")
    box = mask_bbox(current_mask)  # raises EmptyMask
    return PromptSet(bbox=box, mask=prior_mask, dims=current_mask.dims)


def test_time_bbox_jitter(box: BBox3, max_px: int, bounds, rng,
                          sweep_level: int | None = None) -> BBox3:
    """Jitter a box on a random non-empty subset of its four in-plane faces.

    Each selected face moves by a uniform magnitude in [0, max_px] with a
    random sign (expand or contract); z faces are never touched. With
    sweep_level set, all four faces expand by exactly that amount instead
    (the robustness-sweep mode).
    """
    if sweep_level is not None:
        lv = int(sweep_level)
        return expand_bbox(box, (lv, lv, lv, lv, 0, 0), bounds)
    if max_px < 0:
        raise ValueError("max_px must be >= 0")
    subset = int(rng.integers(1, 16))  # uniform over the 15 non-empty subsets
    deltas = [0, 0, 0, 0, 0, 0]
    for face in range(4):
        if subset >> face & 1:
            magnitude = int(rng.integers(0, max_px + 1))
            sign = 1 if int(rng.integers(0, 2)) == 1 else -1
            deltas[face] = sign * magnitude
    return expand_bbox(box, deltas, bounds)


def augment_prompts(p: PromptSet, policy: AugPolicy, rng=None) -> PromptSet:
    """Apply box jitter, mask morphology, and stochastic prompt selection.

    Test mode follows the evaluation protocol: box jitter only, prior mask
    untouched, both prompts always kept.
    """
    if p.provenance != "initial":
        raise ValueError("augment_prompts expects an initial prompt set")
    if rng is None:
        rng = np.random.default_rng(policy.seed)

    if policy.bbox_mode == "test":
        box = p.bbox
        if box is not None:
            box = test_time_bbox_jitter(box, policy.bbox_max_px, p.dims, rng)
        return PromptSet(box, p.mask, p.dims, provenance="augmented", selection="both")

    box = p.bbox
    if box is not None:
        deltas = rng.integers(-policy.bbox_max_px, policy.bbox_max_px + 1, size=4)
        box = expand_bbox(box, (*(int(d) for d in deltas), 0, 0), p.dims)
    mask = p.mask
    if mask is not None:
        lo, hi = policy.morph_radius_range
        radius = int(rng.integers(lo, hi + 1))
        use_dilate = rng.random() < policy.morph_op_prob
        if radius > 0:
            se = StructuringElement("cross4-in-plane", radius)
            mask = dilate(mask, se) if use_dilate else erode(mask, se)
    scenario = SCENARIOS[int(rng.choice(len(SCENARIOS), p=policy.weights_vector()))]
    if scenario in ("mask-only", "none"):
        box = None
    if scenario in ("bbox-only", "none"):
        mask = None
    return PromptSet(box, mask, p.dims, provenance="augmented", selection=scenario)


@dataclass(frozen=True)
class InputStack:
    """Three-channel prior-context input: current image, prior image, prior mask."""

    current: np.ndarray
    prior: np.ndarray
    prior_seg: np.ndarray
    normalization: tuple  # ((lo, hi) per image channel)

    @property
    def channels(self):
        return self.current, self.prior, self.prior_seg


def _normalize_channel(data: np.ndarray):
    """Percentile-clipped min-max to [0, 1]; constant input maps to zeros."""
    lo, hi = np.percentile(data, (0.5, 99.5))
    if hi <= lo:
        return np.zeros_like(data, dtype=np.float32), (float(lo), float(hi))
    clipped = np.clip(data, lo, hi)
    return ((clipped - lo) / (hi - lo)).astype(np.float32), (float(lo), float(hi))


def assemble_input(curMR: Volume, priMR: Volume, priSeg: BinaryMask) -> InputStack:
    """Build the normalized three-channel stack for prior-guided segmentation."""
    curMR.require_same_geometry(priMR, "current and prior images")
    curMR.require_same_geometry(priSeg, "current image and prior mask")
    cur, rec_cur = _normalize_channel(curMR.data)
    pri, rec_pri = _normalize_channel(priMR.data)
    return InputStack(cur, pri, priSeg.data.copy(), (rec_cur, rec_pri))


def select_prior(manifest: DatasetManifest, patient_id: str, fraction_index: int):
    """Resolve the prior image/annotation: fraction n-1, or the simulation for n=1."""
    entries = manifest.by_patient().get(patient_id)
    if not entries:
        raise MissingPrior(f"unknown patient {patient_id!r}")
    if fraction_index < 1:
        raise MissingPrior(
            f"fraction {fraction_index} of {patient_id} has no prior fraction"
        )
    wanted = fraction_index - 1
    for entry in entries:
        if entry.fraction_index == wanted:
            return entry
    raise MissingPrior(
        f"{patient_id}: no entry for fraction {wanted} "
        + ("(simulation scan missing)" if wanted == 0 else "")
    )
