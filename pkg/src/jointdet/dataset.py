"""Synthetic scenes for two overlapping sources with missing labels.

Every generated frame contains both lights and signs in its oracle ground
truth, but only the source dataset's own class is visible (labeled); the
other class is hidden. Hidden objects are kept at least a separation margin
away from visible ones except in deliberately sampled "violation" frames,
which mirrors the physical-separation prior the background threshold relies
on. A feature oracle stands in for CNN crop features.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .geometry import Box, boxes_to_array, encode_offsets
from .seeding import substream
from .taxonomy import GlobalClass, Taxonomy, taxonomy_from_spec

FORMAT_NAME = "jointdet-dataset"
FORMAT_VERSION = 1

# Weights mixing the shared family direction with the subclass-specific
# direction when building class prototypes. Same-family prototypes end up
# correlated, which is what makes the coarse category easy to learn.
FAMILY_WEIGHT = 1.0
SUBCLASS_WEIGHT = 1.0

_MAX_FRAME_ATTEMPTS = 80
_MAX_PLACE_TRIES = 250
# Generation-time slack so 6-decimal coordinate quantization can never flip
# a non-violating frame into a violating one.
_MARGIN_SAFETY = 0.5


class GenerationError(RuntimeError):
    """Scene generation failed; the generator config is likely infeasible."""


class DatasetFormatError(ValueError):
    """A dataset file line could not be parsed."""


class DatasetSchemaError(ValueError):
    """A dataset file parsed but is inconsistent with its own header."""


class SourceTag(Enum):
    LIGHTS_SET = "lights"
    SIGNS_SET = "signs"

    @property
    def labeled_class(self) -> GlobalClass:
        return GlobalClass.LIGHT if self is SourceTag.LIGHTS_SET else GlobalClass.SIGN

    @property
    def hidden_class(self) -> GlobalClass:
        return GlobalClass.SIGN if self is SourceTag.LIGHTS_SET else GlobalClass.LIGHT


@dataclass(frozen=True)
class Annotation:
    """One object: its tightest box, subclass, and label visibility."""

    box: Box
    subclass: int
    visible: bool


@dataclass(frozen=True)
class Frame:
    """One scene with its full oracle ground truth."""

    frame_id: str
    width: float
    height: float
    source: SourceTag
    annotations: tuple[Annotation, ...]
    seed: int

    def __post_init__(self) -> None:
        for ann in self.annotations:
            b = ann.box
            if not (0.0 <= b.x1 and b.x2 <= self.width and 0.0 <= b.y1 and b.y2 <= self.height):
                raise DatasetSchemaError(
                    f"frame {self.frame_id}: box {b} outside [0, {self.width}] x [0, {self.height}]"
                )

    @property
    def visible_annotations(self) -> tuple[Annotation, ...]:
        return tuple(a for a in self.annotations if a.visible)

    @property
    def hidden_annotations(self) -> tuple[Annotation, ...]:
        return tuple(a for a in self.annotations if not a.visible)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic scene generator and its feature oracle."""

    frame_width: float = 960.0
    frame_height: float = 720.0
    lights_per_frame: tuple[int, int] = (1, 3)
    signs_per_frame: tuple[int, int] = (1, 3)
    light_width: tuple[float, float] = (10.0, 36.0)
    light_aspect: tuple[float, float] = (1.8, 2.6)
    sign_width: tuple[float, float] = (16.0, 104.0)
    sign_aspect: tuple[float, float] = (0.8, 1.25)
    separation_factor: float = 1.0
    base_gap: float = 4.0
    violation_prob: float = 0.07
    feature_dim: int = 64
    feature_noise: float = 0.05
    prototype_seed: int = 1234

    def __post_init__(self) -> None:
        if not 0.0 <= self.violation_prob <= 1.0:
            raise ValueError(f"violation_prob must be in [0, 1], got {self.violation_prob}")
        if self.feature_dim < 8:
            raise ValueError(f"feature_dim must be >= 8, got {self.feature_dim}")
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise ValueError("frame dimensions must be positive")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @staticmethod
    def from_dict(data: dict) -> "GeneratorConfig":
        kwargs = {}
        for f in fields(GeneratorConfig):
            if f.name not in data:
                continue
            value = data[f.name]
            kwargs[f.name] = tuple(value) if isinstance(value, list) else value
        return GeneratorConfig(**kwargs)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of frames plus the config that produced them."""

    taxonomy: Taxonomy
    config: GeneratorConfig
    seed: int
    frames: tuple[Frame, ...]

    def __post_init__(self) -> None:
        k = self.taxonomy.num_subclasses
        for frame in self.frames:
            if frame.width != self.config.frame_width or frame.height != self.config.frame_height:
                raise DatasetSchemaError(
                    f"frame {frame.frame_id}: dimensions differ from the dataset config"
                )
            for ann in frame.annotations:
                if not 0 <= ann.subclass < k:
                    raise DatasetSchemaError(
                        f"frame {frame.frame_id}: subclass {ann.subclass} outside [0, {k})"
                    )
                if ann.visible and self.taxonomy.global_of(ann.subclass) is not frame.source.labeled_class:
                    raise DatasetSchemaError(
                        f"frame {frame.frame_id}: visible {self.taxonomy.global_of(ann.subclass).value}"
                        f" annotation in a {frame.source.value} frame"
                    )


def box_gap(a: Box, b: Box) -> float:
    """Chebyshev gap between two boxes; <= 0 when they touch or overlap."""
    dx = max(b.x1 - a.x2, a.x1 - b.x2)
    dy = max(b.y1 - a.y2, a.y1 - b.y2)
    return max(dx, dy)


def separation_margin(a: Box, b: Box, factor: float) -> float:
    """Required clearance between a hidden and a visible object."""
    return factor * max(a.width, a.height, b.width, b.height)


def frame_violation_pairs(frame: Frame, factor: float) -> list[tuple[int, int]]:
    """(hidden index, visible index) pairs closer than the separation margin."""
    pairs = []
    for i, hidden in enumerate(frame.annotations):
        if hidden.visible:
            continue
        for j, vis in enumerate(frame.annotations):
            if not vis.visible:
                continue
            if box_gap(hidden.box, vis.box) < separation_margin(hidden.box, vis.box, factor):
                pairs.append((i, j))
    return pairs


def frame_violates(frame: Frame, factor: float) -> bool:
    return bool(frame_violation_pairs(frame, factor))


def violating_fraction(dataset: Dataset) -> float:
    """Fraction of frames with a hidden object inside a visible one's margin."""
    if not dataset.frames:
        return 0.0
    factor = dataset.config.separation_factor
    hits = sum(1 for frame in dataset.frames if frame_violates(frame, factor))
    return hits / len(dataset.frames)


def _q6(x: float) -> float:
    return round(float(x), 6)


def _rect_gap(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    dx = max(b[0] - a[2], a[0] - b[2])
    dy = max(b[1] - a[3], a[1] - b[3])
    return max(dx, dy)


def _rect_margin(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float], factor: float
) -> float:
    return factor * max(a[2] - a[0], a[3] - a[1], b[2] - b[0], b[3] - b[1])


class _Placer:
    """Rejection-sampling placement of non-overlapping rectangles."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.rects: list[tuple[float, float, float, float]] = []
        self.classes: list[GlobalClass] = []

    def _dims(self, global_class: GlobalClass) -> tuple[float, float]:
        cfg = self.cfg
        if global_class is GlobalClass.LIGHT:
            w_range, a_range = cfg.light_width, cfg.light_aspect
        else:
            w_range, a_range = cfg.sign_width, cfg.sign_aspect
        w = self.rng.uniform(*w_range)
        h = w * self.rng.uniform(*a_range)
        return w, h

    def _fits(self, rect: tuple[float, float, float, float], global_class: GlobalClass) -> bool:
        cfg = self.cfg
        for other, other_class in zip(self.rects, self.classes):
            gap = _rect_gap(rect, other)
            if other_class is global_class:
                if gap < cfg.base_gap:
                    return False
            elif gap < _rect_margin(rect, other, cfg.separation_factor) + _MARGIN_SAFETY:
                return False
        return True

    def place(self, global_class: GlobalClass) -> bool:
        cfg = self.cfg
        for _ in range(_MAX_PLACE_TRIES):
            w, h = self._dims(global_class)
            if w >= cfg.frame_width or h >= cfg.frame_height:
                continue
            x1 = self.rng.uniform(0.0, cfg.frame_width - w)
            y1 = self.rng.uniform(0.0, cfg.frame_height - h)
            rect = (_q6(x1), _q6(y1), _q6(x1 + w), _q6(y1 + h))
            if self._fits(rect, global_class):
                self.rects.append(rect)
                self.classes.append(global_class)
                return True
        return False

    def place_violation(self, foreign_class: GlobalClass, host_class: GlobalClass) -> bool:
        """Put one foreign object inside a host object's separation margin."""
        cfg = self.cfg
        hosts = [i for i, c in enumerate(self.classes) if c is host_class]
        if not hosts:
            return False
        for _ in range(_MAX_PLACE_TRIES):
            host = self.rects[int(self.rng.integers(len(hosts)))] if len(hosts) == 1 else None
            host = self.rects[hosts[int(self.rng.integers(len(hosts)))]]
            w, h = self._dims(foreign_class)
            margin = factor_margin = _rect_margin((0.0, 0.0, w, h), host, cfg.separation_factor)
            gap = margin * self.rng.uniform(0.05, 0.85)
            side = int(self.rng.integers(4))
            host_w = host[2] - host[0]
            host_h = host[3] - host[1]
            if side in (0, 1):
                x1 = host[2] + gap if side == 0 else host[0] - gap - w
                shift = self.rng.uniform(-0.4, 0.4) * (host_h + h) / 2.0
                y1 = (host[1] + host[3]) / 2.0 + shift - h / 2.0
            else:
                y1 = host[3] + gap if side == 2 else host[1] - gap - h
                shift = self.rng.uniform(-0.4, 0.4) * (host_w + w) / 2.0
                x1 = (host[0] + host[2]) / 2.0 + shift - w / 2.0
            if x1 < 0.0 or y1 < 0.0 or x1 + w > cfg.frame_width or y1 + h > cfg.frame_height:
                continue
            rect = (_q6(x1), _q6(y1), _q6(x1 + w), _q6(y1 + h))
            ok = True
            for other, other_class in zip(self.rects, self.classes):
                if other is host:
                    continue
                g = _rect_gap(rect, other)
                if other_class is foreign_class:
                    if g < cfg.base_gap:
                        ok = False
                        break
                elif g < _rect_margin(rect, other, cfg.separation_factor) + _MARGIN_SAFETY:
                    ok = False
                    break
            if not ok:
                continue
            actual_gap = _rect_gap(rect, host)
            actual_margin = _rect_margin(rect, host, cfg.separation_factor)
            if not 0.0 < actual_gap < actual_margin:
                continue
            self.rects.append(rect)
            self.classes.append(foreign_class)
            return True
        return False


def _generate_frame(
    cfg: GeneratorConfig, taxonomy: Taxonomy, frame_id: str, source: SourceTag, frame_seed: int
) -> Frame:
    rng = np.random.default_rng(frame_seed)
    light_subs = taxonomy.subclasses_of(GlobalClass.LIGHT)
    sign_subs = taxonomy.subclasses_of(GlobalClass.SIGN)
    for _ in range(_MAX_FRAME_ATTEMPTS):
        n_lights = int(rng.integers(cfg.lights_per_frame[0], cfg.lights_per_frame[1] + 1))
        n_signs = int(rng.integers(cfg.signs_per_frame[0], cfg.signs_per_frame[1] + 1))
        violate = bool(rng.random() < cfg.violation_prob)
        placer = _Placer(cfg, rng)
        ok = all(placer.place(GlobalClass.LIGHT) for _ in range(n_lights))
        ok = ok and all(placer.place(GlobalClass.SIGN) for _ in range(n_signs))
        if ok and violate:
            ok = placer.place_violation(source.hidden_class, source.labeled_class)
        if not ok:
            continue
        annotations = []
        for rect, global_class in zip(placer.rects, placer.classes):
            subs = light_subs if global_class is GlobalClass.LIGHT else sign_subs
            subclass = int(subs[int(rng.integers(len(subs)))])
            visible = global_class is source.labeled_class
            annotations.append(Annotation(Box(*rect), subclass, visible))
        return Frame(
            frame_id=frame_id,
            width=cfg.frame_width,
            height=cfg.frame_height,
            source=source,
            annotations=tuple(annotations),
            seed=frame_seed,
        )
    raise GenerationError(
        f"frame {frame_id}: could not place {n_lights} lights and {n_signs} signs with the "
        f"required separation; the generator config looks infeasible"
    )


def generate_synthetic(
    config: GeneratorConfig, n_frames: int, seed: int, taxonomy: Taxonomy | None = None
) -> Dataset:
    """Generate a deterministic synthetic dataset.

    Frames alternate between the two source tags; each frame's RNG is seeded
    from (seed, frame index) only, so regeneration is reproducible and
    frames could be generated in parallel.
    """
    from .taxonomy import default_taxonomy

    taxonomy = taxonomy or default_taxonomy()
    frames = []
    for i in range(n_frames):
        source = SourceTag.LIGHTS_SET if i % 2 == 0 else SourceTag.SIGNS_SET
        frame_seed = int(substream(seed, "frame-seed", i).integers(0, 2**63))
        frames.append(_generate_frame(config, taxonomy, f"frame-{i:06d}", source, frame_seed))
    return Dataset(taxonomy=taxonomy, config=config, seed=seed, frames=tuple(frames))


class FeatureOracle:
    """Synthetic stand-in for crop-and-resize CNN features.

    A proposal's feature vector mixes per-subclass prototypes weighted by
    IoU against every oracle object (visible or hidden: image content does
    not know about labels), blends in a background prototype with weight
    1 - max IoU, and writes the regression offsets toward the highest-IoU
    object into the last four dimensions. Optional Gaussian noise on top.
    """

    def __init__(self, config: GeneratorConfig, taxonomy: Taxonomy):
        self.config = config
        self.dim = config.feature_dim
        self.noise = config.feature_noise
        proto_dim = self.dim - 4
        rng = substream(config.prototype_seed, "prototypes")
        family = {}
        for global_class in (GlobalClass.LIGHT, GlobalClass.SIGN, GlobalClass.BACKGROUND):
            v = rng.standard_normal(proto_dim)
            family[global_class] = v / np.linalg.norm(v)
        protos = np.zeros((taxonomy.num_subclasses, proto_dim))
        for c in range(taxonomy.num_subclasses):
            v = rng.standard_normal(proto_dim)
            v = v / np.linalg.norm(v)
            mixed = FAMILY_WEIGHT * family[taxonomy.global_of(c)] + SUBCLASS_WEIGHT * v
            protos[c] = mixed / np.linalg.norm(mixed)
        self.prototypes = protos
        self.background = family[GlobalClass.BACKGROUND]

    def features_batch(
        self, frame: Frame, boxes: Sequence[Box], rng: np.random.Generator | None = None
    ) -> np.ndarray:
        """Feature matrix (len(boxes), d) for proposals inside the frame."""
        for b in boxes:
            if not (0.0 <= b.x1 and b.x2 <= frame.width and 0.0 <= b.y1 and b.y2 <= frame.height):
                raise ValueError(f"proposal {b} outside frame {frame.frame_id}")
        n = len(boxes)
        proto_dim = self.dim - 4
        out = np.zeros((n, self.dim))
        if n == 0:
            return out
        anns = frame.annotations
        if anns:
            prop_arr = boxes_to_array(boxes)
            ann_arr = boxes_to_array([a.box for a in anns])
            ious = kernels.pairwise_iou(prop_arr, ann_arr)
            subclasses = np.array([a.subclass for a in anns], dtype=np.int64)
            out[:, :proto_dim] = ious @ self.prototypes[subclasses]
            max_iou = ious.max(axis=1)
            out[:, :proto_dim] += np.outer(1.0 - max_iou, self.background)
            nearest = ious.argmax(axis=1)
            for i in range(n):
                if max_iou[i] > 0.0:
                    delta = encode_offsets(boxes[i], anns[nearest[i]].box)
                    out[i, proto_dim:] = delta.as_array()
        else:
            out[:, :proto_dim] = self.background
        if self.noise > 0.0 and rng is not None:
            out = out + self.noise * rng.standard_normal(out.shape)
        return out

    def features(
        self, frame: Frame, proposal: Box, rng: np.random.Generator | None = None
    ) -> np.ndarray:
        """Feature vector for one proposal."""
        return self.features_batch(frame, [proposal], rng)[0]


def split_dataset(dataset: Dataset, eval_fraction: float = 0.2) -> tuple[list[Frame], list[Frame]]:
    """Deterministic (train, eval) split by hashing frame ids."""
    if not 0.0 <= eval_fraction < 1.0:
        raise ValueError(f"eval_fraction must be in [0, 1), got {eval_fraction}")
    train, held_out = [], []
    for frame in dataset.frames:
        digest = hashlib.md5(frame.frame_id.encode("utf-8")).digest()
        u = int.from_bytes(digest[:8], "big") / 2**64
        (held_out if u < eval_fraction else train).append(frame)
    return train, held_out


def save(dataset: Dataset, path: str) -> None:
    """Write the line-delimited dataset format (UTF-8, fixed field order)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header_line(dataset))
        fh.write("\n")
        for frame in dataset.frames:
            fh.write(_frame_line(frame))
            fh.write("\n")


def _header_line(dataset: Dataset) -> str:
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "taxonomy": dataset.taxonomy.to_spec(),
        "frame_width": dataset.config.frame_width,
        "frame_height": dataset.config.frame_height,
        "seed": dataset.seed,
        "n_frames": len(dataset.frames),
        "config": dataset.config.to_dict(),
    }
    return json.dumps(header, separators=(",", ":"))


def _frame_line(frame: Frame) -> str:
    parts = [frame.frame_id, frame.source.value, str(frame.seed), str(len(frame.annotations))]
    for ann in frame.annotations:
        b = ann.box
        parts += [
            f"{b.x1:.6f}", f"{b.y1:.6f}", f"{b.x2:.6f}", f"{b.y2:.6f}",
            str(ann.subclass), "1" if ann.visible else "0",
        ]
    return " ".join(parts)


def _parse_frame_line(line: str, lineno: int, width: float, height: float) -> Frame:
    tokens = line.split()
    if len(tokens) < 4:
        raise DatasetFormatError(f"line {lineno}: expected at least 4 fields, got {len(tokens)}")
    frame_id, source_value, seed_text, count_text = tokens[:4]
    try:
        source = SourceTag(source_value)
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: unknown source tag {source_value!r}") from None
    try:
        seed = int(seed_text)
        count = int(count_text)
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: bad seed/count fields") from None
    if len(tokens) != 4 + 6 * count:
        raise DatasetFormatError(
            f"line {lineno}: frame {frame_id}: expected {4 + 6 * count} fields for "
            f"{count} annotations, got {len(tokens)}"
        )
    annotations = []
    for a in range(count):
        chunk = tokens[4 + 6 * a : 10 + 6 * a]
        try:
            x1, y1, x2, y2 = (float(v) for v in chunk[:4])
            subclass = int(chunk[4])
            visible_flag = chunk[5]
            if visible_flag not in ("0", "1"):
                raise ValueError(f"visible flag must be 0 or 1, got {visible_flag!r}")
            box = Box(x1, y1, x2, y2)
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: frame {frame_id}: {exc}") from None
        annotations.append(Annotation(box, subclass, visible_flag == "1"))
    try:
        return Frame(frame_id, width, height, source, tuple(annotations), seed)
    except DatasetSchemaError as exc:
        raise DatasetFormatError(f"line {lineno}: {exc}") from None


def load(path: str) -> Dataset:
    """Read a dataset file; raises DatasetFormatError / DatasetSchemaError."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("line 1: empty file, expected a header record")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line 1: bad header: {exc}") from None
    if header.get("format") != FORMAT_NAME:
        raise DatasetSchemaError(f"not a {FORMAT_NAME} file: format={header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise DatasetSchemaError(f"unsupported format version {header.get('version')!r}")
    try:
        taxonomy = taxonomy_from_spec(header["taxonomy"])
        config = GeneratorConfig.from_dict(header["config"])
        seed = int(header["seed"])
        n_frames = int(header["n_frames"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetSchemaError(f"bad header contents: {exc}") from None
    frames = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        frames.append(_parse_frame_line(line, i, config.frame_width, config.frame_height))
    if len(frames) != n_frames:
        raise DatasetSchemaError(f"header promises {n_frames} frames, file has {len(frames)}")
    return Dataset(taxonomy=taxonomy, config=config, seed=seed, frames=tuple(frames))
