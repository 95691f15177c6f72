"""Per-frame annotation schema and clip-level majority labels."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

MOTIONS = ("advancing", "withdrawing", "exiting", "none")
TOOLS = ("catheter", "snare", "forceps")
ILLUMINATIONS = ("white_light", "narrow_band")
SCREEN_POSITIONS = ("center", "left", "right", "top", "bottom")
SITES = ("cecum", "ascending", "transverse", "descending", "sigmoid", "rectum")
HISTOLOGY = ("adenoma", "hyperplastic", "serrated", "carcinoma")


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class Lesion:
    on_screen_position: str
    anatomical_site: str
    size_mm: float
    histopathology: str

    def validate(self) -> None:
        _check("on_screen_position", self.on_screen_position, SCREEN_POSITIONS)
        _check("anatomical_site", self.anatomical_site, SITES)
        _check("histopathology", self.histopathology, HISTOLOGY)
        if not self.size_mm > 0:
            raise AnnotationError(f"lesion size_mm must be > 0, got {self.size_mm}")


@dataclass(frozen=True)
class FrameAnnotation:
    frame_index: int
    scope_motion: str = "none"
    tools: tuple[str, ...] = ()
    visibility: bool = True
    occlusion: bool = False
    flushing: bool = False
    illumination: str = "white_light"
    lesion: Lesion | None = None

    def validate(self) -> "FrameAnnotation":
        _check("scope_motion", self.scope_motion, MOTIONS)
        _check("illumination", self.illumination, ILLUMINATIONS)
        for t in self.tools:
            _check("tools", t, TOOLS)
        if self.lesion is not None:
            self.lesion.validate()
        return self

    def to_json(self) -> dict:
        d = asdict(self)
        d["tools"] = list(self.tools)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FrameAnnotation":
        known = {"frame_index", "scope_motion", "tools", "visibility", "occlusion", "flushing",
                 "illumination", "lesion"}
        extra = set(d) - known
        if extra:
            raise AnnotationError(f"unknown annotation fields {sorted(extra)}")
        lesion = d.get("lesion")
        return cls(
            frame_index=int(d["frame_index"]),
            scope_motion=d.get("scope_motion", "none"),
            tools=tuple(d.get("tools", ())),
            visibility=bool(d.get("visibility", True)),
            occlusion=bool(d.get("occlusion", False)),
            flushing=bool(d.get("flushing", False)),
            illumination=d.get("illumination", "white_light"),
            lesion=None if lesion is None else Lesion(**lesion),
        ).validate()


def _check(field_name: str, value, allowed: Sequence[str]) -> None:
    if value not in allowed:
        raise AnnotationError(f"{field_name}={value!r} not in {allowed}")


def save_annotations(path: str | Path, frames: Sequence[FrameAnnotation]) -> None:
    doc = {"frames": [f.to_json() for f in frames]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_annotations(path: str | Path) -> list[FrameAnnotation]:
    """Read a per-frame annotation file: ``{"frames": [{...FrameAnnotation fields...}, ...]}``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "frames" not in doc:
        raise AnnotationError("annotation file must be an object with a 'frames' list")
    return [FrameAnnotation.from_json(f) for f in doc["frames"]]


# --- majority-over-frames labels -------------------------------------------

def majority_label(annotations: Sequence[FrameAnnotation], predicate: Callable[[FrameAnnotation], bool],
                   n_frames: int = 8) -> bool:
    """True iff the predicate holds on strictly more than half of the clip's frames."""
    if len(annotations) != n_frames:
        raise AnnotationError(f"expected {n_frames} frame annotations, got {len(annotations)}")
    hits = sum(1 for a in annotations if predicate(a))
    return 2 * hits > n_frames


def majority_value(values: Sequence, n_frames: int):
    """The value held by a strict majority of frames, or None."""
    if not values:
        return None
    value, count = Counter(values).most_common(1)[0]
    return value if 2 * count > n_frames else None


@dataclass
class ClipFacts:
    """Clip-level ground truth derived from per-frame annotations."""

    motion: str | None
    tool_present: bool
    tools: tuple[str, ...]
    tool_majority: dict[str, bool]
    visibility: bool
    occlusion: bool
    flushing: bool
    illumination: str | None
    lesion_present: bool
    lesion: Lesion | None = None
    lesion_position: str | None = None
    lesion_drift: bool = False
    notes: list[str] = field(default_factory=list)


def clip_facts(annotations: Sequence[FrameAnnotation], n_frames: int = 8) -> ClipFacts:
    maj = lambda pred: majority_label(annotations, pred, n_frames)  # noqa: E731
    tool_majority = {t: maj(lambda a, t=t: t in a.tools) for t in TOOLS}
    lesion_present = maj(lambda a: a.lesion is not None)
    lesion = position = None
    drift = False
    if lesion_present:
        with_lesion = [a.lesion for a in annotations if a.lesion is not None]
        # static attributes: the most common record among lesion frames
        lesion = Counter((l.anatomical_site, l.size_mm, l.histopathology) for l in with_lesion).most_common(1)[0][0]
        lesion = Lesion(with_lesion[0].on_screen_position, lesion[0], lesion[1], lesion[2])
        position = majority_value([a.lesion.on_screen_position if a.lesion else None for a in annotations],
                                  n_frames)
        first = with_lesion[0].on_screen_position
        drift = maj(lambda a: a.lesion is not None and a.lesion.on_screen_position != first)
    return ClipFacts(
        motion=majority_value([a.scope_motion for a in annotations], n_frames),
        tool_present=maj(lambda a: bool(a.tools)),
        tools=tuple(t for t in TOOLS if tool_majority[t]),
        tool_majority=tool_majority,
        visibility=maj(lambda a: a.visibility),
        occlusion=maj(lambda a: a.occlusion),
        flushing=maj(lambda a: a.flushing),
        illumination=majority_value([a.illumination for a in annotations], n_frames),
        lesion_present=lesion_present,
        lesion=lesion,
        lesion_position=position,
        lesion_drift=drift,
    )
