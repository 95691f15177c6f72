"""Deterministic synthetic endoscopy-like clips with exact per-frame labels.

Visual analogs, one per annotation field:

* scope motion  -> dark lumen disc growing (advancing), shrinking (withdrawing),
  shrinking twice as fast (exiting) or constant (none)
* tools         -> light glyph in the lower right: bar (catheter), ring (snare),
  V shape (forceps)
* illumination  -> teal colour cast for narrow band
* visibility    -> low-contrast wash when poor
* occlusion     -> grey patch in the upper left
* flushing      -> blue vertical streaks
* lesion        -> coloured square; colour = histopathology, side = size,
  placement = on-screen position, background hue = anatomical site
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..video import Clip, SamplerSpec
from .annotations import (
    HISTOLOGY,
    ILLUMINATIONS,
    MOTIONS,
    SCREEN_POSITIONS,
    SITES,
    TOOLS,
    FrameAnnotation,
    Lesion,
)

_MOTION_RATE = {"advancing": 0.2, "withdrawing": -0.2, "exiting": -0.4, "none": 0.0}  # px per source frame
_HISTO_RGB = {
    "adenoma": (0.55, 0.05, 0.08),
    "hyperplastic": (0.95, 0.80, 0.80),
    "serrated": (0.95, 0.55, 0.10),
    "carcinoma": (0.35, 0.05, 0.40),
}
_SITE_TINT = dict(zip(SITES, np.linspace(-0.12, 0.12, len(SITES))))


@dataclass(frozen=True)
class LesionSpec:
    anatomical_site: str
    size_mm: float
    histopathology: str
    positions: tuple[str | None, ...]  # per clip frame; None = off screen


@dataclass(frozen=True)
class SyntheticSceneSpec:
    seed: int
    motion: str = "none"
    tool: str | None = None
    tool_frames: tuple[int, ...] = ()
    illumination: tuple[str, ...] = ()  # per clip frame; empty = white light throughout
    occluder_frames: tuple[int, ...] = ()
    flushing_frames: tuple[int, ...] = ()
    low_visibility_frames: tuple[int, ...] = ()
    lesion: LesionSpec | None = None
    image_size: int = 32

    def illumination_at(self, k: int) -> str:
        return self.illumination[k] if self.illumination else "white_light"


def _run(rng: np.random.Generator, n: int) -> tuple[int, ...]:
    """Empty, full, or a random contiguous run of clip frames."""
    mode = rng.integers(3)
    if mode == 0:
        return ()
    if mode == 1:
        return tuple(range(n))
    a = int(rng.integers(0, n))
    b = int(rng.integers(a + 1, n + 1))
    return tuple(range(a, b))


def random_scene_spec(seed: int, n_frames: int = 8, image_size: int = 32) -> SyntheticSceneSpec:
    rng = np.random.default_rng(seed)
    motion = MOTIONS[rng.integers(len(MOTIONS))]
    tool = TOOLS[rng.integers(len(TOOLS))] if rng.random() < 0.6 else None
    tool_frames = _run(rng, n_frames) if tool else ()
    nb = _run(rng, n_frames)
    illumination = tuple("narrow_band" if k in nb else "white_light" for k in range(n_frames))
    lesion = None
    if rng.random() < 0.7:
        on = _run(rng, n_frames) or tuple(range(n_frames))
        start = SCREEN_POSITIONS[rng.integers(len(SCREEN_POSITIONS))]
        moved = SCREEN_POSITIONS[rng.integers(len(SCREEN_POSITIONS))]
        shift_at = int(rng.integers(1, n_frames + 1))
        positions = tuple((start if k < shift_at else moved) if k in on else None for k in range(n_frames))
        lesion = LesionSpec(
            anatomical_site=SITES[rng.integers(len(SITES))],
            size_mm=float(rng.integers(2, 21)),
            histopathology=HISTOLOGY[rng.integers(len(HISTOLOGY))],
            positions=positions,
        )
    return SyntheticSceneSpec(
        seed=seed, motion=motion, tool=tool, tool_frames=tool_frames, illumination=illumination,
        occluder_frames=_run(rng, n_frames), flushing_frames=_run(rng, n_frames),
        low_visibility_frames=_run(rng, n_frames) if rng.random() < 0.5 else (),
        lesion=lesion, image_size=image_size,
    )


def _background(rng: np.random.Generator, size: int, site_tint: float) -> np.ndarray:
    coarse = rng.random((4, 4, 1))
    up = np.kron(coarse, np.ones((size // 4, size // 4, 1)))
    base = np.array([0.85 + site_tint, 0.45, 0.40 - site_tint])
    return np.clip(base[None, None, :] * (0.75 + 0.25 * up), 0, 1)


def _disc(img: np.ndarray, radius: float) -> None:
    n = img.shape[0]
    yy, xx = np.mgrid[0:n, 0:n]
    c = (n - 1) / 2
    inside = (yy - c) ** 2 + (xx - c) ** 2 <= radius**2
    img[inside] = img[inside] * 0.15


def _tool(img: np.ndarray, tool: str) -> None:
    n = img.shape[0]
    colour = np.array([0.9, 0.9, 0.85])
    o = n * 5 // 8  # glyph box origin
    s = n - o - 1
    yy, xx = np.mgrid[0:s, 0:s]
    if tool == "catheter":
        glyph = np.abs(yy - xx) <= 0
    elif tool == "snare":
        r = (yy - s / 2) ** 2 + (xx - s / 2) ** 2
        glyph = (r <= (s / 2) ** 2) & (r >= (s / 2 - 1.5) ** 2)
    else:
        glyph = (np.abs(xx - s / 2) == (s - 1 - yy) / 2) | (np.abs(xx - s / 2 - 0.5) <= 0.5) & (yy > s / 2)
    patch = img[o:o + s, o:o + s]
    patch[glyph] = colour


_POS_XY = {"center": (0.5, 0.5), "left": (0.5, 0.2), "right": (0.5, 0.8), "top": (0.2, 0.5), "bottom": (0.8, 0.5)}


def _lesion(img: np.ndarray, position: str, size_mm: float, histo: str) -> None:
    n = img.shape[0]
    side = max(2, int(round(1 + size_mm / 3)))
    cy, cx = (int(round(v * (n - 1))) for v in _POS_XY[position])
    y0, x0 = max(0, cy - side // 2), max(0, cx - side // 2)
    img[y0:y0 + side, x0:x0 + side] = _HISTO_RGB[histo]


def render_frame(spec: SyntheticSceneSpec, k: int, sampler: SamplerSpec) -> tuple[np.ndarray, FrameAnnotation]:
    n = spec.image_size
    site = spec.lesion.anatomical_site if spec.lesion else None
    bg_rng = np.random.default_rng([spec.seed, 7])
    img = _background(bg_rng, n, _SITE_TINT.get(site, 0.0))
    t = k * sampler.stride
    r0 = n * 0.25 if _MOTION_RATE[spec.motion] >= 0 else n * 0.4
    _disc(img, max(1.0, r0 + _MOTION_RATE[spec.motion] * t))

    lesion_ann = None
    if spec.lesion is not None and spec.lesion.positions[k] is not None:
        les = spec.lesion
        _lesion(img, les.positions[k], les.size_mm, les.histopathology)
        lesion_ann = Lesion(les.positions[k], les.anatomical_site, les.size_mm, les.histopathology)
    tools: tuple[str, ...] = ()
    if spec.tool is not None and k in spec.tool_frames:
        _tool(img, spec.tool)
        tools = (spec.tool,)
    flushing = k in spec.flushing_frames
    if flushing:
        img[:, ::4] = img[:, ::4] * 0.4 + np.array([0.1, 0.3, 0.6])
    occluded = k in spec.occluder_frames
    if occluded:
        img[: n * 3 // 8, : n * 3 // 8] = 0.5
    illumination = spec.illumination_at(k)
    if illumination == "narrow_band":
        img = img * np.array([0.35, 0.9, 0.8])
    visible = k not in spec.low_visibility_frames
    if not visible:
        img = 0.35 * img + 0.65 * 0.6
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    ann = FrameAnnotation(
        frame_index=k, scope_motion=spec.motion, tools=tools, visibility=visible, occlusion=occluded,
        flushing=flushing, illumination=illumination, lesion=lesion_ann,
    )
    return pixels, ann


def render_synthetic_clip(spec: SyntheticSceneSpec, sampler: SamplerSpec = SamplerSpec(),
                          source_id: str = "") -> tuple[Clip, list[FrameAnnotation]]:
    """Render the sampled frames of a scene; annotations mirror what was drawn."""
    assert spec.illumination == () or all(i in ILLUMINATIONS for i in spec.illumination)
    frames, anns = [], []
    for k in range(sampler.n_frames):
        px, ann = render_frame(spec, k, sampler)
        frames.append(px)
        anns.append(ann.validate())
    data = np.stack(frames).astype(np.float32) / np.float32(255.0)
    clip = Clip(frames=data, source_id=source_id or f"synthetic-{spec.seed}", start_frame_index=0,
                indices=tuple(sampler.indices(0)))
    return clip, anns
