"""Clip sampling, spatiotemporal cube embedding and tube masking."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .tensor import DTYPE, ShapeError, Tensor, ops


class ClipWindowError(IndexError):
    """The sampling window runs past the end of the source video."""


class DivisibilityError(ShapeError):
    pass


@dataclass(frozen=True)
class SamplerSpec:
    n_frames: int = 8
    stride: int = 4
    fps: float = 30.0

    def __post_init__(self):
        if self.n_frames < 1 or self.stride < 1:
            raise ValueError(f"n_frames and stride must be >= 1, got {self.n_frames}, {self.stride}")

    def indices(self, anchor: int) -> list[int]:
        return [anchor + k * self.stride for k in range(self.n_frames)]

    @property
    def span_frames(self) -> int:
        return (self.n_frames - 1) * self.stride

    @property
    def span_seconds(self) -> float:
        return self.span_frames / self.fps


@dataclass
class Clip:
    frames: np.ndarray  # (T, H, W, C) float32 in [0, 1]
    source_id: str = ""
    start_frame_index: int = 0
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.frames.ndim != 4:
            raise ShapeError(f"clip frames must be (T, H, W, C), got {self.frames.shape}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def to_unit_float(frames: np.ndarray) -> np.ndarray:
    if frames.dtype == np.uint8:
        return frames.astype(DTYPE) / DTYPE(255.0)
    return frames.astype(DTYPE)


def sample_clip(video: np.ndarray | Sequence[np.ndarray], anchor: int, spec: SamplerSpec = SamplerSpec(),
                source_id: str = "") -> Clip:
    """Take frames ``anchor, anchor + stride, ...`` from a (N, H, W, C) frame store."""
    n = len(video)
    idx = spec.indices(anchor)
    if anchor < 0 or idx[-1] >= n:
        raise ClipWindowError(f"window {idx[0]}..{idx[-1]} exceeds video of {n} frames")
    frames = np.stack([to_unit_float(np.asarray(video[i])) for i in idx])
    return Clip(frames=frames, source_id=source_id, start_frame_index=anchor, indices=tuple(idx))


# --- on-disk clip layout -------------------------------------------------

HEADER_NAME = "header.txt"


def frame_name(k: int) -> str:
    return f"frame_{k:03d}.png"


def save_clip(clip: Clip, directory: str | Path, spec: SamplerSpec = SamplerSpec()) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, f in enumerate(clip.frames):
        p = d / frame_name(k)
        pixels = np.clip(np.rint(f * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(pixels, mode="RGB").save(p, format="PNG", optimize=False)
        paths.append(p)
    header = {
        "source_id": clip.source_id,
        "start_frame_index": clip.start_frame_index,
        "fps": spec.fps,
        "stride": spec.stride,
    }
    (d / HEADER_NAME).write_text("".join(f"{k}={v}\n" for k, v in header.items()), encoding="utf-8")
    return paths


def read_header(directory: str | Path) -> dict[str, str]:
    out = {}
    for line in (Path(directory) / HEADER_NAME).read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def load_frames(paths: Sequence[str | Path]) -> np.ndarray:
    return np.stack([to_unit_float(np.asarray(Image.open(p).convert("RGB"))) for p in paths])


def load_clip(directory: str | Path) -> Clip:
    d = Path(directory)
    paths = sorted(d.glob("frame_*.png"))
    if not paths:
        raise FileNotFoundError(f"no frame_*.png files in {d}")
    header = read_header(d)
    start = int(header.get("start_frame_index", 0))
    stride = int(header.get("stride", 1))
    return Clip(
        frames=load_frames(paths),
        source_id=header.get("source_id", ""),
        start_frame_index=start,
        indices=tuple(start + k * stride for k in range(len(paths))),
    )


# --- cube tokens ---------------------------------------------------------

@dataclass(frozen=True)
class CubeGrid:
    cube: tuple[int, int, int]
    grid: tuple[int, int, int]
    tokens: Tensor  # (..., T'H'W', D)

    @property
    def n_tokens(self) -> int:
        t, h, w = self.grid
        return t * h * w


def grid_dims(frame_shape: tuple[int, int, int], cube: tuple[int, int, int]) -> tuple[int, int, int]:
    """(T, H, W) and cube (t, h, w) -> (T/t, H/h, W/w)."""
    out = []
    for axis, n, c in zip("THW", frame_shape, cube):
        if c < 1 or n % c:
            raise DivisibilityError(f"axis {axis}: extent {n} is not divisible by cube size {c}")
        out.append(n // c)
    return tuple(out)


def patchify(frames: np.ndarray, cube: tuple[int, int, int]) -> np.ndarray:
    """Flatten cubes of (..., T, H, W, C) into (..., N, t*h*w*C).

    Tokens run temporal-major, then row-major over the spatial grid.
    """
    *lead, T, H, W, C = frames.shape
    gt, gh, gw = grid_dims((T, H, W), cube)
    t, h, w = cube
    x = frames.reshape(*lead, gt, t, gh, h, gw, w, C)
    k = len(lead)
    order = list(range(k)) + [k + i for i in (0, 2, 4, 1, 3, 5, 6)]
    x = x.transpose(order)
    return np.ascontiguousarray(x.reshape(*lead, gt * gh * gw, t * h * w * C), dtype=DTYPE)


def cube_embed(frames: np.ndarray | Clip, cube: tuple[int, int, int], weight: Tensor, bias: Tensor | None,
               pos_enc: np.ndarray | None) -> CubeGrid:
    """Linear projection of each flattened cube to D dims, plus positional encoding."""
    if isinstance(frames, Clip):
        frames = frames.frames
    T, H, W = frames.shape[-4:-1]
    grid = grid_dims((T, H, W), cube)
    patches = Tensor(patchify(frames, cube))
    if patches.shape[-1] != weight.shape[1]:
        raise ShapeError(f"cube_embed: cube size {patches.shape[-1]} vs projection {weight.shape}")
    tokens = ops.matmul(patches, ops.swap_last(weight))
    if bias is not None:
        tokens = ops.add(tokens, bias)
    if pos_enc is not None:
        tokens = ops.add(tokens, Tensor(pos_enc[: tokens.shape[-2]]))
    return CubeGrid(cube=tuple(cube), grid=grid, tokens=tokens)


# --- tube masking ---------------------------------------------------------

@dataclass(frozen=True)
class TubeMask:
    mask_ratio: float
    masked: np.ndarray  # (H', W') bool
    seed: int | None = None

    @property
    def n_masked(self) -> int:
        return int(self.masked.sum())

    def visible_token_indices(self, n_time: int) -> np.ndarray:
        """Flat token indices that survive masking, in ascending order."""
        spatial = np.flatnonzero(~self.masked.reshape(-1))
        per_slice = self.masked.size
        return (np.arange(n_time)[:, None] * per_slice + spatial[None, :]).reshape(-1)


def make_tube_mask(grid: tuple[int, int, int], ratio: float, rng: np.random.Generator,
                   seed: int | None = None) -> TubeMask:
    """Mask ``round(ratio * H'W')`` spatial positions, shared across all time slices."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"mask ratio must be in [0, 1), got {ratio}")
    _, gh, gw = grid
    n = gh * gw
    k = int(round(ratio * n))
    flat = np.zeros(n, dtype=bool)
    if k:
        flat[rng.choice(n, size=k, replace=False)] = True
    return TubeMask(mask_ratio=ratio, masked=flat.reshape(gh, gw), seed=seed)


def apply_mask(tokens: Tensor, grid: tuple[int, int, int], masks: TubeMask | Sequence[TubeMask]):
    """Keep only tokens at unmasked spatial positions.

    ``tokens`` is (N, D) with a single mask, or (B, N, D) with one mask per
    batch row (all with the same masked count). Returns the visible tokens and
    the index map (Nv,) or (B, Nv) of their flat positions.
    """
    gt, gh, gw = grid
    single = isinstance(masks, TubeMask)
    mask_list = [masks] if single else list(masks)
    for m in mask_list:
        if m.masked.shape != (gh, gw):
            raise ShapeError(f"mask {m.masked.shape} vs grid spatial dims {(gh, gw)}")
    if tokens.shape[-2] != gt * gh * gw:
        raise ShapeError(f"token count {tokens.shape[-2]} vs grid {grid}")
    if single:
        idx = mask_list[0].visible_token_indices(gt)
        return ops.getitem(tokens, (idx,)) if tokens.ndim == 2 else ops.getitem(tokens, (slice(None), idx)), idx
    idx = np.stack([m.visible_token_indices(gt) for m in mask_list])
    rows = np.arange(len(mask_list))[:, None]
    return ops.getitem(tokens, (rows, idx)), idx


def reinsert(visible: np.ndarray, index_map: np.ndarray, n_total: int, fill: float = 0.0) -> np.ndarray:
    """Scatter visible tokens back into a full (N, D) sequence."""
    out = np.full((n_total,) + visible.shape[1:], fill, dtype=visible.dtype)
    out[index_map] = visible
    return out
