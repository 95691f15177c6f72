"""Synthetic colonoscopy-style clips, per-frame annotations and template QA generation."""

from .annotations import (
    AnnotationError,
    FrameAnnotation,
    Lesion,
    clip_facts,
    load_annotations,
    majority_label,
    save_annotations,
)
from .generate import (
    DEFAULT_SPLIT,
    MANIFEST_FIELDS,
    QAPair,
    build_dataset,
    generate_qa,
    perturb_question,
    read_manifest,
    split_counts,
    write_dataset,
)
from .render import SyntheticSceneSpec, random_scene_spec, render_synthetic_clip
from .templates import TEMPLATE_BY_ID, TEMPLATES, QATemplate

__all__ = [
    "DEFAULT_SPLIT", "MANIFEST_FIELDS", "TEMPLATES", "TEMPLATE_BY_ID", "AnnotationError", "FrameAnnotation",
    "Lesion", "QAPair", "QATemplate",
    "SyntheticSceneSpec", "build_dataset", "clip_facts", "generate_qa", "load_annotations", "majority_label",
    "perturb_question", "random_scene_spec", "read_manifest", "render_synthetic_clip", "save_annotations",
    "split_counts", "write_dataset",
]
