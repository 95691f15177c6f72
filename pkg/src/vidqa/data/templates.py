"""Question templates: 17 categories over six reasoning domains."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .annotations import TOOLS, ClipFacts

DOMAINS = ("Instruments", "Sizing", "Diagnosis", "Positions", "Operation Notes", "Movement")


class Inapplicable(Exception):
    """The template's slots cannot be filled for this clip."""


@dataclass(frozen=True)
class Answer:
    short: str
    long: str
    keywords: tuple[str, ...]


Rule = Callable[[ClipFacts, dict], Answer]


@dataclass(frozen=True)
class QATemplate:
    template_id: str
    category: str
    domain: str
    question: str
    rule: Rule
    paraphrases: tuple[str, ...]
    slots: tuple[str, ...] = ()

    def fill_slots(self, rng: np.random.Generator) -> dict:
        values = {}
        if "tool" in self.slots:
            values["tool"] = TOOLS[rng.integers(len(TOOLS))]
        return values

    def render(self, slots: dict) -> str:
        return self.question.format(**slots)


def _yes_no(flag: bool, yes_long: str, no_long: str) -> Answer:
    return Answer("yes", yes_long, ("yes",)) if flag else Answer("no", no_long, ("no",))


def _need_lesion(f: ClipFacts) -> None:
    if not f.lesion_present or f.lesion is None:
        raise Inapplicable("no lesion on a majority of frames")


def size_bucket(size_mm: float) -> str:
    if size_mm <= 5:
        return "diminutive"
    if size_mm < 10:
        return "small"
    return "large"


def _mm(size: float) -> str:
    return str(int(size)) if float(size).is_integer() else f"{size:g}"


def _tool_identity(f: ClipFacts, s: dict) -> Answer:
    if len(f.tools) != 1:
        raise Inapplicable("no single tool holds a majority of frames")
    t = f.tools[0]
    return Answer(t, f"a {t} is visible in the scene", (t,))


def _tool_usage(f: ClipFacts, s: dict) -> Answer:
    t = s["tool"]
    if f.tool_majority[t]:
        return Answer("yes", f"yes the {t} is being used", ("yes", t))
    return Answer("no", f"no the {t} is not being used", ("no", t))


def _screen_position(f: ClipFacts, s: dict) -> Answer:
    _need_lesion(f)
    if f.lesion_position is None:
        raise Inapplicable("lesion position has no majority")
    p = f.lesion_position
    return Answer(p, f"the lesion appears in the {p} region", (p,))


def _site(f: ClipFacts, s: dict) -> Answer:
    _need_lesion(f)
    site = f.lesion.anatomical_site
    return Answer(site, f"the lesion is in the {site} segment", (site,))


def _size(f: ClipFacts, s: dict) -> Answer:
    _need_lesion(f)
    b = size_bucket(f.lesion.size_mm)
    return Answer(b, f"the lesion is {b} measuring {_mm(f.lesion.size_mm)} mm", (b,))


def _histology(f: ClipFacts, s: dict) -> Answer:
    _need_lesion(f)
    h = f.lesion.histopathology
    return Answer(h, f"the lesion is consistent with {h}", (h,))


def _illumination(f: ClipFacts, s: dict) -> Answer:
    if f.illumination is None:
        raise Inapplicable("illumination mode has no majority")
    mode = f.illumination.replace("_", " ")
    return Answer(mode, f"the clip uses {mode} illumination", (mode,))


def _motion(f: ClipFacts, s: dict) -> Answer:
    if f.motion is None:
        raise Inapplicable("scope motion has no majority")
    m = "stationary" if f.motion == "none" else f.motion
    return Answer(m, f"the endoscope is {m} in the colon", (m,))


def _drift(f: ClipFacts, s: dict) -> Answer:
    _need_lesion(f)
    return _yes_no(f.lesion_drift, "yes the lesion drifts across the screen", "no the lesion stays in place")


TEMPLATES: tuple[QATemplate, ...] = (
    # Instruments
    QATemplate("I1", "tool_presence", "Instruments", "Is there any surgical tool visible in this clip?",
               lambda f, s: _yes_no(f.tool_present, "yes a surgical tool is in view", "no tool is in view"),
               ("Can any instrument be seen in the video?", "Does the clip show a surgical instrument?")),
    QATemplate("I2", "tool_identity", "Instruments", "Which tool is visible in this clip?", _tool_identity,
               ("What instrument appears in the video?", "Name the device shown in this clip.")),
    QATemplate("I3", "tool_usage", "Instruments", "Is the {tool} being used during this clip?", _tool_usage,
               ("Does the clip show the {tool} in use?", "Is a {tool} employed in this video?"), ("tool",)),
    # Positions
    QATemplate("P1", "lesion_screen_position", "Positions", "Where is the lesion located on the screen?",
               _screen_position,
               ("In which part of the frame is the polyp?", "Where on screen does the lesion appear?")),
    QATemplate("P2", "lesion_site", "Positions", "In which colon segment is the lesion found?", _site,
               ("Which part of the colon holds the lesion?", "Where in the colon is this polyp?")),
    # Sizing
    QATemplate("S1", "lesion_size", "Sizing", "What is the estimated size of the lesion?", _size,
               ("How large is the polyp in this clip?", "How big does the lesion appear to be?")),
    # Diagnosis
    QATemplate("D1", "histopathology", "Diagnosis", "What is the histopathology of the lesion?", _histology,
               ("What type of tissue is this polyp?", "Which histological class fits the lesion?")),
    # Operation Notes
    QATemplate("O1", "illumination_mode", "Operation Notes", "Which illumination mode is used in this clip?",
               _illumination,
               ("What lighting mode does the video use?", "Is the clip lit with white or narrow band light?")),
    QATemplate("O2", "mucosa_visibility", "Operation Notes", "Is the mucosa clearly visible in this clip?",
               lambda f, s: _yes_no(f.visibility, "yes the mucosa is clearly visible",
                                    "no the mucosa is poorly visible"),
               ("Can the mucosa be seen well in the video?", "Is the tissue surface clear in this clip?")),
    QATemplate("O3", "flushing", "Operation Notes", "Is flushing being performed during this clip?",
               lambda f, s: _yes_no(f.flushing, "yes flushing is being performed now",
                                    "no flushing is not being performed"),
               ("Is water irrigation happening in the video?", "Does the clip show any flushing?")),
    QATemplate("O4", "occlusion", "Operation Notes", "Is the view occluded at any point in this clip?",
               lambda f, s: _yes_no(f.occlusion, "yes the view is partly occluded",
                                    "no the view is not occluded"),
               ("Is the camera view blocked in the video?", "Does something obstruct the view here?")),
    QATemplate("O5", "lesion_visibility", "Operation Notes", "Is a lesion visible on the screen in this clip?",
               lambda f, s: _yes_no(f.lesion_present, "yes a lesion is visible on screen",
                                    "no lesion is visible on screen"),
               ("Can a polyp be seen in the video?", "Does the clip show any lesion?")),
    # Movement
    QATemplate("M1", "scope_motion", "Movement", "How is the endoscope moving in this clip?", _motion,
               ("What motion does the scope show in the video?", "Describe how the endoscope moves here.")),
    QATemplate("M2", "scope_advancing", "Movement", "Is the endoscope advancing in this clip?",
               lambda f, s: _yes_no(f.motion == "advancing", "yes the endoscope is advancing",
                                    "no the endoscope is not advancing"),
               ("Is the scope moving forward in the video?", "Does the endoscope push deeper here?")),
    QATemplate("M3", "scope_withdrawing", "Movement", "Is the endoscope being withdrawn in this clip?",
               lambda f, s: _yes_no(f.motion == "withdrawing", "yes the endoscope is withdrawing",
                                    "no the endoscope is not withdrawing"),
               ("Is the scope pulling back in the video?", "Does the endoscope retract in this clip?")),
    QATemplate("M4", "scope_exiting", "Movement", "Is the endoscope exiting the colon in this clip?",
               lambda f, s: _yes_no(f.motion == "exiting", "yes the endoscope is exiting the colon",
                                    "no the endoscope is not exiting"),
               ("Is the scope leaving the colon in the video?", "Does the clip show the scope exiting?")),
    QATemplate("M5", "lesion_drift", "Movement", "Is the lesion drifting across the screen?", _drift,
               ("Does the polyp move across the frame?", "Is the lesion shifting position on screen?")),
)

TEMPLATE_BY_ID = {t.template_id: t for t in TEMPLATES}
