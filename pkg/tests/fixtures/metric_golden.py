"""Hand-scored metric fixture, written down before the metric code existed.

Each entry: candidate, reference, keywords, then expected scores on the
[0, 1] scale. Values are closed forms worked out by hand; the derivation is
sketched in the comment above each case.
"""

import math

E = math.exp

GOLDEN = [
    # c=2, r=6. p1=p2=1, p3=p4 smoothed to 1/4; BP=e^-2.
    # LCS 2 -> P=1, R=1/3. bigram overlap 1 of 1/5. METEOR m=2, one chunk.
    dict(cand="the cat", ref="the cat sat on the mat", keywords=("cat",),
         bleu4=E(-2) * 0.5, bleu3=E(-2) * 0.25 ** (1 / 3), rouge_l=0.5, rouge_2=1 / 3,
         meteor=(5 / 14) * (15 / 16), kacc=1),
    # identity of 7 words; METEOR keeps a one-chunk penalty of 0.5/7^3
    dict(cand="a catheter is visible in the scene", ref="a catheter is visible in the scene",
         keywords=("catheter",),
         bleu4=1.0, bleu3=1.0, rouge_l=1.0, rouge_2=1.0, meteor=1 - 0.5 / 343, kacc=1),
    # c=2, r=3. BP=e^-0.5; LCS 2 -> F=0.8; bigrams 1 of 1/2 -> 2/3
    dict(cand="the cat", ref="the cat sat", keywords=("sat",),
         bleu4=E(-0.5) * 0.5, bleu3=E(-0.5) * 0.25 ** (1 / 3), rouge_l=0.8, rouge_2=2 / 3,
         meteor=(20 / 29) * (15 / 16), kacc=0),
    # 3-word identity: no 4-gram exists, p4 smoothed to 1/6
    dict(cand="no tool visible", ref="no tool visible", keywords=("no",),
         bleu4=(1 / 6) ** 0.25, bleu3=1.0, rouge_l=1.0, rouge_2=1.0, meteor=1 - 0.5 / 27, kacc=1),
    # stem stage: visibly~visible, clear~clearly; 5 matches in 3 chunks
    # p1=3/5 p2=2/4 p3=1/3 p4=0->1/10
    dict(cand="the mucosa is visibly clear", ref="the mucosa is clearly visible", keywords=("mucosa",),
         bleu4=0.01 ** 0.25, bleu3=0.1 ** (1 / 3), rouge_l=0.6, rouge_2=0.5,
         meteor=1 - 0.5 * 0.6**3, kacc=1),
    # word boundary: "catheterization" is not "catheter". c=3 r=7, p1=1/3, rest 1/6
    dict(cand="a catheterization device", ref="a catheter is visible in the scene", keywords=("catheter",),
         bleu4=E(1 - 7 / 3) * (1 / 648) ** 0.25, bleu3=E(1 - 7 / 3) * (1 / 108) ** (1 / 3),
         rouge_l=0.2, rouge_2=0.0, meteor=5 / 66, kacc=0),
    # multi-word keyword; c=4 r=6, p1=1/2 p2=1/3 p3=p4=1/8
    dict(cand="narrow band imaging active", ref="the clip uses narrow band illumination",
         keywords=("narrow band",),
         bleu4=E(-0.5) * (1 / 384) ** 0.25, bleu3=E(-0.5) * (1 / 48) ** (1 / 3),
         rouge_l=0.4, rouge_2=0.25, meteor=(10 / 29) * (15 / 16), kacc=1),
    # empty candidate scores zero everywhere
    dict(cand="", ref="no tool is in view", keywords=("no",),
         bleu4=0.0, bleu3=0.0, rouge_l=0.0, rouge_2=0.0, meteor=0.0, kacc=0),
    # disjoint single words: no unigram overlap means BLEU 0 (no smoothing)
    dict(cand="yes", ref="no", keywords=("no",),
         bleu4=0.0, bleu3=0.0, rouge_l=0.0, rouge_2=0.0, meteor=0.0, kacc=0),
    # single-word identity: p2..p4 smoothed to 1/2; no bigrams on either side
    dict(cand="catheter", ref="catheter", keywords=("catheter",),
         bleu4=(1 / 8) ** 0.25, bleu3=(1 / 4) ** (1 / 3), rouge_l=1.0, rouge_2=1.0, meteor=0.5, kacc=1),
    # swapped words: 4 matches in 3 chunks; p2=1/3, p3=p4=1/8
    dict(cand="snare the is used", ref="the snare is used", keywords=("yes", "snare"),
         bleu4=(1 / 192) ** 0.25, bleu3=(1 / 24) ** (1 / 3), rouge_l=0.75, rouge_2=1 / 3,
         meteor=1 - 0.5 * (3 / 4) ** 3, kacc=0),
    # clipping: "the" counts at most twice. p1=1/2, higher orders 1/8, BP=e^-0.5
    dict(cand="the the the the", ref="the cat is on the mat", keywords=("the",),
         bleu4=E(-0.5) * (1 / 1024) ** 0.25, bleu3=E(-0.5) * (1 / 128) ** (1 / 3),
         rouge_l=0.4, rouge_2=0.0, meteor=5 / 29, kacc=1),
]
