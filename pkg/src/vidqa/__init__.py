"""Desk-scale video question answering.

Tube-masked spatiotemporal video tokens, a cross-attention video/text encoder,
a LoRA-adapted causal decoder trained with a keyword-weighted BCE objective,
a template-driven synthetic dataset builder, and generative-answer metrics.
"""

__version__ = "0.1.0"
