"""Training objectives: least-squares adversarial, cycle, and pixel losses.

The adversarial terms use the least-squares form (logits pulled to 1 for
real, 0 for fake), which stays stable at batch size 1. Cycle and pixel
losses are plain L1 means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import tensor as T
from .tensor import Tensor


@dataclass
class LossWeights:
    lambda_adv: float = 1.0
    lambda_att_adv: float = 1.0
    lambda_cyc: float = 10.0
    lambda_pix: float = 1.0

    def __post_init__(self):
        for name, v in self.to_dict().items():
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    def to_dict(self) -> dict:
        return {
            "lambda_adv": self.lambda_adv,
            "lambda_att_adv": self.lambda_att_adv,
            "lambda_cyc": self.lambda_cyc,
            "lambda_pix": self.lambda_pix,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


def adversarial_g(logits_fake: Tensor) -> Tensor:
    """Generator-side LSGAN term: mean((logits - 1)^2)."""
    return T.mean(T.square(T.sub(logits_fake, 1.0)))


def adversarial_d(logits_real: Tensor, logits_fake: Tensor) -> Tensor:
    """Discriminator-side LSGAN term: (mean((real-1)^2) + mean(fake^2)) / 2."""
    real = T.mean(T.square(T.sub(logits_real, 1.0)))
    fake = T.mean(T.square(logits_fake))
    return T.mul(T.add(real, fake), 0.5)


def cycle_loss(x: Tensor, x_reconstructed: Tensor) -> Tensor:
    """L1 between an input and its round-trip reconstruction."""
    return T.mean(T.absolute(T.sub(x_reconstructed, x)))


def pixel_loss(generated: Tensor, target: Tensor) -> Tensor:
    """L1 between a generated image and its paired ground truth."""
    return T.mean(T.absolute(T.sub(generated, target)))


GENERATOR_TERMS = ("adv_xy", "adv_yx", "att_adv_xy", "att_adv_yx",
                   "cyc_x", "cyc_y", "pix_xy", "pix_yx")
DISCRIMINATOR_TERMS = ("d_y", "d_x", "d_ya", "d_xa")

_TERM_WEIGHT = {
    "adv_xy": "lambda_adv", "adv_yx": "lambda_adv",
    "att_adv_xy": "lambda_att_adv", "att_adv_yx": "lambda_att_adv",
    "cyc_x": "lambda_cyc", "cyc_y": "lambda_cyc",
    "pix_xy": "lambda_pix", "pix_yx": "lambda_pix",
}


@dataclass
class GeneratorTerms:
    """The eight scalar loss tensors from one synchronized forward pass."""
    adv_xy: Tensor
    adv_yx: Tensor
    att_adv_xy: Tensor
    att_adv_yx: Tensor
    cyc_x: Tensor
    cyc_y: Tensor
    pix_xy: Tensor
    pix_yx: Tensor

    def as_mapping(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in GENERATOR_TERMS}


def total_generator_loss(terms: GeneratorTerms, weights: LossWeights) -> Tensor:
    """Weighted sum of all generator-side terms, differentiable."""
    wd = weights.to_dict()
    total = None
    for name, t in terms.as_mapping().items():
        weighted = T.mul(t, wd[_TERM_WEIGHT[name]])
        total = weighted if total is None else T.add(total, weighted)
    return total


@dataclass
class LossReport:
    """Per-term raw values plus weighted totals for one training step."""
    generator: dict[str, float] = field(default_factory=dict)
    discriminator: dict[str, float] = field(default_factory=dict)
    generator_total: float = 0.0
    discriminator_total: float = 0.0

    @classmethod
    def build(cls, g_terms: dict[str, float], d_terms: dict[str, float],
              weights: LossWeights) -> "LossReport":
        wd = weights.to_dict()
        g_total = sum(wd[_TERM_WEIGHT[k]] * v for k, v in g_terms.items())
        d_total = sum(d_terms.values())
        return cls(dict(g_terms), dict(d_terms), g_total, d_total)

    def to_dict(self) -> dict:
        out: dict[str, float] = {}
        out.update(self.generator)
        out.update(self.discriminator)
        out["g_total"] = self.generator_total
        out["d_total"] = self.discriminator_total
        return out
