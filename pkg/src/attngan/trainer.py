"""Alternating adversarial optimization: generators first, then the four
discriminators on detached fakes, per step. Deterministic given the seed
when run single-threaded."""

from __future__ import annotations

import json
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import CheckpointState, save_checkpoint
from .data import ImagePair
from .losses import (GeneratorTerms, LossReport, LossWeights, adversarial_d,
                     adversarial_g, cycle_loss, pixel_loss, total_generator_loss)
from .model import CloudRemovalModel, ModelConfig, foreground_mask
from .tensor import NumericError, Tape, Tensor


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    decay_start: int | None = None  # resolved to epochs // 2
    seed: int = 42
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.decay_start is None:
            self.decay_start = self.epochs // 2
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0 <= self.decay_start <= self.epochs):
            raise ValueError(
                f"decay_start must lie in [0, {self.epochs}], got {self.decay_start}"
            )
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ValueError(f"lr must be positive and finite, got {self.lr}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "decay_start": self.decay_start,
            "seed": self.seed,
            "weights": self.weights.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = LossWeights.from_dict(d["weights"])
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Constant lr through decay_start (inclusive), then linear to 0 at
    the final epoch boundary. Defined on [0, epochs]; lr_at(epochs) == 0."""
    if epoch < 0 or epoch > cfg.epochs:
        raise ValueError(f"epoch {epoch} out of range [0, {cfg.epochs}]")
    if epoch == cfg.epochs:
        return 0.0
    if epoch <= cfg.decay_start:
        return cfg.lr
    return cfg.lr * (1.0 - (epoch - cfg.decay_start) / (cfg.epochs - cfg.decay_start))


class Adam:
    """Adam with GAN-conventional beta1; moments keyed by parameter name."""

    def __init__(self, named_params: list[tuple[str, Tensor]],
                 beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.named_params = list(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros(p.shape, dtype=p.dtype) for n, p in self.named_params}
        self.v = {n: np.zeros(p.shape, dtype=p.dtype) for n, p in self.named_params}

    def step(self, grads: dict[Tensor, Tensor], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.named_params:
            g = grads.get(p)
            if g is None:
                continue
            gd = g.data
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * gd
            v *= b2
            v += (1 - b2) * gd * gd
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@contextmanager
def frozen(params: list[Tensor]):
    """Temporarily exclude params from gradient accumulation."""
    prev = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, r in zip(params, prev):
            p.requires_grad = r


def train_step(model: CloudRemovalModel, opt_g: Adam, opt_d: Adam,
               x: Tensor, y: Tensor, weights: LossWeights, lr: float) -> LossReport:
    """One alternating update; returns the per-term loss report."""
    disc_params = [model.registry[n] for n in model.discriminator_param_names()]
    gen_params = [model.registry[n] for n in model.generator_param_names()]

    with frozen(disc_params), Tape() as tape_g:
        out_y = model.gen_xy(x)
        out_x = model.gen_yx(y)
        rec_x = model.gen_yx(out_y.fused).fused
        rec_y = model.gen_xy(out_x.fused).fused
        mask_y = foreground_mask(out_y.attention)
        mask_x = foreground_mask(out_x.attention)
        terms = GeneratorTerms(
            adv_xy=adversarial_g(model.disc_y(out_y.fused)),
            adv_yx=adversarial_g(model.disc_x(out_x.fused)),
            att_adv_xy=adversarial_g(
                model.discriminate_attended(model.disc_ya, out_y.fused, mask_y)),
            att_adv_yx=adversarial_g(
                model.discriminate_attended(model.disc_xa, out_x.fused, mask_x)),
            cyc_x=cycle_loss(x, rec_x),
            cyc_y=cycle_loss(y, rec_y),
            pix_xy=pixel_loss(out_y.fused, y),
            pix_yx=pixel_loss(out_x.fused, x),
        )
        g_total = total_generator_loss(terms, weights)
        grads_g = tape_g.backward(g_total)
    opt_g.step(grads_g, lr)

    fake_y, fake_x = out_y.fused.detach(), out_x.fused.detach()
    m_y, m_x = mask_y.detach(), mask_x.detach()
    with frozen(gen_params), Tape() as tape_d:
        d_terms = {
            "d_y": adversarial_d(model.disc_y(y), model.disc_y(fake_y)),
            "d_x": adversarial_d(model.disc_x(x), model.disc_x(fake_x)),
            "d_ya": adversarial_d(
                model.discriminate_attended(model.disc_ya, y, m_y),
                model.discriminate_attended(model.disc_ya, fake_y, m_y)),
            "d_xa": adversarial_d(
                model.discriminate_attended(model.disc_xa, x, m_x),
                model.discriminate_attended(model.disc_xa, fake_x, m_x)),
        }
        d_total = T.add(T.add(d_terms["d_y"], d_terms["d_x"]),
                        T.add(d_terms["d_ya"], d_terms["d_xa"]))
        grads_d = tape_d.backward(d_total)

    gen_ids = {id(p) for p in gen_params}
    leaked = [k for k in grads_d if id(k) in gen_ids]
    if leaked:  # contract: D updates never reach generator parameters
        raise AssertionError(f"discriminator step produced {len(leaked)} generator gradients")
    opt_d.step(grads_d, lr)

    return LossReport.build(
        {k: t.item() for k, t in terms.as_mapping().items()},
        {k: t.item() for k, t in d_terms.items()},
        weights,
    )


def _checkpoint_state(model, cfg, epoch, step, metrics, opt_g, opt_d, rng) -> CheckpointState:
    return CheckpointState(
        model=model,
        train_config=cfg.to_dict(),
        epoch=epoch,
        step=step,
        metrics=metrics,
        adam_steps={"g": opt_g.t, "d": opt_d.t},
        adam_m={**opt_g.m, **opt_d.m},
        adam_v={**opt_g.v, **opt_d.v},
        rng_state=rng.bit_generator.state,
    )


def train(pairs: list[ImagePair], cfg: TrainConfig, out_dir: str) -> CheckpointState:
    """Run the full loop; writes train_log.jsonl and periodic checkpoints.

    Returns the final state (also saved as checkpoint_final.agcr).
    """
    if not pairs:
        raise ValueError("training set is empty")
    os.makedirs(out_dir, exist_ok=True)

    model = CloudRemovalModel(cfg.model).init(cfg.seed)
    named = list(model.registry.items())
    opt_g = Adam([(n, p) for n, p in named if n.startswith(("gen_xy.", "gen_yx."))],
                 cfg.beta1, cfg.beta2, cfg.adam_eps)
    opt_d = Adam([(n, p) for n, p in named if n.startswith("disc_")],
                 cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)

    step = 0
    last_report: dict[str, float] = {}
    ckpt_every = max(1, cfg.epochs // 10)
    log_path = os.path.join(out_dir, "train_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log_file:
        for epoch in range(cfg.epochs):
            lr = lr_at(epoch, cfg)
            order = rng.permutation(len(pairs))
            for lo in range(0, len(order), cfg.batch_size):
                sel = order[lo:lo + cfg.batch_size]
                x = Tensor(np.stack([pairs[i].cloudy for i in sel]))
                y = Tensor(np.stack([pairs[i].clean for i in sel]))
                t0 = time.perf_counter()
                report = train_step(model, opt_g, opt_d, x, y, cfg.weights, lr)
                wall_ms = (time.perf_counter() - t0) * 1000.0

                last_report = report.to_dict()
                for term, value in last_report.items():
                    if not math.isfinite(value):
                        raise NumericError(
                            f"loss term {term!r} is non-finite at step {step} (epoch {epoch})"
                        )
                record = {"epoch": epoch, "step": step, "lr": lr}
                record.update(last_report)
                record["wall_ms"] = round(wall_ms, 3)
                log_file.write(json.dumps(record) + "\n")
                step += 1
            if (epoch + 1) % ckpt_every == 0 or epoch + 1 == cfg.epochs:
                state = _checkpoint_state(model, cfg, epoch + 1, step, last_report,
                                          opt_g, opt_d, rng)
                save_checkpoint(state, os.path.join(out_dir, f"checkpoint_epoch{epoch + 1:04d}.agcr"))
        log_file.flush()

    state = _checkpoint_state(model, cfg, cfg.epochs, step, last_report, opt_g, opt_d, rng)
    save_checkpoint(state, os.path.join(out_dir, "checkpoint_final.agcr"))
    return state
