"""Attention-guided generators and patch discriminators.

Each generator maps an RGB image to n attention masks (softmax-normalized
per pixel, last mask = background), n-1 RGB content masks in [-1, 1], and
the fused output

    fused = sum_i content_i * attention_i  +  input * attention_background.

Two generators (cloudy->clear and clear->cloudy) pair with four patch
discriminators: one plain and one attention-guided per direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .nn import Conv2d, InstanceNorm2d, ParameterRegistry, ResidualBlock, init_parameters
from .tensor import ShapeError, Tensor

ATTENDED_INPUT_MODES = ("concat", "multiply")


@dataclass
class ModelConfig:
    image_size: int = 64
    n_masks: int = 2
    residual_blocks: int = 4
    base_channels: int = 16
    discriminator_layers: int = 4
    attended_input: str = "concat"

    def __post_init__(self):
        if self.image_size % 4 != 0 or self.image_size < 8:
            raise ValueError(f"image_size must be a multiple of 4 and >= 8, got {self.image_size}")
        if self.n_masks < 2:
            raise ValueError(f"n_masks must be >= 2, got {self.n_masks}")
        if self.residual_blocks < 1:
            raise ValueError(f"residual_blocks must be >= 1, got {self.residual_blocks}")
        if self.discriminator_layers < 2:
            raise ValueError(f"discriminator_layers must be >= 2, got {self.discriminator_layers}")
        if self.attended_input not in ATTENDED_INPUT_MODES:
            raise ValueError(f"attended_input must be one of {ATTENDED_INPUT_MODES}")

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "n_masks": self.n_masks,
            "residual_blocks": self.residual_blocks,
            "base_channels": self.base_channels,
            "discriminator_layers": self.discriminator_layers,
            "attended_input": self.attended_input,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class GeneratorOutput:
    attention: Tensor  # N x n x H x W, rows sum to 1 per pixel
    content: Tensor    # N x 3(n-1) x H x W in [-1, 1]
    fused: Tensor      # N x 3 x H x W in [-1, 1]


def fuse(x: Tensor, attention: Tensor, content: Tensor) -> Tensor:
    """Blend content masks and the input under the attention masks."""
    n = attention.shape[1]
    if content.shape[1] != 3 * (n - 1):
        raise ShapeError(
            f"fuse: {n} masks need {3 * (n - 1)} content channels, got {content.shape[1]}"
        )
    if x.shape[1] != 3 or x.shape[0] != attention.shape[0] or x.shape[2:] != attention.shape[2:]:
        raise ShapeError(f"fuse: input {x.shape} vs attention {attention.shape}")
    total = None
    for i in range(n - 1):
        a_i = T.expand_channels(T.slice_channels(attention, i, i + 1), 3)
        c_i = T.slice_channels(content, 3 * i, 3 * i + 3)
        term = T.mul(c_i, a_i)
        total = term if total is None else T.add(total, term)
    bg = T.expand_channels(T.slice_channels(attention, n - 1, n), 3)
    return T.add(total, T.mul(x, bg))


def foreground_mask(attention: Tensor) -> Tensor:
    """1 - background mask; the per-pixel foreground weight in [0, 1]."""
    n = attention.shape[1]
    return T.sub(1.0, T.slice_channels(attention, n - 1, n))


class Generator:
    """Encoder / residual body / decoder with attention and content heads."""

    def __init__(self, reg: ParameterRegistry, prefix: str, cfg: ModelConfig):
        self.cfg = cfg
        c = cfg.base_channels
        self.enc1 = Conv2d(reg, f"{prefix}.enc1", 3, c, 7, stride=1, padding=3, bias=False)
        self.in1 = InstanceNorm2d(reg, f"{prefix}.in1", c)
        self.enc2 = Conv2d(reg, f"{prefix}.enc2", c, 2 * c, 3, stride=2, padding=1, bias=False)
        self.in2 = InstanceNorm2d(reg, f"{prefix}.in2", 2 * c)
        self.enc3 = Conv2d(reg, f"{prefix}.enc3", 2 * c, 4 * c, 3, stride=2, padding=1, bias=False)
        self.in3 = InstanceNorm2d(reg, f"{prefix}.in3", 4 * c)
        self.blocks = [
            ResidualBlock(reg, f"{prefix}.res{i}", 4 * c) for i in range(cfg.residual_blocks)
        ]
        self.dec1 = Conv2d(reg, f"{prefix}.dec1", 4 * c, 2 * c, 3, stride=1, padding=1, bias=False)
        self.in4 = InstanceNorm2d(reg, f"{prefix}.in4", 2 * c)
        self.dec2 = Conv2d(reg, f"{prefix}.dec2", 2 * c, c, 3, stride=1, padding=1, bias=False)
        self.in5 = InstanceNorm2d(reg, f"{prefix}.in5", c)
        self.attention_head = Conv2d(reg, f"{prefix}.attn_head", c, cfg.n_masks, 7,
                                     stride=1, padding=3)
        self.content_head = Conv2d(reg, f"{prefix}.content_head", c, 3 * (cfg.n_masks - 1), 7,
                                   stride=1, padding=3)

    def __call__(self, x: Tensor) -> GeneratorOutput:
        s = self.cfg.image_size
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != s or x.shape[3] != s:
            raise ShapeError(f"generator: expects N x 3 x {s} x {s}, got {x.shape}")
        h = T.relu(self.in1(self.enc1(x)))
        h = T.relu(self.in2(self.enc2(h)))
        h = T.relu(self.in3(self.enc3(h)))
        for block in self.blocks:
            h = block(h)
        h = T.relu(self.in4(self.dec1(T.upsample_nearest(h, 2))))
        h = T.relu(self.in5(self.dec2(T.upsample_nearest(h, 2))))
        attention = T.softmax_over_channel(self.attention_head(h))
        content = T.tanh(self.content_head(h))
        return GeneratorOutput(attention, content, fuse(x, attention, content))


class PatchDiscriminator:
    """Stack of 4x4 convs emitting a logit per local patch.

    discriminator_layers - 1 stride-2 convs halve the resolution; the
    final stride-1 conv uses asymmetric padding so the logit map is
    exactly H / 2^(layers-1) on a side.
    """

    def __init__(self, reg: ParameterRegistry, prefix: str, cfg: ModelConfig,
                 in_channels: int = 3):
        self.in_channels = in_channels
        c = cfg.base_channels
        self.convs: list[Conv2d] = []
        self.norms: list[InstanceNorm2d | None] = []
        ch_in = in_channels
        for i in range(cfg.discriminator_layers - 1):
            ch_out = c * (2 ** i)
            use_norm = i > 0
            self.convs.append(
                Conv2d(reg, f"{prefix}.c{i + 1}", ch_in, ch_out, 4,
                       stride=2, padding=1, bias=not use_norm)
            )
            self.norms.append(
                InstanceNorm2d(reg, f"{prefix}.n{i + 1}", ch_out) if use_norm else None
            )
            ch_in = ch_out
        self.logit = Conv2d(reg, f"{prefix}.logit", ch_in, 1, 4,
                            stride=1, padding=((1, 2), (1, 2)))

    def __call__(self, img: Tensor) -> Tensor:
        if img.ndim != 4 or img.shape[1] != self.in_channels:
            raise ShapeError(
                f"discriminator: expects N x {self.in_channels} x H x W, got {img.shape}"
            )
        h = img
        for conv, norm in zip(self.convs, self.norms):
            h = conv(h)
            if norm is not None:
                h = norm(h)
            h = T.leaky_relu(h, 0.2)
        return self.logit(h)


@dataclass
class CloudRemovalModel:
    """The full six-network model over one shared parameter registry."""

    cfg: ModelConfig
    dtype: np.dtype = field(default=np.dtype(np.float32))

    def __post_init__(self):
        self.registry = ParameterRegistry(dtype=self.dtype)
        attended_ch = 4 if self.cfg.attended_input == "concat" else 3
        self.gen_xy = Generator(self.registry, "gen_xy", self.cfg)
        self.gen_yx = Generator(self.registry, "gen_yx", self.cfg)
        self.disc_y = PatchDiscriminator(self.registry, "disc_y", self.cfg)
        self.disc_x = PatchDiscriminator(self.registry, "disc_x", self.cfg)
        self.disc_ya = PatchDiscriminator(self.registry, "disc_ya", self.cfg, attended_ch)
        self.disc_xa = PatchDiscriminator(self.registry, "disc_xa", self.cfg, attended_ch)

    def init(self, seed: int) -> "CloudRemovalModel":
        init_parameters(self.registry, seed)
        return self

    def generator_param_names(self) -> list[str]:
        return [n for n in self.registry.names() if n.startswith(("gen_xy.", "gen_yx."))]

    def discriminator_param_names(self) -> list[str]:
        return [n for n in self.registry.names() if n.startswith("disc_")]

    def discriminate_attended(self, disc: PatchDiscriminator, img: Tensor,
                              mask: Tensor) -> Tensor:
        """Judge an (image, foreground-mask) pair.

        The default combines them by channel concatenation; the
        "multiply" mode gates the image by the mask instead.
        """
        if mask.ndim != 4 or mask.shape[1] != 1 or mask.shape[2:] != img.shape[2:] \
                or mask.shape[0] != img.shape[0]:
            raise ShapeError(f"attended discriminator: mask {mask.shape} vs image {img.shape}")
        if self.cfg.attended_input == "concat":
            return disc(T.concat_channels([img, mask]))
        return disc(T.mul(img, T.expand_channels(mask, 3)))
