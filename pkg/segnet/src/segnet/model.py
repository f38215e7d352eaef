"""Segmentation model: convolutional stem, hybrid attention stages with
long-range contrast modules, and an FPN decoder back to input resolution."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

DEFAULT_DILATIONS = (3, 5, 11)


@dataclass
class LclmSpec:
    dilations: tuple = DEFAULT_DILATIONS
    kernel: int = 3
    depthwise: bool = True
    normalize: bool = True
    activate: bool = True

    def __post_init__(self):
        d = tuple(int(v) for v in self.dilations)
        if any(v <= 0 for v in d) or list(d) != sorted(set(d)):
            raise ValueError("dilations must be positive and strictly increasing")
        self.dilations = d


@dataclass
class ModelSpec:
    in_channels: int = 1
    out_channels: int = 1
    stem_channels: int = 32
    stage_channels: tuple = (48, 64, 96, 176, 288)
    attn_dims: tuple = (192, 288, 400)
    attn_depths: tuple = (2, 4, 3)
    fpn_channels: int = 384
    patch_size: int = 2
    lclm: LclmSpec = field(default_factory=LclmSpec)
    use_lclm: bool = True
    use_mvit: bool = True

    def __post_init__(self):
        if len(self.stage_channels) != 5:
            raise ValueError("stage_channels must list five stages")
        if len(self.attn_dims) != 3 or len(self.attn_depths) != 3:
            raise ValueError("attn_dims/attn_depths cover the last three stages")
        if min(self.stage_channels) <= 0 or self.fpn_channels <= 0:
            raise ValueError("channel counts must be positive")


def conv_bn_act(cin, cout, k=3, stride=1, dilation=1, groups=1):
    pad = dilation * (k - 1) // 2
    return nn.Sequential(
        nn.Conv2d(cin, cout, k, stride, pad, dilation, groups, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class Lclm(nn.Module):
    """Cascaded depthwise dilated 3x3 convolutions with a residual."""

    def __init__(self, channels: int, spec: LclmSpec = None):
        super().__init__()
        spec = spec or LclmSpec()
        self.spec = spec
        groups = channels if spec.depthwise else 1
        layers = []
        for d in spec.dilations:
            conv = nn.Conv2d(
                channels,
                channels,
                spec.kernel,
                padding=d * (spec.kernel - 1) // 2,
                dilation=d,
                groups=groups,
                bias=False,
            )
            block = [conv]
            if spec.normalize:
                block.append(nn.BatchNorm2d(channels))
            if spec.activate:
                block.append(nn.ReLU(inplace=True))
            layers.append(nn.Sequential(*block))
        self.cascade = nn.Sequential(*layers)

    def dilated_depthwise_param_count(self) -> int:
        """Weights of the dilated convolution cascade only (no norm)."""
        return sum(
            m.weight.numel()
            for seq in self.cascade
            for m in seq
            if isinstance(m, nn.Conv2d)
        )

    def forward(self, x):
        return x + self.cascade(x)


class TransformerLayer(nn.Module):
    def __init__(self, dim, heads=4, mlp_ratio=2.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim)
        )

    def forward(self, x):
        y = self.norm1(x)
        x = x + self.attn(y, y, y, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class MobileVitBlock(nn.Module):
    """Local 3x3 representation, patch-wise self-attention, conv fusion."""

    def __init__(self, channels, dim, depth, patch=2, heads=4):
        super().__init__()
        self.patch = patch
        self.local = nn.Sequential(
            conv_bn_act(channels, channels, 3), nn.Conv2d(channels, dim, 1, bias=False)
        )
        self.transformer = nn.Sequential(
            *[TransformerLayer(dim, heads) for _ in range(depth)]
        )
        self.proj = conv_bn_act(dim, channels, 1)
        self.fuse = conv_bn_act(2 * channels, channels, 3)

    def forward(self, x):
        res = x
        y = self.local(x)
        p = self.patch
        H, W = y.shape[-2:]
        ph, pw = (p - H % p) % p, (p - W % p) % p
        if ph or pw:
            y = F.pad(y, (0, pw, 0, ph))
        h, w = y.shape[-2] // p, y.shape[-1] // p
        y = rearrange(y, "b d (h p1) (w p2) -> (b p1 p2) (h w) d", p1=p, p2=p)
        y = self.transformer(y)
        y = rearrange(
            y, "(b p1 p2) (h w) d -> b d (h p1) (w p2)", p1=p, p2=p, h=h, w=w
        )
        if ph or pw:
            y = y[..., :H, :W]
        y = self.proj(y)
        return self.fuse(torch.cat([res, y], dim=1))


def lclm_stage(channels: int, spec: LclmSpec = None) -> nn.Sequential:
    """Canonical probe target: a plain 3x3 convolution feeding an LCLM."""
    return nn.Sequential(
        nn.Conv2d(channels, channels, 3, padding=1, bias=False),
        Lclm(channels, spec),
    )


class SegModel(nn.Module):
    def __init__(self, spec: ModelSpec = None):
        super().__init__()
        spec = spec or ModelSpec()
        self.spec = spec
        c = spec.stage_channels
        # stages 1-2: plain convolution
        self.stage1 = nn.Sequential(
            conv_bn_act(spec.in_channels, spec.stem_channels, 3, stride=2),
            conv_bn_act(spec.stem_channels, c[0], 3),
        )
        self.stage2 = nn.Sequential(
            conv_bn_act(c[0], c[1], 3, stride=2), conv_bn_act(c[1], c[1], 3)
        )

        # stages 3-5: downsample, then attention block and LCLM in turn
        def hybrid(cin, cout, dim, depth):
            mods = [conv_bn_act(cin, cout, 3, stride=2)]
            if spec.use_mvit:
                mods.append(MobileVitBlock(cout, dim, depth, spec.patch_size))
            else:
                mods.append(conv_bn_act(cout, cout, 3))
            if spec.use_lclm:
                mods.append(Lclm(cout, spec.lclm))
            return nn.Sequential(*mods)

        self.stage3 = hybrid(c[1], c[2], spec.attn_dims[0], spec.attn_depths[0])
        self.stage4 = hybrid(c[2], c[3], spec.attn_dims[1], spec.attn_depths[1])
        self.stage5 = hybrid(c[3], c[4], spec.attn_dims[2], spec.attn_depths[2])

        f = spec.fpn_channels
        self.lateral = nn.ModuleList(
            [nn.Conv2d(ci, f, 1) for ci in (c[1], c[2], c[3], c[4])]
        )
        self.smooth = nn.ModuleList([conv_bn_act(f, f, 3) for _ in range(4)])
        self.head = nn.Sequential(
            conv_bn_act(f, f, 3),
            conv_bn_act(f, f // 2, 3),
            nn.Conv2d(f // 2, spec.out_channels, 1),
        )

    def forward_logits(self, x):
        size = x.shape[-2:]
        x1 = self.stage1(x)
        x2 = self.stage2(x1)
        x3 = self.stage3(x2)
        x4 = self.stage4(x3)
        x5 = self.stage5(x4)
        feats = [x2, x3, x4, x5]
        out = self.lateral[3](x5)
        out = self.smooth[3](out)
        for i in (2, 1, 0):
            out = F.interpolate(out, size=feats[i].shape[-2:], mode="nearest")
            out = out + self.lateral[i](feats[i])
            out = self.smooth[i](out)
        out = self.head(out)
        return F.interpolate(out, size=size, mode="bilinear", align_corners=False)

    def forward(self, x):
        return torch.sigmoid(self.forward_logits(x))


def build_model(spec: ModelSpec = None) -> SegModel:
    return SegModel(spec or ModelSpec())


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def receptive_field_probe(stage: nn.Module, input_size: int = 128) -> int:
    """Spatial extent of one output pixel's input support, by gradient.

    The stage is copied with constant positive convolution weights and
    identity normalization so gradients flow everywhere the architecture
    allows; the result depends only on the structure.
    """
    probe = copy.deepcopy(stage).eval()
    for m in probe.modules():
        if isinstance(m, nn.Conv2d):
            with torch.no_grad():
                m.weight.fill_(0.01)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.running_mean.zero_()
                m.running_var.fill_(1.0)
    channels = next(
        m.in_channels for m in probe.modules() if isinstance(m, nn.Conv2d)
    )
    x = torch.ones(1, channels, input_size, input_size, requires_grad=True)
    y = probe(x)
    center = input_size // 2
    y[0, :, center, center].sum().backward()
    support = (x.grad.abs().sum(dim=(0, 1)) > 0).nonzero()
    rows = support[:, 0]
    cols = support[:, 1]
    extent_r = int(rows.max() - rows.min()) + 1
    extent_c = int(cols.max() - cols.min()) + 1
    return max(extent_r, extent_c)
