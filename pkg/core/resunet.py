"""
ResUNet neural operator.

Encoder–decoder over field histories: a stem convolution, `levels` encoder
stages of two residual blocks followed by a stride-2 downsample, a single
residual block at the bottleneck, and a mirrored decoder that upsamples,
concatenates the encoder skip and applies two residual blocks. A 1×1 head
maps to the k predicted steps.

Scaling variants hook into every residual block: after both convolutions
(before group norm) and after the skip-path transform.
"""

from __future__ import annotations

import hashlib
import json
from collections import OrderedDict
from typing import Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from core.errors import ConfigError, DivisibilityError, ShapeError, ValidationError
from core.hfs import FourierScaleParams, HfsParams, fourier_scale, hfs_apply
from core.ops import (
    add, concat_channels, conv2d, default_groups, downsample, gelu, group_norm, upsample,
)
from core.tensor import Tensor, get_default_dtype
from utils.config import (
    FOURIER_TAU, GROUP_NORM_EPS, GROUP_NORM_GROUPS, HFS_OVERHEAD_LIMIT,
    LAMBDA_INIT, MIN_PATCH_SIZE, PATCH_SIZE,
)
from utils.logging_config import info, warning


__all__ = [
    "ModelConfig",
    "ResUNet",
    "ResidualBlock",
    "WIDTH_TABLE",
    "build",
    "forward",
    "rollout",
    "parameter_count",
    "hfs_parameter_count",
    "kolmogorov_layout",
    "boiling_layout",
]


# Tabelle larghezze pubblicate: base_width con moltiplicatori di default
WIDTH_TABLE: Dict[str, int] = {"xs": 4, "s": 8, "m": 16, "l": 32}


# ────────────────────────────────────────────────────────────────────────────────
# Config
# ────────────────────────────────────────────────────────────────────────────────

class ModelConfig(BaseModel):
    """Topologia ResUNet e variante di scaling."""

    in_channels: int = Field(20, gt=0)
    out_channels: int = Field(5, gt=0)
    height: int = Field(64, gt=0)
    width: int = Field(64, gt=0)
    levels: int = Field(5, ge=1)
    base_width: int = Field(4, gt=0)
    width_multipliers: List[int] = Field(default_factory=lambda: [1, 2, 4, 8, 8, 8])
    residual_blocks: bool = True
    scaling_variant: Literal["none", "hfs", "fourier"] = "none"
    patch_size: int = Field(PATCH_SIZE, gt=0)
    min_patch_size: int = Field(MIN_PATCH_SIZE, gt=0)
    norm_groups: int = Field(GROUP_NORM_GROUPS, gt=0)
    norm_eps: float = Field(GROUP_NORM_EPS, gt=0)
    lambda_dc_init: float = LAMBDA_INIT
    lambda_hfc_init: float = LAMBDA_INIT
    fourier_tau: float = Field(FOURIER_TAU, gt=0, lt=1)
    fourier_lambda_init: float = 1.0
    max_hfs_overhead: Optional[float] = None

    @field_validator("width_multipliers", mode="before")
    @classmethod
    def _split_list(cls, value):
        if isinstance(value, str):
            return [int(v) for v in value.split(",") if v.strip()]
        return value

    @model_validator(mode="after")
    def _check_topology(self):
        if len(self.width_multipliers) < self.levels + 1:
            raise ValueError(
                f"width_multipliers richiede {self.levels + 1} valori (uno per livello + bottleneck)"
            )
        if any(m <= 0 for m in self.width_multipliers):
            raise ValueError("width_multipliers devono essere positivi")
        factor = 2 ** self.levels
        if self.height % factor or self.width % factor:
            raise ValueError(f"dimensioni {self.height}×{self.width} non divisibili per 2^{self.levels}")
        return self

    # topologia derivata -------------------------------------------------------

    def widths(self) -> List[int]:
        """Larghezze per livello 0..levels (l'ultima è il bottleneck)."""
        return [self.base_width * m for m in self.width_multipliers[: self.levels + 1]]

    def level_shape(self, level: int) -> Tuple[int, int]:
        return self.height >> level, self.width >> level

    def patch_size_at(self, level: int) -> int:
        return max(self.min_patch_size, self.patch_size >> level)

    def digest(self) -> str:
        payload = json.dumps(self.model_dump(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def validate_build(self) -> None:
        """Controlli che richiedono la topologia completa (gruppi, patch)."""
        for level, c in enumerate(self.widths()):
            groups = default_groups(c, self.norm_groups)
            if c % groups:
                raise DivisibilityError(
                    f"larghezza {c} al livello {level} non divisibile in {groups} gruppi",
                    level=level, channels=c, groups=groups,
                )
            if self.scaling_variant == "hfs":
                h, w = self.level_shape(level)
                p = self.patch_size_at(level)
                if h % p or w % p:
                    raise DivisibilityError(
                        f"patch {p} non divide la mappa {h}×{w} al livello {level}",
                        level=level, patch_size=p,
                    )


def kolmogorov_layout(history: int = 20, horizon: int = 5, **overrides) -> ModelConfig:
    """Input: solo storia della vorticità."""
    return ModelConfig(in_channels=history, out_channels=horizon, **overrides)


def boiling_layout(k: int = 5, **overrides) -> ModelConfig:
    """Input: k temperature passate + 2 componenti di velocità su finestra passata e futura."""
    return ModelConfig(in_channels=k + 2 * 2 * k, out_channels=k, **overrides)


# ────────────────────────────────────────────────────────────────────────────────
# Conteggio parametri analitico
# ────────────────────────────────────────────────────────────────────────────────

def _conv_params(c_in: int, c_out: int, k: int) -> int:
    return c_out * c_in * k * k + c_out


def _block_params(c_in: int, c_out: int, residual: bool) -> Tuple[int, int]:
    """(parametri rete, siti di scaling × canali)."""
    count = _conv_params(c_in, c_out, 3) + 2 * c_out + _conv_params(c_out, c_out, 3) + 2 * c_out
    sites = 2 * c_out
    if residual:
        if c_in != c_out:
            count += _conv_params(c_in, c_out, 1)
        sites += c_out
    return count, sites


def _count(config: ModelConfig) -> Tuple[int, int]:
    widths = config.widths()
    levels = config.levels
    residual = config.residual_blocks
    total = _conv_params(config.in_channels, widths[0], 3)
    site_channels = 0

    for level in range(levels):
        c = widths[level]
        for _ in range(2):
            n, s = _block_params(c, c, residual)
            total += n
            site_channels += s
        total += _conv_params(c, widths[level + 1], 3)

    n, s = _block_params(widths[levels], widths[levels], residual)
    total += n
    site_channels += s

    for level in reversed(range(levels)):
        c = widths[level]
        total += _conv_params(widths[level + 1], c, 3)
        for c_in in (2 * c, c):
            n, s = _block_params(c_in, c, residual)
            total += n
            site_channels += s

    total += _conv_params(widths[0], config.out_channels, 1)
    scaling = 0 if config.scaling_variant == "none" else 2 * site_channels
    return total + scaling, scaling


def parameter_count(config: ModelConfig) -> int:
    """Numero esatto di parametri, senza allocare pesi."""
    return _count(config)[0]


def hfs_parameter_count(config: ModelConfig) -> int:
    """Parametri λ aggiunti dalla variante di scaling (0 per "none")."""
    return _count(config)[1]


# ────────────────────────────────────────────────────────────────────────────────
# Layers
# ────────────────────────────────────────────────────────────────────────────────

class Conv2d:
    def __init__(self, name: str, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, stride: int = 1):
        dtype = get_default_dtype()
        std = np.sqrt(2.0 / (c_in * kernel * kernel))
        self.name = name
        self.stride = stride
        self.weight = Tensor((rng.standard_normal((c_out, c_in, kernel, kernel)) * std).astype(dtype),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        if self.stride == 2:
            return downsample(x, self.weight, self.bias)
        return conv2d(x, self.weight, self.bias)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]


class UpConv(Conv2d):
    def __call__(self, x: Tensor) -> Tensor:
        return upsample(x, self.weight, self.bias)


class GroupNorm:
    def __init__(self, name: str, channels: int, groups: int, eps: float):
        dtype = get_default_dtype()
        self.groups = default_groups(channels, groups)
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True, name=f"{name}.beta")

    def __call__(self, x: Tensor) -> Tensor:
        return group_norm(x, self.groups, self.gamma, self.beta, self.eps)

    def parameters(self) -> List[Tensor]:
        return [self.gamma, self.beta]


class HfsModule:
    def __init__(self, name: str, channels: int, config: ModelConfig, level: int):
        self.name = name
        self.params = HfsParams.create(channels, config.patch_size_at(level), config.lambda_dc_init,
                                       config.lambda_hfc_init, name=name)

    def __call__(self, x: Tensor) -> Tensor:
        return hfs_apply(x, self.params)

    def parameters(self) -> List[Tensor]:
        return [self.params.lambda_dc, self.params.lambda_hfc]


class FourierModule:
    def __init__(self, name: str, channels: int, config: ModelConfig):
        self.name = name
        self.params = FourierScaleParams.create(channels, config.fourier_tau, config.fourier_lambda_init, name=name)

    def __call__(self, x: Tensor) -> Tensor:
        return fourier_scale(x, self.params)

    def parameters(self) -> List[Tensor]:
        return [self.params.lambda_low, self.params.lambda_high]


def _scaling_module(name: str, channels: int, config: ModelConfig, level: int):
    if config.scaling_variant == "hfs":
        return HfsModule(name, channels, config, level)
    if config.scaling_variant == "fourier":
        return FourierModule(name, channels, config)
    return None


class ResidualBlock:
    """conv→[scale]→GN→GELU→conv→[scale]→GN, + skip→[scale], →GELU."""

    def __init__(self, name: str, c_in: int, c_out: int, config: ModelConfig, level: int,
                 rng: np.random.Generator):
        self.name = name
        self.c_in = c_in
        self.c_out = c_out
        self.residual = config.residual_blocks
        self.conv1 = Conv2d(f"{name}.conv1", c_in, c_out, 3, rng)
        self.norm1 = GroupNorm(f"{name}.norm1", c_out, config.norm_groups, config.norm_eps)
        self.conv2 = Conv2d(f"{name}.conv2", c_out, c_out, 3, rng)
        self.norm2 = GroupNorm(f"{name}.norm2", c_out, config.norm_groups, config.norm_eps)
        self.skip = Conv2d(f"{name}.skip", c_in, c_out, 1, rng) if self.residual and c_in != c_out else None
        self.scale1 = _scaling_module(f"{name}.scale_conv1", c_out, config, level)
        self.scale2 = _scaling_module(f"{name}.scale_conv2", c_out, config, level)
        self.scale_skip = _scaling_module(f"{name}.scale_skip", c_out, config, level) if self.residual else None

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv1(x)
        if self.scale1 is not None:
            h = self.scale1(h)
        h = gelu(self.norm1(h))
        h = self.conv2(h)
        if self.scale2 is not None:
            h = self.scale2(h)
        h = self.norm2(h)
        if not self.residual:
            return gelu(h)
        s = self.skip(x) if self.skip is not None else x
        if self.scale_skip is not None:
            s = self.scale_skip(s)
        return gelu(add(h, s))

    def layers(self):
        yield self.conv1
        if self.scale1 is not None:
            yield self.scale1
        yield self.norm1
        yield self.conv2
        if self.scale2 is not None:
            yield self.scale2
        yield self.norm2
        if self.skip is not None:
            yield self.skip
        if self.scale_skip is not None:
            yield self.scale_skip

    def scaling_modules(self):
        return [m for m in (self.scale1, self.scale2, self.scale_skip) if m is not None]


# ────────────────────────────────────────────────────────────────────────────────
# Model
# ────────────────────────────────────────────────────────────────────────────────

class ResUNet:
    """Operatore encoder–decoder; i parametri sono inizializzati in ordine di dichiarazione."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate_build()
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        widths = config.widths()
        levels = config.levels

        self.stem = Conv2d("stem", config.in_channels, widths[0], 3, rng)
        self.encoder: List[List[ResidualBlock]] = []
        self.downs: List[Conv2d] = []
        for level in range(levels):
            c = widths[level]
            self.encoder.append([
                ResidualBlock(f"enc{level}.block{i}", c, c, config, level, rng) for i in range(2)
            ])
            self.downs.append(Conv2d(f"enc{level}.down", c, widths[level + 1], 3, rng, stride=2))

        self.bottleneck = ResidualBlock("bottleneck", widths[levels], widths[levels], config, levels, rng)

        self.ups: Dict[int, UpConv] = {}
        self.decoder: Dict[int, List[ResidualBlock]] = {}
        for level in reversed(range(levels)):
            c = widths[level]
            self.ups[level] = UpConv(f"dec{level}.up", widths[level + 1], c, 3, rng)
            self.decoder[level] = [
                ResidualBlock(f"dec{level}.block0", 2 * c, c, config, level, rng),
                ResidualBlock(f"dec{level}.block1", c, c, config, level, rng),
            ]

        self.head = Conv2d("head", widths[0], config.out_channels, 1, rng)

    # parametri -----------------------------------------------------------------

    def _layers(self) -> Iterator:
        yield self.stem
        for level in range(self.config.levels):
            for block in self.encoder[level]:
                yield from block.layers()
            yield self.downs[level]
        yield from self.bottleneck.layers()
        for level in reversed(range(self.config.levels)):
            yield self.ups[level]
            for block in self.decoder[level]:
                yield from block.layers()
        yield self.head

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return [(p.name, p) for layer in self._layers() for p in layer.parameters()]

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def scaling_parameter_names(self) -> set:
        names = set()
        for _, _, module in self._scaling_sites():
            names.update(p.name for p in module.parameters())
        return names

    def scaling_parameter_count(self) -> int:
        return int(sum(p.data.size for _, _, m in self._scaling_sites() for p in m.parameters()))

    def _blocks(self) -> Iterator[Tuple[str, ResidualBlock]]:
        for level in range(self.config.levels):
            for block in self.encoder[level]:
                yield "encoder", block
        yield "encoder", self.bottleneck
        for level in reversed(range(self.config.levels)):
            for block in self.decoder[level]:
                yield "decoder", block

    def _scaling_sites(self):
        for component, block in self._blocks():
            for module in block.scaling_modules():
                yield component, module.name, module

    def hfs_sites(self) -> List[Tuple[str, str, HfsParams]]:
        """(componente, layer, HfsParams) in ordine encoder → decoder."""
        return [(component, name, module.params) for component, name, module in self._scaling_sites()
                if isinstance(module, HfsModule)]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = [name for name, _ in params if name not in state]
        if missing or len(state) != len(params):
            raise ShapeError("state dict incompatibile con il modello", missing=missing[:5])
        for name, p in params:
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(f"parametro {name}: shape {value.shape} != {p.shape}", name=name)
            np.copyto(p.data, value, casting="same_kind")

    # forward -------------------------------------------------------------------

    def forward(self, x: Tensor, features: Optional[Dict[Tuple[str, int], np.ndarray]] = None) -> Tensor:
        cfg = self.config
        expected = (cfg.in_channels, cfg.height, cfg.width)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"input atteso (n, {cfg.in_channels}, {cfg.height}, {cfg.width}), ricevuto {x.shape}",
                             shape=x.shape)

        h = self.stem(x)
        skips = []
        for level in range(cfg.levels):
            for block in self.encoder[level]:
                h = block(h)
            skips.append(h)
            if features is not None:
                features[("encoder", level)] = h.data.copy()
            h = self.downs[level](h)

        h = self.bottleneck(h)
        if features is not None:
            features[("bottleneck", cfg.levels)] = h.data.copy()

        for level in reversed(range(cfg.levels)):
            h = self.ups[level](h)
            h = concat_channels(h, skips[level])
            for block in self.decoder[level]:
                h = block(h)
            if features is not None:
                features[("decoder", level)] = h.data.copy()

        return self.head(h)

    __call__ = forward


# ────────────────────────────────────────────────────────────────────────────────
# Operazioni di modulo
# ────────────────────────────────────────────────────────────────────────────────

def build(config: ModelConfig, seed: int = 0) -> ResUNet:
    """Costruisce il modello e verifica i conteggi analitici e il budget HFS."""
    try:
        model = ResUNet(config, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    actual = model.parameter_count()
    expected = parameter_count(config)
    if actual != expected:
        raise ValidationError(f"conteggio parametri {actual} != analitico {expected}",
                              actual=actual, expected=expected)
    scaling = model.scaling_parameter_count()
    overhead = scaling / actual
    if config.max_hfs_overhead is not None and overhead >= config.max_hfs_overhead:
        raise ConfigError(
            f"overhead parametri di scaling {overhead:.5%} oltre il limite {config.max_hfs_overhead:.3%}",
            overhead=overhead,
        )
    if config.scaling_variant != "none" and overhead >= HFS_OVERHEAD_LIMIT:
        warning("overhead di scaling sopra 0.1% a questa scala", overhead=round(overhead, 6),
                parameters=actual)

    info("model_built", parameters=actual, hfs_parameters=scaling, overhead=round(overhead, 6),
         variant=config.scaling_variant, residual=config.residual_blocks, seed=seed)
    return model


def forward(model: ResUNet, x: Tensor) -> Tensor:
    return model.forward(x)


def rollout(model, initial_history: np.ndarray, steps: int) -> np.ndarray:
    """
    Rollout autoregressivo: ogni blocco di k predizioni scorre dentro la storia.

    Vale per il layout a sola storia (in_channels ≥ out_channels).
    """
    cfg = model.config
    k = cfg.out_channels
    if steps <= 0 or steps % k:
        raise ValidationError(f"steps={steps} non multiplo di k={k}", steps=steps, k=k)
    if cfg.in_channels < k:
        raise ValidationError("rollout richiede in_channels ≥ out_channels")

    history = np.asarray(initial_history)
    predictions = []
    for _ in range(steps // k):
        block = model.forward(Tensor(history)).data
        predictions.append(block)
        history = np.concatenate([history[:, k:], block], axis=1)
    return np.concatenate(predictions, axis=1)
