"""UNet++ generator, PatchGAN discriminator and checkpoint files.

Image tensors are ``N x C x H x W`` floats in [-1, 1]; see :func:`to_tensor`
and :func:`to_image` for the mapping from 8-bit RGB.
"""

import io
import logging
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, TypeVar, Union

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)

NORMS = ("batch", "instance", "none")

CHECKPOINT_FORMAT = "tactile-maps-checkpoint"
CHECKPOINT_VERSION = 1


class ModelShapeError(ValueError):
    """Raised when a tensor violates a model's shape contract."""

    pass


class CheckpointError(Exception):
    """Raised for unreadable, foreign or incompatible checkpoint files."""

    pass


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 3
    out_channels: int = 3
    depth: int = 5
    base_channels: int = 64
    max_channels: int = 512
    nested_skips: bool = True
    norm: str = "instance"

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "depth", "base_channels", "max_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"GeneratorConfig.{name} must be >= 1")
        if self.max_channels < self.base_channels:
            raise ValueError("GeneratorConfig.max_channels must be >= base_channels")
        if self.norm not in NORMS:
            raise ValueError(f"GeneratorConfig.norm must be one of {NORMS}, got '{self.norm}'")

    def channels(self) -> List[int]:
        return [min(self.base_channels * 2**i, self.max_channels) for i in range(self.depth)]

    @property
    def size_multiple(self) -> int:
        return 2 ** (self.depth - 1)


@dataclass(frozen=True)
class DiscriminatorConfig:
    """70x70 PatchGAN by default: three stride-2 blocks, one stride-1 block, a 1-channel head."""

    in_channels: int = 6
    base_channels: int = 64
    max_channels: int = 512
    n_strided: int = 3
    kernel_size: int = 4
    norm: str = "batch"

    def __post_init__(self):
        for name in ("in_channels", "base_channels", "max_channels", "kernel_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"DiscriminatorConfig.{name} must be >= 1")
        if self.n_strided < 1:
            raise ValueError("DiscriminatorConfig.n_strided must be >= 1")
        if self.norm not in NORMS:
            raise ValueError(f"DiscriminatorConfig.norm must be one of {NORMS}, got '{self.norm}'")

    def layers(self) -> List[Tuple[int, int, int]]:
        """``(in_channels, out_channels, stride)`` of every conv, head included."""
        specs = []
        ch_in = self.in_channels
        for k in range(self.n_strided + 1):
            ch_out = min(self.base_channels * 2**k, self.max_channels)
            specs.append((ch_in, ch_out, 2 if k < self.n_strided else 1))
            ch_in = ch_out
        specs.append((ch_in, 1, 1))
        return specs


def _norm_layer(norm: str, channels: int) -> nn.Module:
    if norm == "batch":
        return nn.BatchNorm2d(channels)
    if norm == "instance":
        return nn.InstanceNorm2d(channels, affine=True)
    return nn.Identity()


# === GENERATOR ===


class ConvBlock(nn.Module):
    """Two 3x3 conv + norm + ReLU layers."""

    def __init__(self, in_ch: int, out_ch: int, norm: str = "batch"):
        super().__init__()
        bias = norm == "none"
        self.seq = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=bias),
            _norm_layer(norm, out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=bias),
            _norm_layer(norm, out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.seq(x)


class UNetPlusPlus(nn.Module):
    """UNet++ with nested dense skips and a single tanh output head.

    Node ``X(i, j)`` (level ``i``, column ``j``) consumes the up-sampled
    ``X(i+1, j-1)`` concatenated with every ``X(i, 0..j-1)``. With
    ``nested_skips=False`` only the outer diagonal exists, which is a plain
    U-Net.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channels()
        depth = cfg.depth
        self.pool = nn.MaxPool2d(2)
        self.nodes = nn.ModuleDict()
        for i in range(depth):
            in_ch = cfg.in_channels if i == 0 else ch[i - 1]
            self.nodes[self._key(i, 0)] = ConvBlock(in_ch, ch[i], cfg.norm)
        # one up-sampler per level, shared by the level's nodes
        self.ups = nn.ModuleList(
            nn.ConvTranspose2d(ch[i + 1], ch[i], 2, stride=2) for i in range(depth - 1)
        )
        for j in range(1, depth):
            for i in range(depth - j):
                if not self._exists(i, j):
                    continue
                n_skips = j if cfg.nested_skips else 1
                self.nodes[self._key(i, j)] = ConvBlock(ch[i] * (n_skips + 1), ch[i], cfg.norm)
        self.final = nn.Conv2d(ch[0], cfg.out_channels, 1)

    @staticmethod
    def _key(i: int, j: int) -> str:
        return f"x{i}_{j}"

    def _exists(self, i: int, j: int) -> bool:
        return j == 0 or self.cfg.nested_skips or i + j == self.cfg.depth - 1

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        depth = self.cfg.depth
        feats: Dict[Tuple[int, int], torch.Tensor] = {}
        for i in range(depth):
            if i > 0:
                x = self.pool(x)
            x = self.nodes[self._key(i, 0)](x)
            feats[(i, 0)] = x
        for j in range(1, depth):
            for i in range(depth - j):
                if not self._exists(i, j):
                    continue
                skips = [feats[(i, k)] for k in range(j)] if self.cfg.nested_skips else [feats[(i, 0)]]
                up = self.ups[i](feats[(i + 1, j - 1)])
                feats[(i, j)] = self.nodes[self._key(i, j)](torch.cat([*skips, up], dim=1))
        return torch.tanh(self.final(feats[(0, depth - 1)]))


# === DISCRIMINATOR ===


class PatchDiscriminator(nn.Module):
    """Conditional PatchGAN scoring ``cat(source, candidate)`` per patch (logits)."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        layers: List[nn.Module] = []
        specs = cfg.layers()
        for index, (ch_in, ch_out, stride) in enumerate(specs):
            is_head = index == len(specs) - 1
            use_norm = 0 < index and not is_head and cfg.norm != "none"
            layers.append(
                nn.Conv2d(
                    ch_in,
                    ch_out,
                    cfg.kernel_size,
                    stride=stride,
                    padding=1,
                    bias=not use_norm,
                )
            )
            if use_norm:
                layers.append(_norm_layer(cfg.norm, ch_out))
            if not is_head:
                layers.append(nn.LeakyReLU(0.2, inplace=True))
        self.model = nn.Sequential(*layers)

    def forward(self, src: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        return self.model(torch.cat([src, candidate], dim=1))


# === SHAPE CONTRACTS ===


def conv_output_size(n: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def discriminator_output_size(n: int, cfg: Optional[DiscriminatorConfig] = None) -> int:
    cfg = cfg or DiscriminatorConfig()
    for _, _, stride in cfg.layers():
        n = conv_output_size(n, cfg.kernel_size, stride, padding=1)
    return n


def check_generator_input(cfg: GeneratorConfig, x: torch.Tensor) -> None:
    if x.dim() != 4 or x.shape[1] != cfg.in_channels:
        raise ModelShapeError(
            f"Generator expects N x {cfg.in_channels} x H x W input, got {tuple(x.shape)}"
        )
    multiple = cfg.size_multiple
    h, w = x.shape[-2:]
    if h % multiple or w % multiple:
        raise ModelShapeError(
            f"Input size {h}x{w} must be divisible by 2^(depth-1) = {multiple} "
            f"for a depth-{cfg.depth} generator"
        )


def generator_forward(generator: UNetPlusPlus, src: torch.Tensor) -> torch.Tensor:
    check_generator_input(generator.cfg, src)
    return generator(src)


def discriminator_forward(
    discriminator: PatchDiscriminator, src: torch.Tensor, candidate: torch.Tensor
) -> torch.Tensor:
    if src.shape != candidate.shape:
        raise ModelShapeError(
            f"Source {tuple(src.shape)} and candidate {tuple(candidate.shape)} shapes differ"
        )
    if src.dim() != 4 or src.shape[1] * 2 != discriminator.cfg.in_channels:
        raise ModelShapeError(
            f"Discriminator expects two N x {discriminator.cfg.in_channels // 2} x H x W "
            f"inputs, got {tuple(src.shape)}"
        )
    return discriminator(src, candidate)


def build_generator(cfg: Optional[GeneratorConfig] = None) -> UNetPlusPlus:
    return UNetPlusPlus(cfg or GeneratorConfig())


def build_discriminator(cfg: Optional[DiscriminatorConfig] = None) -> PatchDiscriminator:
    return PatchDiscriminator(cfg or DiscriminatorConfig())


def count_params(model: Union[GeneratorConfig, DiscriminatorConfig, nn.Module]) -> int:
    """Exact number of trainable parameters."""
    if isinstance(model, GeneratorConfig):
        model = build_generator(model)
    elif isinstance(model, DiscriminatorConfig):
        model = build_discriminator(model)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


# === NORMALIZATION ===


def to_tensor(images: Union[np.ndarray, Sequence[np.ndarray]]) -> torch.Tensor:
    """``uint8`` RGB image(s) to an ``N x 3 x H x W`` float tensor in [-1, 1]."""
    batch = np.stack(images) if not isinstance(images, np.ndarray) else images
    if batch.ndim == 3:
        batch = batch[np.newaxis]
    if batch.dtype != np.uint8:
        raise ModelShapeError(f"Expected uint8 images, got {batch.dtype}")
    tensor = torch.from_numpy(np.ascontiguousarray(batch)).permute(0, 3, 1, 2).float()
    return tensor / 127.5 - 1.0


def to_image(tensor: torch.Tensor) -> np.ndarray:
    """Inverse of :func:`to_tensor`; returns ``H x W x 3`` for a batch of one."""
    pixels = ((tensor.detach().cpu().float() + 1.0) * 127.5).round().clamp(0, 255)
    batch = pixels.to(torch.uint8).permute(0, 2, 3, 1).numpy()
    return batch[0] if batch.shape[0] == 1 else batch


# === CHECKPOINTS ===

C = TypeVar("C", GeneratorConfig, DiscriminatorConfig)


@dataclass
class Checkpoint:
    generator_config: GeneratorConfig
    generator_state: Dict[str, torch.Tensor]
    discriminator_config: Optional[DiscriminatorConfig] = None
    discriminator_state: Optional[Dict[str, torch.Tensor]] = None
    optimizer_states: Dict[str, Any] = field(default_factory=dict)
    model_id: Optional[str] = None
    epoch: int = 0
    train_config: Dict[str, Any] = field(default_factory=dict)
    rng_state: Dict[str, Any] = field(default_factory=dict)
    created_at: str = ""
    version: int = CHECKPOINT_VERSION

    def build_generator(self, device: Union[str, torch.device] = "cpu") -> UNetPlusPlus:
        generator = build_generator(self.generator_config)
        generator.load_state_dict(self.generator_state)
        return generator.to(device).eval()

    def build_discriminator(self, device: Union[str, torch.device] = "cpu") -> PatchDiscriminator:
        if self.discriminator_config is None or self.discriminator_state is None:
            raise CheckpointError("Checkpoint holds no discriminator")
        discriminator = build_discriminator(self.discriminator_config)
        discriminator.load_state_dict(self.discriminator_state)
        return discriminator.to(device)


def _cpu_state(module: nn.Module) -> Dict[str, torch.Tensor]:
    return {k: v.detach().cpu().clone() for k, v in module.state_dict().items()}


def make_checkpoint(
    generator: UNetPlusPlus,
    discriminator: Optional[PatchDiscriminator] = None,
    optimizers: Optional[Dict[str, torch.optim.Optimizer]] = None,
    model_id: Optional[str] = None,
    epoch: int = 0,
    train_config: Optional[Dict[str, Any]] = None,
    created_at: Optional[str] = None,
    numpy_rng: Optional[np.random.Generator] = None,
) -> Checkpoint:
    rng_state: Dict[str, Any] = {"torch": torch.get_rng_state()}
    if numpy_rng is not None:
        rng_state["numpy"] = numpy_rng.bit_generator.state
    return Checkpoint(
        generator_config=generator.cfg,
        generator_state=_cpu_state(generator),
        discriminator_config=discriminator.cfg if discriminator is not None else None,
        discriminator_state=_cpu_state(discriminator) if discriminator is not None else None,
        optimizer_states={k: opt.state_dict() for k, opt in (optimizers or {}).items()},
        model_id=model_id,
        epoch=epoch,
        train_config=dict(train_config or {}),
        rng_state=rng_state,
        created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """Write ``ckpt``; equal checkpoints produce identical bytes."""
    path = Path(path)
    payload = {
        "header": {
            "format": CHECKPOINT_FORMAT,
            "version": ckpt.version,
            "created_at": ckpt.created_at,
        },
        "generator_config": asdict(ckpt.generator_config),
        "generator_state": ckpt.generator_state,
        "discriminator_config": (
            asdict(ckpt.discriminator_config) if ckpt.discriminator_config else None
        ),
        "discriminator_state": ckpt.discriminator_state,
        "optimizer_states": ckpt.optimizer_states,
        "model_id": ckpt.model_id,
        "epoch": ckpt.epoch,
        "train_config": ckpt.train_config,
        "rng_state": ckpt.rng_state,
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(buffer.getvalue())
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e
    logger.debug(f"Saved checkpoint {path} (epoch {ckpt.epoch})")
    return path


def _config_from(cls: Type[C], data: Any, what: str) -> C:
    expected = {f.name for f in fields(cls)}
    if not isinstance(data, dict) or set(data) != expected:
        got = sorted(data) if isinstance(data, dict) else type(data).__name__
        raise CheckpointError(
            f"Checkpoint {what} does not match the current schema: expected keys "
            f"{sorted(expected)}, got {got}"
        )
    try:
        return cls(**data)
    except ValueError as e:
        raise CheckpointError(f"Invalid {what} in checkpoint: {e}") from e


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(io.BytesIO(path.read_bytes()), map_location="cpu", weights_only=True)
    except Exception as e:  # torch raises a variety of unpickling errors
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    header = payload.get("header") if isinstance(payload, dict) else None
    if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a tactile-maps checkpoint")
    version = header.get("version")
    if not isinstance(version, int) or version > CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Checkpoint {path} has version {version}; this release reads up to {CHECKPOINT_VERSION}"
        )

    disc_cfg = payload.get("discriminator_config")
    return Checkpoint(
        generator_config=_config_from(GeneratorConfig, payload.get("generator_config"), "generator config"),
        generator_state=payload["generator_state"],
        discriminator_config=(
            _config_from(DiscriminatorConfig, disc_cfg, "discriminator config")
            if disc_cfg is not None
            else None
        ),
        discriminator_state=payload.get("discriminator_state"),
        optimizer_states=payload.get("optimizer_states") or {},
        model_id=payload.get("model_id"),
        epoch=int(payload.get("epoch", 0)),
        train_config=payload.get("train_config") or {},
        rng_state=payload.get("rng_state") or {},
        created_at=str(header.get("created_at", "")),
        version=version,
    )
