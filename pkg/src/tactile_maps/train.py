"""Pix2Pix training loop and inference.

The discriminator sees ``cat(source, candidate)``; both players use
BCE-on-logits and the generator adds a weighted L1 term.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from .augment import AugmentParams, PairAugmenter
from .dataset.types import MapPair
from .gan import (
    Checkpoint,
    DiscriminatorConfig,
    GeneratorConfig,
    ModelShapeError,
    build_discriminator,
    build_generator,
    check_generator_input,
    generator_forward,
    load_checkpoint,
    make_checkpoint,
    save_checkpoint,
    to_image,
    to_tensor,
)
from .metrics import MetricsError, ModelId, model_id_for_zoom_set
from .palette import ClassPalette

logger = logging.getLogger(__name__)

LOSS_FIELDS = ("g_total", "g_adv", "g_l1", "d")


class TrainError(Exception):
    """Raised when a training run cannot start or continue."""

    pass


class LossError(TrainError):
    """Raised for non-finite or mis-shaped loss inputs."""

    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 125
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_l1: float = 100.0
    seed: int = 0
    zoom_set: Tuple[int, ...] = (16,)
    # None: on for the Zoom-16/18 model only
    grey_recolor: Optional[bool] = None
    checkpoint_every: int = 25
    deterministic: bool = False
    device: str = "cpu"
    log_every: int = 50
    num_workers: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainError("epochs must be >= 1")
        if self.batch_size < 1:
            raise TrainError("batch_size must be >= 1")
        if self.lr < 0:
            raise TrainError("lr must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise TrainError("beta1 and beta2 must be in [0, 1)")
        if self.lambda_l1 < 0:
            raise TrainError("lambda_l1 must be >= 0")
        if self.checkpoint_every < 0 or self.log_every < 1 or self.num_workers < 0:
            raise TrainError("checkpoint_every and num_workers must be >= 0, log_every >= 1")
        zooms = tuple(sorted({int(z) for z in self.zoom_set}))
        object.__setattr__(self, "zoom_set", zooms)
        try:
            model_id_for_zoom_set(zooms)
        except MetricsError as e:
            raise TrainError(str(e)) from e
        if self.grey_recolor and 18 not in zooms:
            raise TrainError("grey_recolor requires zoom 18 in zoom_set")

    @property
    def model_id(self) -> ModelId:
        return model_id_for_zoom_set(self.zoom_set)

    @property
    def grey_recolor_enabled(self) -> bool:
        if self.grey_recolor is None:
            return set(self.zoom_set) == {16, 18}
        return self.grey_recolor

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["zoom_set"] = list(self.zoom_set)
        return data


# === LOSSES ===


def _check_finite(**tensors: torch.Tensor) -> None:
    for name, tensor in tensors.items():
        if not torch.isfinite(tensor).all():
            raise LossError(f"Non-finite values in {name}")


def discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    _check_finite(d_real=d_real, d_fake=d_fake)
    real = F.binary_cross_entropy_with_logits(d_real, torch.ones_like(d_real))
    fake = F.binary_cross_entropy_with_logits(d_fake, torch.zeros_like(d_fake))
    return 0.5 * (real + fake)


def generator_loss(
    d_fake: torch.Tensor, gen_out: torch.Tensor, target: torch.Tensor, lambda_l1: float
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Return ``(total, adversarial, l1)``; ``l1`` is the unweighted mean."""
    _check_finite(d_fake=d_fake, gen_out=gen_out, target=target)
    if gen_out.shape != target.shape:
        raise LossError(
            f"Generator output {tuple(gen_out.shape)} and target {tuple(target.shape)} differ"
        )
    if lambda_l1 < 0:
        raise LossError("lambda_l1 must be >= 0")
    adv = F.binary_cross_entropy_with_logits(d_fake, torch.ones_like(d_fake))
    l1 = (gen_out - target).abs().mean()
    return adv + lambda_l1 * l1, adv, l1


def pix2pix_loss(
    d_real: torch.Tensor,
    d_fake: torch.Tensor,
    gen_out: torch.Tensor,
    target: torch.Tensor,
    lambda_l1: float = 100.0,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Return ``(g_loss, d_loss)``."""
    g_loss, _, _ = generator_loss(d_fake, gen_out, target, lambda_l1)
    return g_loss, discriminator_loss(d_real, d_fake)


# === TRAINING ===


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    step: int
    g_total: float
    g_adv: float
    g_l1: float
    d: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainRun:
    model_id: ModelId
    losses: List[LossRecord] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)
    manifest_hash: Optional[str] = None
    grey_recolor_applied: int = 0

    def curve(self, name: str) -> List[float]:
        if name not in LOSS_FIELDS:
            raise KeyError(f"Unknown loss '{name}', expected one of {LOSS_FIELDS}")
        return [getattr(r, name) for r in self.losses]

    def epoch_means(self, name: str) -> List[float]:
        by_epoch: Dict[int, List[float]] = {}
        for record in self.losses:
            by_epoch.setdefault(record.epoch, []).append(getattr(record, name))
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]

    @property
    def last_checkpoint(self) -> Optional[Path]:
        return self.checkpoints[-1] if self.checkpoints else None


def checkpoint_name(model_id: ModelId, epoch: int) -> str:
    slug = model_id.value.lower().replace("/", "-")
    return f"{slug}-epoch{epoch:04d}.ckpt"


class Pix2PixTrainer:
    """Owns the two networks, their optimizers and the augmentation stream.

    Parameter updates are strictly sequential: one discriminator step, then
    one generator step per batch. Augmentation of a batch may run on
    ``num_workers`` threads.
    """

    def __init__(
        self,
        cfg: TrainConfig,
        generator_config: Optional[GeneratorConfig] = None,
        discriminator_config: Optional[DiscriminatorConfig] = None,
        augment_params: Optional[AugmentParams] = None,
        palette: Optional[ClassPalette] = None,
        checkpoint_dir: Optional[Union[str, Path]] = None,
        created_at: Optional[str] = None,
    ):
        self.cfg = cfg
        self.device = torch.device(cfg.device)
        if cfg.deterministic:
            torch.use_deterministic_algorithms(True)
        torch.manual_seed(cfg.seed)
        self.generator = build_generator(generator_config).to(self.device)
        self.discriminator = build_discriminator(discriminator_config).to(self.device)
        betas = (cfg.beta1, cfg.beta2)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=cfg.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=cfg.lr, betas=betas)
        self.augmenter = (
            PairAugmenter(augment_params, cfg.grey_recolor_enabled, palette)
            if augment_params is not None
            else None
        )
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
        self.created_at = created_at
        self.order_rng = np.random.default_rng(cfg.seed)
        self.epoch = 0

    @property
    def grey_recolor_applied(self) -> int:
        return self.augmenter.grey_recolor_applied if self.augmenter else 0

    def check_pairs(self, pairs: Sequence[MapPair]) -> None:
        if not pairs:
            raise TrainError("Training set is empty")
        zooms = {p.zoom for p in pairs}
        missing = set(self.cfg.zoom_set) - zooms
        extra = zooms - set(self.cfg.zoom_set)
        if missing or extra:
            raise TrainError(
                f"Training pairs have zooms {sorted(zooms)}, but the {self.cfg.model_id.value} "
                f"model trains on exactly {list(self.cfg.zoom_set)}"
            )
        sizes = {p.size for p in pairs}
        if len(sizes) != 1:
            raise TrainError(f"Training pairs have mixed sizes {sorted(sizes)}")
        sample = torch.zeros(1, 3, pairs[0].size, pairs[0].size)
        try:
            check_generator_input(self.generator.cfg, sample)
        except ModelShapeError as e:
            raise TrainError(str(e)) from e

    def _prepare(self, pairs: Sequence[MapPair], indices: Sequence[int]) -> List[MapPair]:
        if self.augmenter is None:
            return [pairs[i] for i in indices]
        augmenter, epoch = self.augmenter, self.epoch
        if self.cfg.num_workers:
            with ThreadPoolExecutor(max_workers=self.cfg.num_workers) as pool:
                return list(pool.map(lambda i: augmenter(pairs[i], epoch, i), indices))
        return [augmenter(pairs[i], epoch, i) for i in indices]

    def batches(self, pairs: Sequence[MapPair]) -> Iterator[Tuple[torch.Tensor, torch.Tensor]]:
        """Shuffled ``(source, target)`` batches for the current epoch."""
        order = self.order_rng.permutation(len(pairs))
        size = self.cfg.batch_size
        for start in range(0, len(order), size):
            batch = self._prepare(pairs, [int(i) for i in order[start : start + size]])
            src = to_tensor([p.source for p in batch]).to(self.device)
            tgt = to_tensor([p.tactile for p in batch]).to(self.device)
            yield src, tgt

    def train_step(self, src: torch.Tensor, tgt: torch.Tensor) -> Dict[str, float]:
        self.generator.train()
        self.discriminator.train()
        fake = self.generator(src)

        d_loss = discriminator_loss(self.discriminator(src, tgt), self.discriminator(src, fake.detach()))
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        g_total, g_adv, g_l1 = generator_loss(
            self.discriminator(src, fake), fake, tgt, self.cfg.lambda_l1
        )
        self.opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        self.opt_g.step()

        return {
            "g_total": g_total.item(),
            "g_adv": g_adv.item(),
            "g_l1": g_l1.item(),
            "d": d_loss.item(),
        }

    def checkpoint(self) -> Checkpoint:
        return make_checkpoint(
            self.generator,
            self.discriminator,
            optimizers={"generator": self.opt_g, "discriminator": self.opt_d},
            model_id=self.cfg.model_id.value,
            epoch=self.epoch,
            train_config=self.cfg.to_dict(),
            created_at=self.created_at,
            numpy_rng=self.order_rng,
        )

    def save(self) -> Path:
        if self.checkpoint_dir is None:
            raise TrainError("No checkpoint directory configured")
        path = self.checkpoint_dir / checkpoint_name(self.cfg.model_id, self.epoch)
        return save_checkpoint(self.checkpoint(), path)

    def fit(
        self,
        pairs: Sequence[MapPair],
        loss_log: Optional[Union[str, Path]] = None,
        manifest_hash: Optional[str] = None,
    ) -> TrainRun:
        self.check_pairs(pairs)
        run = TrainRun(model_id=self.cfg.model_id, manifest_hash=manifest_hash)
        log_file = None
        if loss_log is not None:
            Path(loss_log).parent.mkdir(parents=True, exist_ok=True)
            log_file = open(loss_log, "w", encoding="utf-8")

        logger.info(
            f"Training {run.model_id.value} on {len(pairs)} pairs for {self.cfg.epochs} epochs "
            f"(batch {self.cfg.batch_size}, grey recolor {'on' if self.cfg.grey_recolor_enabled else 'off'})"
        )
        try:
            step = 0
            for epoch in range(1, self.cfg.epochs + 1):
                self.epoch = epoch
                for src, tgt in self.batches(pairs):
                    step += 1
                    record = LossRecord(epoch=epoch, step=step, **self.train_step(src, tgt))
                    run.losses.append(record)
                    if log_file is not None:
                        log_file.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                    if step % self.cfg.log_every == 0:
                        logger.info(
                            f"epoch {epoch} step {step}: G {record.g_total:.4f} "
                            f"(adv {record.g_adv:.4f}, L1 {record.g_l1:.4f}) D {record.d:.4f}"
                        )
                due = self.cfg.checkpoint_every and epoch % self.cfg.checkpoint_every == 0
                if self.checkpoint_dir is not None and (due or epoch == self.cfg.epochs):
                    run.checkpoints.append(self.save())
        finally:
            if log_file is not None:
                log_file.close()

        run.grey_recolor_applied = self.grey_recolor_applied
        logger.info(
            f"Finished {run.model_id.value}: {len(run.losses)} steps, "
            f"{len(run.checkpoints)} checkpoints, grey recolor applied {run.grey_recolor_applied}x"
        )
        return run


def train(
    cfg: TrainConfig,
    train_pairs: Sequence[MapPair],
    augment_params: Optional[AugmentParams] = None,
    generator_config: Optional[GeneratorConfig] = None,
    discriminator_config: Optional[DiscriminatorConfig] = None,
    out_dir: Optional[Union[str, Path]] = None,
    manifest_hash: Optional[str] = None,
    palette: Optional[ClassPalette] = None,
) -> TrainRun:
    """Train one model; with ``out_dir`` checkpoints and a loss log are written there."""
    out = Path(out_dir) if out_dir is not None else None
    trainer = Pix2PixTrainer(
        cfg,
        generator_config=generator_config,
        discriminator_config=discriminator_config,
        augment_params=augment_params,
        palette=palette,
        checkpoint_dir=out / "checkpoints" if out is not None else None,
    )
    loss_log = None
    if out is not None:
        slug = cfg.model_id.value.lower().replace("/", "-")
        loss_log = out / "metrics" / f"losses-{slug}.jsonl"
    return trainer.fit(train_pairs, loss_log=loss_log, manifest_hash=manifest_hash)


# === INFERENCE ===


def _generator_from(checkpoint: Union[str, Path, Checkpoint], device: str):
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    return ckpt.build_generator(device)


def infer_batch(
    checkpoint: Union[str, Path, Checkpoint],
    images: Sequence[np.ndarray],
    device: str = "cpu",
    batch_size: int = 4,
) -> List[np.ndarray]:
    """Translate source images to tactile RGB images, in input order."""
    generator = _generator_from(checkpoint, device)
    outputs: List[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            chunk = to_tensor(list(images[start : start + batch_size])).to(device)
            result = to_image(generator_forward(generator, chunk))
            outputs.extend([result] if result.ndim == 3 else list(result))
    return outputs


def infer(
    checkpoint: Union[str, Path, Checkpoint], src: np.ndarray, device: str = "cpu"
) -> np.ndarray:
    return infer_batch(checkpoint, [src], device=device)[0]
