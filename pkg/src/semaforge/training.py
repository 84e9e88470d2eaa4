"""Fine-tuning loops that memorize map/image correspondence.

Training deliberately overfits: the stop criterion is the mean SSIM between
each training image and the generator's output for its own map. CycleGAN
trains both directions with its full objective; pix2pixHD supports both
one-shot joint training and the staged global / enhancer / joint schedule.
"""

from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import PairedSample
from .errors import ConfigError, DivergenceError, DomainBoundsError, EmptyDatasetError
from .gan.losses import (EPS, cycle_consistency_loss, cyclegan_objective,
                         feature_matching_loss, gan_loss, identity_loss,
                         lsgan_loss, _downsample, _pad_to_multiple,
                         pix2pixhd_objective)
from .gan.model import TranslatorModel, save_checkpoint
from .metrics import ssim
from .raster import ImageTile, SemanticMap

log = logging.getLogger(__name__)

STAGES = ("global-only", "local-only", "joint", "single")
PIX2PIXHD_STAGE_ORDER = ("global-only", "local-only", "joint")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1
    learning_rate: float = 2e-4
    seed: int = 0
    stage: str = "single"
    memorization_target: float = 0.6  # mean train-pair SSIM that stops training
    checkpoint_every: int = 0  # 0: only final checkpoint
    out_dir: str | None = None

    def __post_init__(self):
        if not 0.0 < self.memorization_target <= 1.0:
            raise ConfigError("memorization_target must be in (0, 1]")
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}")


@dataclass
class TrainReport:
    history: list[dict] = field(default_factory=list)  # per-epoch loss terms
    final_ssim: float = 0.0
    wall_clock: float = 0.0
    checkpoint_paths: list[str] = field(default_factory=list)
    stage_boundaries: list[tuple[str, int]] = field(default_factory=list)
    stopped_early: bool = False
    diverged: bool = False
    final_terms: dict = field(default_factory=dict)  # objective recomputed post-training

    def to_json(self) -> dict:
        return {
            "history": self.history,
            "final_ssim": self.final_ssim,
            "wall_clock": self.wall_clock,
            "checkpoint_paths": self.checkpoint_paths,
            "stage_boundaries": [list(b) for b in self.stage_boundaries],
            "stopped_early": self.stopped_early,
            "diverged": self.diverged,
            "final_terms": self.final_terms,
        }


def _encode_pairs(model: TranslatorModel, data: list[PairedSample]):
    xs = torch.cat([model.map_to_tensor(s.map) for s in data])
    ys = torch.cat([model.image_to_tensor(s.image) for s in data])
    return xs, ys


def _generator_side(D, fake, adversarial: str) -> torch.Tensor:
    if adversarial == "lsgan":
        return ((D(fake) - 1.0) ** 2).mean()
    return -(D(fake).clamp(EPS, 1.0 - EPS).log().mean())


def _d_side(D, real, fake, adversarial: str) -> torch.Tensor:
    loss = gan_loss if adversarial == "log" else lsgan_loss
    return loss(D, real, fake.detach()).d_loss


def _check_finite(*losses):
    for loss in losses:
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss {float(loss)!r}")


def _cyclegan_step(model, opt_g, opt_d, x, y) -> dict[str, float]:
    w = model.loss_weights
    fake_y = model.G(x)
    fake_x = model.F(y)

    opt_d.zero_grad()
    d_loss = (_d_side(model.D_y, y, fake_y, w.adversarial)
              + _d_side(model.D_x, x, fake_x, w.adversarial))
    _check_finite(d_loss)
    d_loss.backward()
    opt_d.step()

    opt_g.zero_grad()
    adv = (_generator_side(model.D_y, fake_y, w.adversarial)
           + _generator_side(model.D_x, fake_x, w.adversarial))
    cyc = cycle_consistency_loss(model.G, model.F, x, y)
    ident = identity_loss(model.G, model.F, x, y)
    g_loss = adv + w.lambda_cycle * cyc + w.lambda_identity * ident
    _check_finite(g_loss)
    g_loss.backward()
    opt_g.step()

    adv_v, cyc_v, id_v = float(adv.detach()), float(cyc.detach()), float(ident.detach())
    return {"d": float(d_loss.detach()), "adv": adv_v, "cycle": cyc_v, "identity": id_v,
            "total": adv_v + w.lambda_cycle * cyc_v + w.lambda_identity * id_v}


def _pix2pixhd_step(model, opt_g, opt_d, x, y, generator_fn) -> dict[str, float]:
    w = model.loss_weights
    fake = generator_fn(x)
    x_p, y_p, fake_p = (_pad_to_multiple(t, 4) for t in (x, y, fake))

    opt_d.zero_grad()
    d_loss = None
    for k, D_k in enumerate(model.Ds):
        f = 2 ** k
        cond_real = torch.cat([_downsample(x_p, f), _downsample(y_p, f)], dim=1)
        cond_fake = torch.cat([_downsample(x_p, f), _downsample(fake_p, f)], dim=1).detach()
        term = _d_side(D_k, cond_real, cond_fake, w.adversarial)
        d_loss = term if d_loss is None else d_loss + term
    _check_finite(d_loss)
    d_loss.backward()
    opt_d.step()

    opt_g.zero_grad()
    adv = None
    fm = None
    for k, D_k in enumerate(model.Ds):
        f = 2 ** k
        cond_fake = torch.cat([_downsample(x_p, f), _downsample(fake_p, f)], dim=1)
        term = _generator_side(D_k, cond_fake, w.adversarial)
        adv = term if adv is None else adv + term
        fm_term = feature_matching_loss(lambda m, _f=f: _downsample(fake_p, _f), D_k,
                                        _downsample(x_p, f), _downsample(y_p, f))
        fm = fm_term if fm is None else fm + fm_term
    g_loss = adv + w.lambda_fm * fm
    _check_finite(g_loss)
    g_loss.backward()
    opt_g.step()

    adv_v, fm_v = float(adv.detach()), float(fm.detach())
    return {"d": float(d_loss.detach()), "adv": adv_v, "fm": fm_v,
            "total": adv_v + w.lambda_fm * fm_v}


def _train_ssim(model, generator_fn, xs, ys) -> float:
    model.eval_mode()
    vals = []
    with torch.no_grad():
        for i in range(len(xs)):
            out = generator_fn(xs[i: i + 1])
            vals.append(ssim(out.squeeze(0).permute(1, 2, 0).numpy(),
                             ys[i].permute(1, 2, 0).numpy()))
    for m in model.modules_dict().values():
        m.train()
    return float(np.mean(vals))


def _snapshot(model) -> dict:
    return {name: copy.deepcopy(m.state_dict()) for name, m in model.modules_dict().items()}


def _restore(model, snap: dict) -> None:
    for name, m in model.modules_dict().items():
        m.load_state_dict(snap[name])


def finetune(model: TranslatorModel, data: list[PairedSample], cfg: TrainConfig,
             _report: TrainReport | None = None,
             _stage_params=None, _generator_fn=None) -> TrainReport:
    """Optimize the model's full objective on a small paired set.

    Stops after ``cfg.epochs`` or as soon as the mean train-pair SSIM
    reaches the memorization target. A non-finite loss aborts the run and
    restores the last end-of-epoch parameters.
    """
    if not data:
        raise EmptyDatasetError("finetune needs at least one pair")
    report = _report if _report is not None else TrainReport()
    start = time.time()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    xs, ys = _encode_pairs(model, data)
    if cfg.stage == "global-only":
        # Label planes downsample by nearest neighbor, images by area.
        xs = F.interpolate(xs, scale_factor=0.5, mode="nearest")
        ys = F.avg_pool2d(ys, 2)

    if _generator_fn is not None:
        generator_fn = _generator_fn
    elif model.arch == "cyclegan":
        generator_fn = model.G
    elif cfg.stage == "global-only":
        generator_fn = model.G.forward_global
    else:
        generator_fn = model.G.forward
    gen_params = _stage_params if _stage_params is not None else model.generator_parameters()
    opt_g = torch.optim.Adam(gen_params, lr=cfg.learning_rate, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(model.discriminator_parameters(), lr=cfg.learning_rate,
                             betas=(0.5, 0.999))

    for m in model.modules_dict().values():
        m.train()
    last_good = _snapshot(model)

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        epoch_terms: dict[str, list[float]] = {}
        try:
            for b0 in range(0, len(order), cfg.batch_size):
                idx = order[b0: b0 + cfg.batch_size].tolist()
                x, y = xs[idx], ys[idx]
                if model.arch == "cyclegan":
                    terms = _cyclegan_step(model, opt_g, opt_d, x, y)
                else:
                    terms = _pix2pixhd_step(model, opt_g, opt_d, x, y, generator_fn)
                for k, v in terms.items():
                    epoch_terms.setdefault(k, []).append(v)
        except (DivergenceError, DomainBoundsError) as exc:
            # Non-finite activations surface either as a divergence check or
            # as a probability-domain violation inside the adversarial loss.
            log.warning("aborting at epoch %d: %s", epoch, exc)
            _restore(model, last_good)
            report.diverged = True
            break

        last_good = _snapshot(model)
        entry = {k: float(np.mean(v)) for k, v in epoch_terms.items()}
        entry["epoch"] = len(report.history)
        entry["ssim"] = _train_ssim(model, generator_fn, xs, ys)
        report.history.append(entry)

        if cfg.out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            path = save_checkpoint(model, Path(cfg.out_dir) / f"epoch{entry['epoch']:04d}")
            report.checkpoint_paths.append(str(path))

        if entry["ssim"] >= cfg.memorization_target:
            report.stopped_early = True
            break

    report.final_ssim = _train_ssim(model, generator_fn, xs, ys)
    report.wall_clock += time.time() - start
    model.eval_mode()
    with torch.no_grad():
        if model.arch == "cyclegan":
            total, terms = cyclegan_objective(model, xs, ys)
        else:
            total, terms = pix2pixhd_objective(model, xs, ys)
        report.final_terms = {k: float(v) for k, v in terms.items()}
        report.final_terms["total"] = float(total)
    if cfg.out_dir:
        path = save_checkpoint(model, Path(cfg.out_dir) / "final")
        report.checkpoint_paths.append(str(path))
    return report


def validate_stage_sequence(cfgs: list[TrainConfig]) -> None:
    stages = tuple(c.stage for c in cfgs)
    if stages != PIX2PIXHD_STAGE_ORDER[: len(stages)] or not stages:
        raise ConfigError(
            f"pix2pixhd stages must follow {PIX2PIXHD_STAGE_ORDER}, got {stages}")


def train_staged(model: TranslatorModel, data: list[PairedSample],
                 cfgs: list[TrainConfig]) -> TrainReport:
    """pix2pixHD schedule: global stage at half resolution, enhancer with
    the global stage frozen, then joint refinement."""
    if model.arch != "pix2pixhd":
        raise ConfigError("train_staged applies to pix2pixhd models")
    validate_stage_sequence(cfgs)
    report = TrainReport()
    for cfg in cfgs:
        report.stage_boundaries.append((cfg.stage, len(report.history)))
        if cfg.stage == "global-only":
            params = list(model.G.global_net.parameters())
            gen_fn = model.G.forward_global
        elif cfg.stage == "local-only":
            params = list(model.G.enhancer.parameters())
            gen_fn = model.G.forward
            for p in model.G.global_net.parameters():
                p.requires_grad_(False)
        else:
            params = list(model.G.parameters())
            gen_fn = model.G.forward
        try:
            finetune(model, data, cfg, _report=report, _stage_params=params,
                     _generator_fn=gen_fn)
        finally:
            for p in model.G.global_net.parameters():
                p.requires_grad_(True)
    return report


def generate(model: TranslatorModel, smap: SemanticMap) -> ImageTile:
    """Deterministic inference: tampered (or original) map to image."""
    model.eval_mode()
    with torch.no_grad():
        out = model.G(model.map_to_tensor(smap))
    return model.tensor_to_image(out)


def generate_map(model: TranslatorModel, image: ImageTile) -> SemanticMap:
    """CycleGAN reverse direction: build the map from the image itself."""
    if model.F is None:
        raise ConfigError("reverse generation needs a cyclegan model")
    model.eval_mode()
    with torch.no_grad():
        out = model.F(model.image_to_tensor(image))
    return model.tensor_to_map(out)


def reverse_cycle_l1(model: TranslatorModel, smap: SemanticMap) -> float:
    """L1 of F(G(x)) vs x on the map-side rendering, for cycle checks."""
    model.eval_mode()
    with torch.no_grad():
        x = model.map_to_tensor(smap)
        err = (model.F(model.G(x)) - x).abs().mean()
    return float(err)
