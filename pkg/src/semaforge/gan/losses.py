"""Loss terms for both translator architectures, as composable functions.

Conventions used throughout:

* L1 terms (cycle, identity) reduce with a per-element mean, so weights stay
  comparable across resolutions. The feature-matching term instead sums
  absolute differences per layer and divides by that layer's element count,
  exactly as its definition is written.
* Discriminators output per-patch probabilities in (0, 1); log terms clamp
  probabilities to [EPS, 1 - EPS] first.
* The adversarial "loss" of a (G, D) pair is reported from the
  discriminator's side, ``-E[log D(real)] - E[log(1 - D(fake))]``,
  alongside the non-saturating generator side ``-E[log D(fake)]``.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import torch
import torch.nn.functional as F

from ..errors import DomainBoundsError, ShapeMismatchError

EPS = 1e-7

Mapping = Callable[[torch.Tensor], torch.Tensor]


class AdversarialLoss(NamedTuple):
    d_loss: torch.Tensor
    g_loss: torch.Tensor


def l1_mean(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean absolute per-element difference."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"L1 operands disagree: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def _checked_probs(p: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        if not torch.isfinite(p).all():
            raise DomainBoundsError("discriminator output is not finite")
        lo, hi = float(p.min()), float(p.max())
    if lo < 0.0 or hi > 1.0:
        raise DomainBoundsError(f"discriminator output outside [0, 1]: min={lo:.4g} max={hi:.4g}")
    return p.clamp(EPS, 1.0 - EPS)


def cycle_consistency_loss(G: Mapping, F_: Mapping, batch_x: torch.Tensor,
                           batch_y: torch.Tensor) -> torch.Tensor:
    """Round-trip reconstruction error in both translation directions."""
    rec_x = F_(G(batch_x))
    rec_y = G(F_(batch_y))
    return l1_mean(rec_x, batch_x) + l1_mean(rec_y, batch_y)


def identity_loss(G: Mapping, F_: Mapping, batch_x: torch.Tensor,
                  batch_y: torch.Tensor) -> torch.Tensor:
    """Color-consistency term: each generator fed its *output* domain."""
    return l1_mean(F_(batch_x), batch_x) + l1_mean(G(batch_y), batch_y)


def gan_loss(D: Mapping, real: torch.Tensor, fake: torch.Tensor) -> AdversarialLoss:
    """Log-form adversarial loss of one discriminator.

    Returns the discriminator-side loss and the non-saturating
    generator-side loss.
    """
    p_real = _checked_probs(D(real))
    p_fake = _checked_probs(D(fake))
    d_loss = -(p_real.log().mean()) - ((1.0 - p_fake).log().mean())
    g_loss = -(p_fake.log().mean())
    return AdversarialLoss(d_loss, g_loss)


def lsgan_loss(D: Mapping, real: torch.Tensor, fake: torch.Tensor) -> AdversarialLoss:
    """Least-squares variant, selectable via LossWeights.adversarial="lsgan"."""
    p_real = D(real)
    p_fake = D(fake)
    d_loss = ((p_real - 1.0) ** 2).mean() + (p_fake ** 2).mean()
    g_loss = ((p_fake - 1.0) ** 2).mean()
    return AdversarialLoss(d_loss, g_loss)


def patchgan_score(D: Mapping, raster: torch.Tensor) -> torch.Tensor:
    """Average of the per-patch probability map."""
    try:
        probs = D(raster)
    except RuntimeError as exc:
        raise ShapeMismatchError(f"raster too small for discriminator: {exc}") from exc
    if probs.numel() == 0:
        raise ShapeMismatchError("discriminator produced an empty probability map")
    return probs.mean()


def cyclegan_objective(model, batch_x: torch.Tensor, batch_y: torch.Tensor):
    """Full two-direction objective; returns (total, named terms).

    Adversarial terms are reported discriminator-side so the total is the
    value of the full objective, not the generator update target; training
    recombines the same components per network (see training module).
    """
    if model.arch != "cyclegan":
        raise ShapeMismatchError(f"cyclegan_objective needs a cyclegan model, got {model.arch}")
    adv = gan_loss if model.loss_weights.adversarial == "log" else lsgan_loss
    fake_y = model.G(batch_x)
    fake_x = model.F(batch_y)
    adv_g = adv(model.D_y, batch_y, fake_y)
    adv_f = adv(model.D_x, batch_x, fake_x)
    w = model.loss_weights
    terms = {
        "gan_g": adv_g.d_loss,
        "gan_f": adv_f.d_loss,
        "gan_g_gen": adv_g.g_loss,
        "gan_f_gen": adv_f.g_loss,
        "cycle": cycle_consistency_loss(model.G, model.F, batch_x, batch_y),
        "identity": identity_loss(model.G, model.F, batch_x, batch_y),
    }
    # Accumulated in double so the total equals the weighted term sum to
    # far better than 1e-9 regardless of the input dtype.
    total = (terms["gan_g"].double() + terms["gan_f"].double()
             + w.lambda_cycle * terms["cycle"].double()
             + w.lambda_identity * terms["identity"].double())
    return total, terms


def _pad_to_multiple(x: torch.Tensor, multiple: int) -> torch.Tensor:
    h, w = x.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="reflect")
    return x


def _downsample(x: torch.Tensor, factor: int) -> torch.Tensor:
    # Area averaging; exact halving/quartering for divisible inputs.
    return F.avg_pool2d(x, kernel_size=factor, stride=factor) if factor > 1 else x


def multiscale_gan_objective(G: Mapping, Ds: Sequence[Mapping], map_batch: torch.Tensor,
                             image_batch: torch.Tensor,
                             adversarial: str = "log") -> AdversarialLoss:
    """Sum of conditional adversarial losses over the discriminator pyramid.

    D_k sees channel-concatenated (map, image) pairs downsampled by 2^k.
    Inputs not divisible by 4 are reflect-padded up front and the losses are
    computed on the padded rasters.
    """
    adv = gan_loss if adversarial == "log" else lsgan_loss
    fake = G(map_batch)
    if fake.shape[-2:] != image_batch.shape[-2:]:
        raise ShapeMismatchError(
            f"generator output {tuple(fake.shape[-2:])} does not match image {tuple(image_batch.shape[-2:])}")
    map_p = _pad_to_multiple(map_batch, 4)
    image_p = _pad_to_multiple(image_batch, 4)
    fake_p = _pad_to_multiple(fake, 4)
    d_total = None
    g_total = None
    for k, D_k in enumerate(Ds):
        factor = 2 ** k
        cond_real = torch.cat([_downsample(map_p, factor), _downsample(image_p, factor)], dim=1)
        cond_fake = torch.cat([_downsample(map_p, factor), _downsample(fake_p, factor)], dim=1)
        losses = adv(D_k, cond_real, cond_fake)
        d_total = losses.d_loss if d_total is None else d_total + losses.d_loss
        g_total = losses.g_loss if g_total is None else g_total + losses.g_loss
    return AdversarialLoss(d_total, g_total)


def feature_matching_loss(G: Mapping, D_k, map_batch: torch.Tensor,
                          real_batch: torch.Tensor) -> torch.Tensor:
    """L1 distance between discriminator taps of real and generated images.

    Per tap the absolute differences are summed and divided by the tap's
    per-sample element count, then averaged over the batch; taps are summed.
    ``D_k`` must expose ``features(x) -> list[Tensor]`` over the
    channel-concatenated conditional input.
    """
    fake = G(map_batch)
    cond_real = torch.cat([map_batch, real_batch], dim=1)
    cond_fake = torch.cat([map_batch, fake], dim=1)
    taps_real = D_k.features(cond_real)
    taps_fake = D_k.features(cond_fake)
    if len(taps_real) != len(taps_fake):
        raise ShapeMismatchError("discriminator tap counts differ between real and fake passes")
    total = None
    for t_real, t_fake in zip(taps_real, taps_fake):
        if t_real.shape != t_fake.shape:
            raise ShapeMismatchError(
                f"tap shapes differ: {tuple(t_real.shape)} vs {tuple(t_fake.shape)}")
        batch = t_real.shape[0]
        n_elements = t_real[0].numel()
        per_sample = (t_real - t_fake).abs().reshape(batch, -1).sum(dim=1) / n_elements
        term = per_sample.mean()
        total = term if total is None else total + term
    if total is None:
        raise ShapeMismatchError("discriminator exposed no feature taps")
    return total


def pix2pixhd_objective(model, map_batch: torch.Tensor, image_batch: torch.Tensor):
    """Generator-side multiscale objective plus weighted feature matching.

    Returns (total, terms) where total = adv + lambda_fm * fm; the
    discriminator-side sum is reported in terms for logging.
    """
    if model.arch != "pix2pixhd":
        raise ShapeMismatchError(f"pix2pixhd_objective needs a pix2pixhd model, got {model.arch}")
    adv = multiscale_gan_objective(model.G, model.Ds, map_batch, image_batch,
                                   adversarial=model.loss_weights.adversarial)
    fm = None
    fake = None
    map_p = _pad_to_multiple(map_batch, 4)
    image_p = _pad_to_multiple(image_batch, 4)
    for k, D_k in enumerate(model.Ds):
        factor = 2 ** k

        def G_at_scale(m, _factor=factor):
            nonlocal fake
            if fake is None:
                fake = model.G(map_batch)
            return _downsample(_pad_to_multiple(fake, 4), _factor)

        term = feature_matching_loss(G_at_scale, D_k,
                                     _downsample(map_p, factor),
                                     _downsample(image_p, factor))
        fm = term if fm is None else fm + term
    terms = {"adv": adv.g_loss, "adv_d": adv.d_loss, "fm": fm}
    total = adv.g_loss.double() + model.loss_weights.lambda_fm * fm.double()
    return total, terms
