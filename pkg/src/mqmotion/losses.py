"""Composite task losses and the adversarial terms.

The composite loss sums three mean-squared joint errors: prediction over
the future window, masked reconstruction over exactly the joint-frames
that contained a masked scalar, and denoising reconstruction over every
in-window token. The adversarial part is a WGAN with gradient penalty,
evaluated by two critics (single-frame fidelity and consecutive-pair
continuity) whose losses are summed.

All loss functions return engine Tensors so they are differentiable; use
LossReport / make_report for plain-float bookkeeping.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import streams
from .autodiff import Tensor
from .errors import DimsMismatch, MaskTermSkipped, NumericalInstability


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights: mask/denoise alphas, composite/adversarial betas, gp lambda."""

    alpha1: float = 1.0
    alpha2: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.1
    gp_lambda: float = 10.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta1", "beta2", "gp_lambda"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a finite non-negative real, got {v}")


@dataclass(frozen=True)
class LossReport:
    """Per-step scalar losses; the identities between fields are exact."""

    l_pred: float
    l_mask: float
    l_denoise: float
    l_composite: float
    l_adv: float
    gp_term: float
    l_total: float

    FIELDS = ("l_pred", "l_mask", "l_denoise", "l_composite", "l_adv", "gp_term", "l_total")


def _squared_joint_error(a: Tensor, b: Tensor) -> Tensor:
    """||a - b||^2 per joint: (..., J, 3) -> (..., J)."""
    d = ad.sub(a, b)
    return ad.tsum(ad.mul(d, d), axis=-1)


def prediction_loss(pred, target) -> Tensor:
    """Mean squared joint error over the future window (and batch)."""
    pred, target = ad.as_tensor(pred), ad.as_tensor(target)
    if pred.shape != target.shape:
        raise DimsMismatch(f"pred {pred.shape} vs target {target.shape}")
    return ad.tmean(_squared_joint_error(pred, target))


def masked_reconstruction_loss(recon, target, token_mask) -> Tensor:
    """Mean squared joint error over masked joint-frames only.

    token_mask is a boolean (B, T, J) array flagging tokens that contained
    at least one masked scalar. When nothing was masked the term is zero
    and a MaskTermSkipped warning is emitted (disappearing silently would
    hide a misconfigured mask probability).
    """
    recon, target = ad.as_tensor(recon), ad.as_tensor(target)
    if recon.shape != target.shape:
        raise DimsMismatch(f"recon {recon.shape} vs target {target.shape}")
    flags = np.asarray(token_mask, dtype=np.bool_)
    if flags.shape != recon.shape[:-1]:
        raise DimsMismatch(f"token mask {flags.shape} vs tokens {recon.shape[:-1]}")
    count = int(flags.sum())
    if count == 0:
        warnings.warn("no scalar masked this step; mask loss is 0", MaskTermSkipped, stacklevel=2)
        return Tensor(0.0)
    err = _squared_joint_error(recon, target)
    sel = Tensor(flags.astype(np.float64))
    return ad.div(ad.tsum(ad.mul(err, sel)), float(count))


def denoise_reconstruction_loss(recon, target) -> Tensor:
    """Mean squared joint error over every in-window token."""
    recon, target = ad.as_tensor(recon), ad.as_tensor(target)
    if recon.shape != target.shape:
        raise DimsMismatch(f"recon {recon.shape} vs target {target.shape}")
    return ad.tmean(_squared_joint_error(recon, target))


def loss_composite(l_pred: Tensor, l_mask: Tensor, l_denoise: Tensor, w: LossWeights) -> Tensor:
    return ad.add(l_pred, ad.add(ad.mul(w.alpha1, l_mask), ad.mul(w.alpha2, l_denoise)))


def loss_total(l_composite: Tensor, l_adv: Tensor, w: LossWeights) -> Tensor:
    """Generator objective: beta1 * composite + beta2 * adversarial."""
    return ad.add(ad.mul(w.beta1, l_composite), ad.mul(w.beta2, l_adv))


def interpolate_samples(real, fake, rng_seed: int) -> tuple[Tensor, np.ndarray]:
    """Per-sample straight-line interpolates between real and fake rows.

    One epsilon ~ U[0,1] per sample row, broadcast across features:
    x_hat = eps * real + (1 - eps) * fake. Returns the interpolates as a
    leaf tensor requiring grad, plus the epsilons used.
    """
    real_a = real.data if isinstance(real, Tensor) else np.asarray(real, dtype=np.float64)
    fake_a = fake.data if isinstance(fake, Tensor) else np.asarray(fake, dtype=np.float64)
    if real_a.shape != fake_a.shape:
        raise DimsMismatch(f"real {real_a.shape} vs fake {fake_a.shape}")
    if real_a.ndim != 2:
        raise DimsMismatch(f"expected (N, features) rows, got {real_a.shape}")
    eps = streams.stream(rng_seed, streams.INTERP).random((real_a.shape[0], 1))
    x_hat = eps * real_a + (1.0 - eps) * fake_a
    return Tensor(x_hat, requires_grad=True), eps


def gradient_penalty(critic_fn, x_hat: Tensor, gp_lambda: float) -> Tensor:
    """lambda * E[(||grad_x critic(x)|| - 1)^2] at the given points.

    The input gradient is built with create_graph=True, so the returned
    scalar can be differentiated with respect to the critic parameters.
    """
    scores = critic_fn(x_hat)
    if scores.ndim != 1:
        raise DimsMismatch(f"critic must return (N,) scores, got {scores.shape}")
    g = ad.grad(ad.tsum(scores), [x_hat], create_graph=True)[0]
    if not np.isfinite(g.data).all():
        raise NumericalInstability("non-finite critic input gradient in penalty term")
    norms = ad.sqrt(ad.tsum(ad.mul(g, g), axis=1))
    shifted = ad.sub(norms, 1.0)
    return ad.mul(gp_lambda, ad.tmean(ad.mul(shifted, shifted)))


def loss_adversarial(critic_fn, real, fake, gp_lambda: float, rng_seed: int):
    """WGAN-GP terms for one critic.

    Returns (critic_loss, gp_term, gen_term):
      critic_loss = E[D(fake)] - E[D(real)] + gp_term   (critic minimizes)
      gen_term    = -E[D(fake)]                         (generator minimizes)
    The caller detaches fake for critic updates; for generator updates the
    gen_term keeps the graph back into the generator.
    """
    real_t, fake_t = ad.as_tensor(real), ad.as_tensor(fake)
    x_hat, _ = interpolate_samples(real_t, fake_t, rng_seed)
    gp = gradient_penalty(critic_fn, x_hat, gp_lambda)
    score_fake = ad.tmean(critic_fn(fake_t))
    score_real = ad.tmean(critic_fn(real_t))
    critic_loss = ad.add(ad.sub(score_fake, score_real), gp)
    gen_term = ad.neg(score_fake)
    for name, t in (("critic", critic_loss), ("penalty", gp)):
        if not np.isfinite(t.data).all():
            raise NumericalInstability(f"non-finite {name} loss")
    return critic_loss, gp, gen_term


def make_report(
    l_pred: float,
    l_mask: float,
    l_denoise: float,
    l_adv: float,
    gp_term: float,
    w: LossWeights,
) -> LossReport:
    """Assemble a LossReport; composite/total follow from the parts exactly."""
    l_composite = l_pred + w.alpha1 * l_mask + w.alpha2 * l_denoise
    l_total = w.beta1 * l_composite + w.beta2 * l_adv
    return LossReport(
        l_pred=l_pred,
        l_mask=l_mask,
        l_denoise=l_denoise,
        l_composite=l_composite,
        l_adv=l_adv,
        gp_term=gp_term,
        l_total=l_total,
    )
