"""Training objectives for ground-truth-free restoration.

All losses are per-element means over the measurement (fidelity terms) or the
restoration (consistency terms), which keeps the trade-off weight and learning
rate scale-free across image sizes. The divergence entering the unbiased-risk
fidelity terms is estimated with a randomized probe
b'(H f(y + tau*b) - H f(y)) / (tau * n), b ~ N(0, I).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .core import RandomSource
from .errors import DomainError, SpecError
from .physics import NoiseModel, corrupt
from .transforms import GroupAction, act

FIDELITY_TERMS = ("mc", "sure")
EQUIVARIANCE_TERMS = ("ec", "rec")


@dataclass(frozen=True)
class LossSpec:
    """Declarative description of the training objective.

    ``terms`` picks at most one fidelity term (mc | sure) and at most one
    consistency term (ec | rec); ``alpha`` weights the consistency term;
    ``sigma`` / ``gain`` describe the (known) measurement noise; ``tau`` is
    the divergence probe step and ``probe_count`` the number of Monte-Carlo
    probes averaged per evaluation.
    """

    terms: tuple[str, ...] = ("sure", "rec")
    alpha: float = 1.0
    sigma: float = 0.0
    tau: float = 0.01
    noise_kind: str = "gaussian"
    gain: float = 0.0
    probe_count: int = 1
    stop_gradient: bool = False

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        unknown = [t for t in terms if t not in FIDELITY_TERMS + EQUIVARIANCE_TERMS]
        if unknown:
            raise SpecError(f"unknown loss terms {unknown}")
        if not terms:
            raise SpecError("at least one loss term is required")
        if "mc" in terms and "sure" in terms:
            raise SpecError("mc and sure are mutually exclusive")
        if "ec" in terms and "rec" in terms:
            raise SpecError("ec and rec are mutually exclusive")
        if not (self.alpha >= 0 and self.alpha == self.alpha):
            raise SpecError("alpha must be finite and >= 0")
        if self.tau <= 0:
            raise SpecError("tau must be > 0")
        if self.probe_count < 1:
            raise SpecError("probe_count must be >= 1")
        if self.noise_kind not in ("gaussian", "poisson", "mixed"):
            raise SpecError(f"unknown noise kind {self.noise_kind!r}")

    @property
    def fidelity(self) -> str | None:
        for t in self.terms:
            if t in FIDELITY_TERMS:
                return t
        return None

    @property
    def equivariance(self) -> str | None:
        for t in self.terms:
            if t in EQUIVARIANCE_TERMS:
                return t
        return None

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise_kind, sigma=self.sigma, gain=self.gain)


def _mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((a - b) ** 2).mean()


def _generator(rng: RandomSource | torch.Generator | None) -> torch.Generator:
    if rng is None:
        raise SpecError("this loss term draws random probes and needs an rng")
    return rng.torch_generator() if isinstance(rng, RandomSource) else rng


def loss_mc(f, operator, y: torch.Tensor, f_y: torch.Tensor | None = None) -> torch.Tensor:
    """Measurement consistency: mean((H f(y) - y)^2)."""
    if f_y is None:
        f_y = f(y)
    return _mse(operator.apply(f_y), y)


def monte_carlo_divergence(
    f, operator, y: torch.Tensor, tau: float,
    generator: torch.Generator, probes: int = 1,
    weight: torch.Tensor | None = None,
    hf_y: torch.Tensor | None = None,
) -> torch.Tensor:
    """Per-element randomized estimate of sum_i w_i d(Hf)_i/dy_i / n.

    With ``weight`` omitted, w = 1 and the value estimates div(H o f) / n.
    """
    if hf_y is None:
        hf_y = operator.apply(f(y))
    n = y.numel()
    total = y.new_zeros(())
    for _ in range(probes):
        b = torch.randn(y.shape, generator=generator, dtype=y.dtype, device=y.device)
        delta = operator.apply(f(y + tau * b)) - hf_y
        probe = b if weight is None else b * weight
        total = total + (probe * delta).sum() / (tau * n)
    return total / probes


def loss_sure_gaussian(
    f, operator, y: torch.Tensor, sigma: float, tau: float,
    rng: RandomSource | torch.Generator, probes: int = 1,
    f_y: torch.Tensor | None = None,
) -> torch.Tensor:
    """Unbiased estimate of the clean-measurement MSE under Gaussian noise.

    mean((y - H f(y))^2) - sigma^2 + (2 sigma^2 / (tau n)) b'(H f(y+tau b) - H f(y)).
    With sigma = 0 this is exactly the measurement-consistency loss.
    """
    if f_y is None:
        f_y = f(y)
    hf_y = operator.apply(f_y)
    residual = _mse(hf_y, y)
    if sigma == 0:
        return residual
    div = monte_carlo_divergence(f, operator, y, tau, _generator(rng), probes,
                                 hf_y=hf_y)
    return residual - sigma ** 2 + 2.0 * sigma ** 2 * div


def loss_sure_poisson(
    f, operator, y: torch.Tensor, gain: float, tau: float,
    rng: RandomSource | torch.Generator, probes: int = 1,
    f_y: torch.Tensor | None = None,
) -> torch.Tensor:
    """Unbiased risk estimate under Poisson noise y = gain * Poisson(Hx / gain)."""
    return loss_sure_mixed(f, operator, y, gain, 0.0, tau, rng, probes, f_y)


def loss_sure_mixed(
    f, operator, y: torch.Tensor, gain: float, sigma: float, tau: float,
    rng: RandomSource | torch.Generator, probes: int = 1,
    f_y: torch.Tensor | None = None,
) -> torch.Tensor:
    """Unbiased risk estimate under mixed Poisson-Gaussian noise.

    mean((y - H f(y))^2) - gain * mean(y) - sigma^2
      + (2 / (tau n)) ((gain y + sigma^2) b)'(H f(y+tau b) - H f(y)).

    gain -> 0 recovers the Gaussian form; sigma = 0 the pure-Poisson form;
    both zero recover measurement consistency exactly.
    """
    if gain < 0 or sigma < 0:
        raise SpecError("gain and sigma must be >= 0")
    if gain > 0 and sigma == 0 and float(y.min()) < 0:
        # a pure-Poisson measurement is gain * counts, never negative
        raise DomainError("poisson measurement must be nonnegative")
    if f_y is None:
        f_y = f(y)
    hf_y = operator.apply(f_y)
    residual = _mse(hf_y, y)
    if gain == 0 and sigma == 0:
        return residual
    weight = gain * y.detach() + sigma ** 2
    div = monte_carlo_divergence(f, operator, y, tau, _generator(rng), probes,
                                 weight=weight, hf_y=hf_y)
    return residual - gain * y.detach().mean() - sigma ** 2 + 2.0 * div


def loss_ec(
    f, operator, y: torch.Tensor, transform: GroupAction,
    f_y: torch.Tensor | None = None, stop_gradient: bool = False,
) -> torch.Tensor:
    """Equivariance consistency: mean((T f(y) - f(H T f(y)))^2).

    Gradients flow through both branches unless ``stop_gradient`` detaches
    the transformed target.
    """
    if f_y is None:
        f_y = f(y)
    target = act(transform, f_y)
    if stop_gradient:
        target = target.detach()
    return _mse(target, f(operator.apply(target)))


def loss_rec(
    f, operator, y: torch.Tensor, transform: GroupAction, noise: NoiseModel,
    rng: RandomSource | torch.Generator,
    f_y: torch.Tensor | None = None, stop_gradient: bool = False,
) -> torch.Tensor:
    """Robust equivariance consistency: the synthetic measurement is re-noised.

    mean((T f(y) - f(corrupt(H T f(y))))^2); with sigma = 0 Gaussian noise this
    equals the plain equivariance loss bit for bit.
    """
    if f_y is None:
        f_y = f(y)
    target = act(transform, f_y)
    if stop_gradient:
        target = target.detach()
    y_synth = corrupt(operator.apply(target), noise, _generator(rng))
    return _mse(target, f(y_synth))


@dataclass
class LossBreakdown:
    total: float
    fidelity: float
    equivariance: float
    terms: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {"total": self.total, "fidelity": self.fidelity,
                "equivariance": self.equivariance, "terms": list(self.terms)}


def loss_share(
    f, operator, y: torch.Tensor, spec: LossSpec, transform: GroupAction | None,
    probe_rng: RandomSource | torch.Generator | None = None,
    noise_rng: RandomSource | torch.Generator | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Composite objective: fidelity term + alpha * consistency term.

    Returns the scalar loss tensor and a per-term breakdown for logging;
    the breakdown satisfies fidelity + equivariance == total exactly.
    """
    f_y = f(y)

    fidelity = y.new_zeros(())
    if spec.fidelity == "mc":
        fidelity = loss_mc(f, operator, y, f_y=f_y)
    elif spec.fidelity == "sure":
        if spec.noise_kind == "gaussian":
            fidelity = loss_sure_gaussian(f, operator, y, spec.sigma, spec.tau,
                                          probe_rng, spec.probe_count, f_y=f_y)
        elif spec.noise_kind == "poisson":
            fidelity = loss_sure_poisson(f, operator, y, spec.gain, spec.tau,
                                         probe_rng, spec.probe_count, f_y=f_y)
        else:
            fidelity = loss_sure_mixed(f, operator, y, spec.gain, spec.sigma,
                                       spec.tau, probe_rng, spec.probe_count, f_y=f_y)

    equivariance = y.new_zeros(())
    if spec.alpha > 0 and spec.equivariance is not None:
        if transform is None:
            raise SpecError(f"terms {spec.terms} require a sampled group action")
        if spec.equivariance == "ec":
            equivariance = loss_ec(f, operator, y, transform, f_y=f_y,
                                   stop_gradient=spec.stop_gradient)
        elif spec.equivariance == "rec":
            equivariance = loss_rec(f, operator, y, transform, spec.noise_model(),
                                    noise_rng, f_y=f_y,
                                    stop_gradient=spec.stop_gradient)

    total = fidelity + spec.alpha * equivariance
    fid_f = float(fidelity.detach())
    eq_f = float(spec.alpha * equivariance.detach())
    breakdown = LossBreakdown(total=fid_f + eq_f, fidelity=fid_f,
                              equivariance=eq_f, terms=spec.terms)
    return total, breakdown
