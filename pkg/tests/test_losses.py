import math

import numpy as np
import pytest
import torch

from share_hsi import (
    InpaintOperator,
    LossSpec,
    NoiseModel,
    RandomSource,
    column_mask,
    loss_ec,
    loss_mc,
    loss_rec,
    loss_share,
    loss_sure_gaussian,
    loss_sure_mixed,
    loss_sure_poisson,
    monte_carlo_divergence,
)
from share_hsi.errors import SpecError
from share_hsi.transforms import GroupAction

SIGMA = 25 / 255


def identity_op(shape):
    return InpaintOperator(np.ones(shape, dtype=np.float32))


def gen(seed):
    g = torch.Generator()
    g.manual_seed(seed)
    return g


def rand(shape, seed=0, dtype=torch.float64):
    return torch.rand(shape, generator=gen(seed), dtype=dtype)


class LinearMap:
    """f(y) = A y on flattened cubes; trace and Frobenius norm are known."""

    def __init__(self, matrix: torch.Tensor, shape):
        self.matrix = matrix
        self.shape = shape

    def __call__(self, y):
        return (self.matrix @ y.flatten()).reshape(self.shape)


class TestLossSpec:
    def test_rejects_mc_and_sure(self):
        with pytest.raises(SpecError):
            LossSpec(terms=("mc", "sure"))

    def test_rejects_ec_and_rec(self):
        with pytest.raises(SpecError):
            LossSpec(terms=("ec", "rec"))

    def test_rejects_unknown(self):
        with pytest.raises(SpecError):
            LossSpec(terms=("mc", "tv"))

    def test_rejects_bad_tau(self):
        with pytest.raises(SpecError):
            LossSpec(terms=("sure",), tau=0.0)


class TestMeasurementConsistency:
    def test_pseudo_inverse_reaches_zero(self):
        op = identity_op((2, 4, 4))
        y = rand((2, 4, 4), 0)
        assert loss_mc(op.pseudo_inverse, op, y).item() == 0.0

    def test_zero_restorer_constant_half(self):
        op = identity_op((2, 4, 4))
        y = torch.full((2, 4, 4), 0.5, dtype=torch.float64)
        value = loss_mc(lambda t: torch.zeros_like(t), op, y).item()
        assert value == pytest.approx(0.25, abs=1e-12)

    def test_random_linear_matches_recomputation(self):
        shape = (2, 4, 4)
        n = 32
        op = identity_op(shape)
        A = torch.randn(n, n, generator=gen(1), dtype=torch.float64) / n
        f = LinearMap(A, shape)
        y = rand(shape, 2)
        got = loss_mc(f, op, y).item()
        want = float(((A @ y.flatten() - y.flatten()) ** 2).mean())
        assert got == pytest.approx(want, rel=1e-6)


class TestGaussianSure:
    def test_sigma_zero_equals_mc_exactly(self):
        shape = (2, 4, 4)
        op = identity_op(shape)
        A = torch.randn(32, 32, generator=gen(3), dtype=torch.float64) / 32
        f = LinearMap(A, shape)
        y = rand(shape, 4)
        sure = loss_sure_gaussian(f, op, y, sigma=0.0, tau=0.01, rng=gen(0))
        assert sure.item() == loss_mc(f, op, y).item()

    def test_identity_restorer_mean_is_sigma_squared(self):
        # residual 0, constant -sigma^2, divergence 1: expectation sigma^2
        shape = (2, 16, 16)
        op = identity_op(shape)
        y = rand(shape, 5)
        g = gen(6)
        values = [loss_sure_gaussian(lambda t: t, op, y, SIGMA, 0.01, g).item()
                  for _ in range(1000)]
        assert np.mean(values) == pytest.approx(SIGMA ** 2, rel=0.05)

    def test_divergence_recovers_trace(self):
        # f(y) = A y, H = identity: estimator mean is trace(A)/n
        shape = (2, 8, 8)
        n = 128
        diag = torch.empty(n, dtype=torch.float64).uniform_(
            0.05, 0.15, generator=gen(7))
        noise = torch.randn(n, n, generator=gen(8), dtype=torch.float64) * 0.005
        A = torch.diag(diag) + noise
        f = LinearMap(A, shape)
        op = identity_op(shape)
        y = rand(shape, 9)
        estimate = monte_carlo_divergence(f, op, y, tau=1e-4,
                                          generator=gen(10), probes=1000).item()
        target = float(diag.sum() + noise.diagonal().sum()) / n
        assert abs(estimate - target) <= 1e-3

    def test_unbiasedness_linear_closed_form(self):
        # E[sure] = ||(I-A)x||^2 / n + sigma^2 ||A||_F^2 / n, within 3 SE
        shape = (2, 4, 4)
        n = 32
        sigma = 0.1
        A = torch.randn(n, n, generator=gen(11), dtype=torch.float64) / n
        f = LinearMap(A, shape)
        op = identity_op(shape)
        x = rand(shape, 12).flatten()
        closed = float(((torch.eye(n, dtype=torch.float64) - A) @ x).pow(2).sum()) / n
        closed += sigma ** 2 * float(A.pow(2).sum()) / n
        g_noise, g_probe = gen(13), gen(14)
        draws = []
        for _ in range(10_000):
            y = (x + sigma * torch.randn(n, generator=g_noise,
                                         dtype=torch.float64)).reshape(shape)
            draws.append(loss_sure_gaussian(f, op, y, sigma, 1e-3, g_probe).item())
        mean = float(np.mean(draws))
        se = float(np.std(draws)) / math.sqrt(len(draws))
        assert abs(mean - closed) <= 3 * se

    def test_probe_averaging_reduces_variance(self):
        shape = (2, 8, 8)
        op = identity_op(shape)
        y = rand(shape, 15)
        single = [loss_sure_gaussian(lambda t: t, op, y, SIGMA, 0.01,
                                     gen(100 + i), probes=1).item()
                  for i in range(200)]
        averaged = [loss_sure_gaussian(lambda t: t, op, y, SIGMA, 0.01,
                                       gen(500 + i), probes=8).item()
                    for i in range(200)]
        assert np.var(averaged) < np.var(single) / 4

    def test_may_be_negative_but_finite(self):
        shape = (2, 4, 4)
        op = identity_op(shape)
        y = rand(shape, 16)
        value = loss_sure_gaussian(lambda t: t, op, y, sigma=0.5, tau=0.01,
                                   rng=gen(17))
        assert math.isfinite(value.item())


class TestPoissonAndMixedSure:
    def test_zero_noise_limits_recover_mc(self):
        shape = (2, 4, 4)
        op = identity_op(shape)
        A = torch.randn(32, 32, generator=gen(18), dtype=torch.float64) / 32
        f = LinearMap(A, shape)
        y = rand(shape, 19)
        mc = loss_mc(f, op, y).item()
        assert loss_sure_mixed(f, op, y, 0.0, 0.0, 0.01, gen(0)).item() == \
            pytest.approx(mc, abs=1e-6)

    def test_gain_zero_matches_gaussian(self):
        shape = (2, 4, 4)
        op = identity_op(shape)
        A = torch.randn(32, 32, generator=gen(20), dtype=torch.float64) / 32
        f = LinearMap(A, shape)
        y = rand(shape, 21)
        mixed = loss_sure_mixed(f, op, y, 0.0, SIGMA, 0.01, gen(7)).item()
        gauss = loss_sure_gaussian(f, op, y, SIGMA, 0.01, gen(7)).item()
        assert mixed == pytest.approx(gauss, rel=1e-6)

    def test_poisson_identity_simulation_oracle(self):
        # empirical mean of the loss vs simulated E||y - x||^2 / n
        gain = 1 / 25
        shape = (2, 8, 8)
        op = identity_op(shape)
        x = 0.2 + 0.6 * rand(shape, 22)
        g_noise, g_probe = gen(23), gen(24)
        losses, errors = [], []
        for _ in range(1000):
            y = gain * torch.poisson(x / gain, generator=g_noise)
            losses.append(loss_sure_poisson(lambda t: t, op, y, gain, 0.01,
                                            g_probe).item())
            errors.append(((y - x) ** 2).mean().item())
        assert np.mean(losses) == pytest.approx(np.mean(errors), rel=0.05)

    def test_mixed_identity_simulation_oracle(self):
        gain, sigma = 1 / 25, 0.05
        shape = (2, 8, 8)
        op = identity_op(shape)
        x = 0.2 + 0.6 * rand(shape, 25)
        g_noise, g_probe = gen(26), gen(27)
        losses, errors = [], []
        for _ in range(1000):
            y = gain * torch.poisson(x / gain, generator=g_noise)
            y = y + sigma * torch.randn(y.shape, generator=g_noise,
                                        dtype=torch.float64)
            losses.append(loss_sure_mixed(lambda t: t, op, y, gain, sigma,
                                          0.01, g_probe).item())
            errors.append(((y - x) ** 2).mean().item())
        assert np.mean(losses) == pytest.approx(np.mean(errors), rel=0.05)

    def test_fixed_seed_deterministic(self):
        shape = (2, 4, 4)
        op = identity_op(shape)
        y = rand(shape, 28)
        a = loss_sure_poisson(lambda t: t, op, y, 0.04, 0.01,
                              RandomSource(3, "p")).item()
        b = loss_sure_poisson(lambda t: t, op, y, 0.04, 0.01,
                              RandomSource(3, "p")).item()
        assert a == b

    def test_negative_gain_rejected(self):
        with pytest.raises(SpecError):
            loss_sure_mixed(lambda t: t, identity_op((1, 2, 2)),
                            torch.ones(1, 2, 2), gain=-0.1, sigma=0.0,
                            tau=0.01, rng=gen(0))

    def test_negative_measurement_rejected(self):
        from share_hsi.errors import DomainError
        with pytest.raises(DomainError):
            loss_sure_poisson(lambda t: t, identity_op((1, 2, 2)),
                              -torch.ones(1, 2, 2), gain=0.1, tau=0.01,
                              rng=gen(0))


class TestEquivariance:
    def test_identity_system_zero(self):
        # f = identity, H = identity, T = shift: perfectly equivariant
        op = identity_op((2, 8, 8))
        y = rand((2, 8, 8), 29)
        t = GroupAction.shift(3, 2)
        assert loss_ec(lambda v: v, op, y, t).item() == 0.0

    def test_identity_transform_pseudo_inverse_zero(self):
        op = identity_op((2, 8, 8))
        y = rand((2, 8, 8), 30)
        t = GroupAction.shift(0, 0)
        assert loss_ec(op.pseudo_inverse, op, y, t).item() == 0.0

    def test_matches_independent_recomputation(self):
        shape = (2, 8, 8)
        mask = column_mask(shape, 0.25, RandomSource(0))
        op = InpaintOperator(mask)
        A = torch.randn(128, 128, generator=gen(31), dtype=torch.float64) / 128
        f = LinearMap(A, shape)
        y = rand(shape, 32)
        t = GroupAction.shift(2, 5)
        got = loss_ec(f, op, y, t).item()
        fy = f(y)
        target = torch.roll(fy, (2, 5), dims=(-2, -1))
        inner = f(torch.as_tensor(mask, dtype=torch.float64) * target)
        want = float(((target - inner) ** 2).mean())
        assert got == pytest.approx(want, rel=1e-9)

    def test_rec_sigma_zero_equals_ec_bitwise(self):
        shape = (2, 8, 8)
        op = InpaintOperator(column_mask(shape, 0.3, RandomSource(1)))
        A = torch.randn(128, 128, generator=gen(33), dtype=torch.float64) / 128
        f = LinearMap(A, shape)
        y = rand(shape, 34)
        t = GroupAction.shift(1, 4)
        noise = NoiseModel("gaussian", sigma=0.0)
        rec = loss_rec(f, op, y, t, noise, gen(0))
        ec = loss_ec(f, op, y, t)
        assert rec.item() == ec.item()

    def test_zero_restorer_ignores_noise(self):
        shape = (2, 8, 8)
        op = identity_op(shape)
        y = rand(shape, 35)
        t = GroupAction.shift(3, 3)
        noise = NoiseModel("gaussian", sigma=0.5)
        f = lambda v: torch.zeros_like(v)
        assert loss_rec(f, op, y, t, noise, gen(5)).item() == 0.0

    def test_rec_fixed_seed_deterministic(self):
        shape = (2, 8, 8)
        op = identity_op(shape)
        A = torch.randn(128, 128, generator=gen(36), dtype=torch.float64) / 128
        f = LinearMap(A, shape)
        y = rand(shape, 37)
        t = GroupAction.shift(2, 2)
        noise = NoiseModel("gaussian", sigma=0.1)
        a = loss_rec(f, op, y, t, noise, RandomSource(4, "n")).item()
        b = loss_rec(f, op, y, t, noise, RandomSource(4, "n")).item()
        assert a == b

    def test_nonnegative(self):
        shape = (2, 8, 8)
        op = identity_op(shape)
        A = torch.randn(128, 128, generator=gen(38), dtype=torch.float64) / 128
        f = LinearMap(A, shape)
        y = rand(shape, 39)
        t = GroupAction.rot90(1)
        assert loss_ec(f, op, y, t).item() >= 0.0
        assert loss_mc(f, op, y).item() >= 0.0


class TestComposite:
    def _setup(self):
        shape = (2, 8, 8)
        op = InpaintOperator(column_mask(shape, 0.25, RandomSource(2)))
        A = torch.randn(128, 128, generator=gen(40), dtype=torch.float64) / 128
        return shape, op, LinearMap(A, shape), rand(shape, 41)

    def test_sure_plus_rec_sum(self):
        shape, op, f, y = self._setup()
        t = GroupAction.shift(1, 1)
        spec = LossSpec(terms=("sure", "rec"), alpha=1.0, sigma=SIGMA, tau=0.01)
        total, bd = loss_share(f, op, y, spec, t, probe_rng=gen(50),
                               noise_rng=gen(51))
        sure = loss_sure_gaussian(f, op, y, SIGMA, 0.01, gen(50)).item()
        rec = loss_rec(f, op, y, t, spec.noise_model(), gen(51)).item()
        assert total.item() == pytest.approx(sure + rec, rel=1e-9)

    def test_alpha_zero_fidelity_only(self):
        shape, op, f, y = self._setup()
        spec = LossSpec(terms=("mc", "rec"), alpha=0.0, sigma=SIGMA)
        total, bd = loss_share(f, op, y, spec, None)
        assert total.item() == loss_mc(f, op, y).item()
        assert bd.equivariance == 0.0

    def test_breakdown_sums_exactly(self):
        shape, op, f, y = self._setup()
        t = GroupAction.shift(2, 3)
        spec = LossSpec(terms=("sure", "rec"), alpha=1.5, sigma=SIGMA)
        _, bd = loss_share(f, op, y, spec, t, probe_rng=gen(60),
                           noise_rng=gen(61))
        assert abs(bd.fidelity + bd.equivariance - bd.total) <= 1e-9

    def test_missing_transform_rejected(self):
        shape, op, f, y = self._setup()
        spec = LossSpec(terms=("mc", "ec"), alpha=1.0)
        with pytest.raises(SpecError):
            loss_share(f, op, y, spec, None)

    def test_rec_only_runs(self):
        shape, op, f, y = self._setup()
        spec = LossSpec(terms=("rec",), alpha=1.0, sigma=SIGMA)
        total, bd = loss_share(f, op, y, spec, GroupAction.shift(1, 0),
                               noise_rng=gen(70))
        assert bd.fidelity == 0.0
        assert total.item() == pytest.approx(bd.equivariance, rel=1e-9)
