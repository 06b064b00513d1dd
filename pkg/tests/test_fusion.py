import numpy as np
import pytest
import torch

from wednet.datamodel import NumericalError, ValidationError
from wednet.fusion import AdaptiveFusion, FlowPredictor, compute_loss


class TestAdaptiveFusion:
    def _gate(self, width=8, seed=0):
        torch.manual_seed(seed)
        return AdaptiveFusion(width)

    def test_zero_gate_gives_plain_average(self):
        gate = self._gate()
        with torch.no_grad():
            gate.proj.weight.zero_()
            gate.proj.bias.zero_()
        hi = torch.randn(2, 3, 4, 8)
        hw = torch.randn(2, 3, 4, 8)
        fused, alpha = gate(hi, hw)
        assert torch.allclose(alpha, torch.full_like(alpha, 0.5))
        assert torch.allclose(fused, (hi + hw) / 2, atol=1e-6)

    def test_equal_branches_fixed_point(self):
        gate = self._gate()
        h = torch.randn(1, 2, 3, 8)
        fused, _ = gate(h, h)
        assert torch.allclose(fused, h, atol=1e-6)

    def test_elementwise_between_branches(self):
        gate = self._gate(seed=3)
        hi = torch.randn(2, 3, 4, 8)
        hw = torch.randn(2, 3, 4, 8)
        fused, alpha = gate(hi, hw)
        lo = torch.minimum(hi, hw)
        hi_b = torch.maximum(hi, hw)
        assert torch.all(fused >= lo - 1e-6)
        assert torch.all(fused <= hi_b + 1e-6)
        assert torch.all((alpha > 0) & (alpha < 1))

    def test_shape_mismatch_rejected(self):
        gate = self._gate()
        with pytest.raises(ValidationError):
            gate(torch.randn(1, 2, 3, 8), torch.randn(1, 2, 4, 8))


class TestFlowPredictor:
    def _pred(self, seed=0, **kw):
        torch.manual_seed(seed)
        defaults = dict(width=8, hist_len=6, horizon=12, n_features=2, hidden=16)
        defaults.update(kw)
        return FlowPredictor(**defaults)

    def test_output_shape(self):
        pred = self._pred()
        y = pred(torch.randn(3, 6, 5, 8))
        assert y.shape == (3, 12, 5, 2)

    def test_zero_final_layer_zero_output(self):
        pred = self._pred()
        with torch.no_grad():
            pred.net[2].weight.zero_()
            pred.net[2].bias.zero_()
        y = pred(torch.randn(2, 6, 4, 8))
        assert torch.all(y == 0)

    def test_parcel_permutation_equivariance(self):
        pred = self._pred(seed=1)
        h = torch.randn(1, 6, 5, 8)
        perm = torch.tensor([3, 1, 4, 0, 2])
        assert torch.allclose(pred(h)[:, :, perm], pred(h[:, :, perm]), atol=1e-6)


class TestComputeLoss:
    def test_perfect_prediction_zero(self):
        y = torch.randn(2, 3)
        total, report = compute_loss(y, y.clone(), None, 0.1)
        assert report.loss_pre == 0.0
        assert total.item() == 0.0

    def test_hand_arithmetic(self):
        pred = torch.tensor([1.0, 3.0])
        target = torch.tensor([2.0, 5.0])
        _, report = compute_loss(pred, target, None, 0.0)
        assert report.loss_pre == pytest.approx(1.5)

    def test_eta_zero_total_is_exactly_pre(self):
        pred = torch.randn(4, 2)
        target = torch.randn(4, 2)
        dis = torch.tensor(0.7)
        total, report = compute_loss(pred, target, dis, 0.0)
        assert total.item() == report.loss_pre
        assert report.total == report.loss_pre

    def test_total_reproducible_from_parts(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pred = torch.tensor(rng.normal(size=(3, 4)))
            target = torch.tensor(rng.normal(size=(3, 4)))
            dis = torch.tensor(abs(rng.normal()))
            eta = abs(rng.normal())
            _, report = compute_loss(pred, target, dis, eta)
            assert report.total == pytest.approx(report.loss_pre + eta * report.loss_dis, abs=1e-9)

    def test_nan_rejected(self):
        bad = torch.tensor([float("nan")])
        good = torch.tensor([1.0])
        with pytest.raises(NumericalError):
            compute_loss(bad, good, None, 0.0)
        with pytest.raises(NumericalError):
            compute_loss(good, bad, None, 0.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            compute_loss(torch.zeros(2), torch.zeros(3), None, 0.0)

    def test_negative_eta_rejected(self):
        with pytest.raises(ValidationError):
            compute_loss(torch.zeros(2), torch.zeros(2), None, -0.1)
