import math

import pytest
import torch

from wednet.adversarial import WeatherDiscriminator, grad_reverse
from wednet.datamodel import ValidationError


class TestGradReverse:
    def test_forward_is_identity_bit_exact(self):
        x = torch.randn(3, 4, 5)
        assert torch.equal(grad_reverse(x), x)

    def test_square_loss_gradient_sign_flips(self):
        # loss = grl(x)^2 at x = 3: gradient -6 instead of +6
        x = torch.tensor(3.0, requires_grad=True)
        (grad_reverse(x) ** 2).backward()
        assert x.grad.item() == -6.0

    def test_backward_scales_by_minus_strength(self):
        for lam in (1.0, 0.5, 2.5):
            x = torch.randn(4, 3, dtype=torch.float64)
            co = torch.randn(4, 3, dtype=torch.float64)
            xa = x.clone().requires_grad_(True)
            (grad_reverse(xa, lam) * co).sum().backward()
            xb = x.clone().requires_grad_(True)
            (xb * co).sum().backward()
            assert torch.equal(xa.grad, xb.grad * (-lam))

    def test_zero_strength_zeroes_gradient(self):
        x = torch.randn(5, requires_grad=True)
        (grad_reverse(x, 0.0).sum()).backward()
        assert torch.all(x.grad == 0)


class TestWeatherDiscriminator:
    def _disc(self, width=8, grl=1.0, seed=0):
        torch.manual_seed(seed)
        return WeatherDiscriminator(width, hidden=6, grl_strength=grl)

    def test_saturated_correct_logits_near_zero_loss(self):
        disc = self._disc()
        with torch.no_grad():
            disc.mlp[2].weight.zero_()
            disc.mlp[2].bias.copy_(torch.tensor([20.0, -20.0]))
        h = torch.randn(3, 2, 2, 8)
        loss, logits = disc(h, torch.zeros(3, dtype=torch.long))
        assert torch.allclose(logits, torch.tensor([20.0, -20.0]).expand(3, 2))
        assert loss.item() < 1e-8

    def test_uniform_logits_loss_is_ln2(self):
        disc = self._disc()
        with torch.no_grad():
            disc.mlp[2].weight.zero_()
            disc.mlp[2].bias.zero_()
        h = torch.randn(4, 2, 2, 8)
        loss, _ = disc(h, torch.tensor([0, 1, 0, 1]))
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-7)

    def test_upstream_gradient_is_reversed_copy(self):
        h = torch.randn(2, 3, 2, 8, dtype=torch.float64)
        labels = torch.tensor([0, 1])
        disc = self._disc().double()

        ha = h.clone().requires_grad_(True)
        loss, _ = disc(ha, labels)
        loss.backward()

        disc_plain = self._disc().double()
        disc_plain.load_state_dict(disc.state_dict())
        disc_plain.grl_strength = 0.0  # sanity: strength only affects backward
        hb = h.clone().requires_grad_(True)
        pooled = hb.mean(dim=(1, 2))
        torch.nn.functional.cross_entropy(disc_plain.mlp(pooled), labels).backward()
        assert torch.equal(ha.grad, -hb.grad)

    def test_discriminator_params_get_unreversed_gradients(self):
        disc = self._disc().double()
        h = torch.randn(2, 2, 2, 8, dtype=torch.float64)
        labels = torch.tensor([0, 1])
        loss, _ = disc(h, labels)
        loss.backward()
        with_grl = disc.mlp[0].weight.grad.clone()

        disc.zero_grad()
        pooled = h.mean(dim=(1, 2))  # same path with the reversal removed
        torch.nn.functional.cross_entropy(disc.mlp(pooled), labels).backward()
        assert torch.allclose(with_grl, disc.mlp[0].weight.grad)

    def test_bad_labels_rejected(self):
        disc = self._disc()
        h = torch.randn(2, 2, 2, 8)
        with pytest.raises(ValidationError, match="labels"):
            disc(h, torch.tensor([0, 2]))

    def test_negative_strength_rejected(self):
        with pytest.raises(ValidationError):
            WeatherDiscriminator(8, grl_strength=-0.1)
