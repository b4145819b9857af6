"""Testes das perdas de interpolação e regularização de distância."""

import math

import numpy as np
import pytest

from iandr import (
    InterpolationSpec,
    Lambdas,
    LossError,
    adversarial_losses,
    cyclic_distances,
    discriminator_adversarial_loss,
    distance_kl,
    distance_regularization,
    dr_target,
    generator_adversarial_loss,
    interpolation_loss,
    interpolation_set,
    pooled_size,
    total_objectives,
)
from networks import discriminator_forward, generator_forward
from tensor import parameter, softmax, zero_grads

EPS = 1e-7


def _l_dr_oracle(features: np.ndarray) -> float:
    """Implementação escalar independente: pooling, distâncias cíclicas e KL."""
    k, c, h, w = features.shape
    oh, ow = max(1, -(-h // 4)), max(1, -(-w // 4))
    reduzidas = []
    for f in features:
        celulas = []
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    r0, r1 = (i * h) // oh, -((-(i + 1) * h) // oh)
                    c0, c1 = (j * w) // ow, -((-(j + 1) * w) // ow)
                    celulas.append(float(np.mean(f[ch, r0:r1, c0:c1])))
        reduzidas.append(celulas)
    dist = []
    for i in range(k):
        a, b = reduzidas[i], reduzidas[(i + 1) % k]
        dist.append(math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b))))
    q = [1.0] * (k - 1) + [float(k - 1)]
    q = [v / sum(q) for v in q]
    maximo = max(dist)
    log_norm = maximo + math.log(sum(math.exp(d - maximo) for d in dist))
    return sum(qi * (math.log(qi) - (di - log_norm)) for qi, di in zip(q, dist)) / k


class TestInterpolationSet:

    def test_scalar_spacing(self):
        latentes = interpolation_set(InterpolationSpec(np.array([0.0]), np.array([3.0]), 4))
        np.testing.assert_array_equal(latentes.reshape(-1), [0.0, 1.0, 2.0, 3.0])

    def test_endpoints_exact_and_constant_steps(self, rng):
        inicio, fim = rng.standard_normal(6), rng.standard_normal(6)
        latentes = interpolation_set(InterpolationSpec(inicio, fim, 5))
        np.testing.assert_array_equal(latentes[0], inicio)
        np.testing.assert_array_equal(latentes[-1], fim)
        passos = np.linalg.norm(np.diff(latentes, axis=0), axis=1)
        np.testing.assert_allclose(passos, passos[0], atol=1e-12)

    def test_identical_endpoints(self):
        z = np.ones(3)
        np.testing.assert_array_equal(interpolation_set(InterpolationSpec(z, z, 3)), np.ones((3, 3)))

    def test_k_below_two(self):
        with pytest.raises(LossError, match="k deve ser >= 2"):
            InterpolationSpec(np.zeros(2), np.ones(2), 1)


class TestInterpolationLoss:

    def test_half(self):
        assert interpolation_loss(np.full(4, 0.5)).item() == pytest.approx(math.log(0.5))

    def test_clamp_boundary(self):
        assert interpolation_loss(np.full(4, 1.0 - EPS)).item() == pytest.approx(0.0, abs=1e-6)

    def test_mixed(self):
        valor = interpolation_loss(np.array([0.25, 0.75])).item()
        assert valor == pytest.approx((math.log(0.25) + math.log(0.75)) / 2, abs=1e-12)
        assert valor == pytest.approx(-0.8370, abs=1e-4)


class TestDistanceRegularization:

    def test_target_k4(self):
        np.testing.assert_array_equal(dr_target(4), [1 / 6, 1 / 6, 1 / 6, 1 / 2])

    def test_pooled_size(self):
        assert pooled_size(16, 16) == (4, 4)
        assert pooled_size(5, 2) == (2, 1)

    def test_identical_features(self):
        features = np.ones((4, 2, 8, 8))
        q = dr_target(4)
        esperado = np.mean(q * (np.log(q) - np.log(0.25)))
        assert distance_regularization(features, 4).item() == pytest.approx(esperado, abs=1e-15)

    def test_zero_when_softmax_matches_target(self):
        q = dr_target(5)
        assert distance_kl(np.log(q) + 2.0).item() == pytest.approx(0.0, abs=1e-15)

    def test_matches_scalar_oracle(self, rng):
        for _ in range(1000):
            k = int(rng.integers(2, 6))
            h, w = rng.integers(2, 10, size=2)
            features = rng.standard_normal((k, 2, h, w))
            assert distance_regularization(features).item() == pytest.approx(_l_dr_oracle(features), abs=1e-10)

    def test_nonnegative(self, rng):
        for _ in range(1000):
            dist = rng.uniform(0.0, 5.0, 4)
            assert distance_kl(dist).item() >= -1e-15

    def test_cyclic_shift_of_identical_features(self):
        features = np.ones((4, 1, 4, 4))
        deslocadas = np.roll(features, 1, axis=0)
        assert distance_regularization(features).item() == distance_regularization(deslocadas).item()

    def test_wraparound_distance_included(self):
        features = np.zeros((3, 1, 4, 4))
        features[2] = 1.0
        dist = cyclic_distances(features).data
        np.testing.assert_allclose(dist, [0.0, 1.0, 1.0])

    def test_count_mismatch(self, rng):
        with pytest.raises(LossError, match="esperadas 4"):
            distance_regularization(rng.standard_normal((3, 1, 4, 4)), 4)

    def test_gradient_descent_reaches_target(self):
        # f0 = 0, f1 = e1, f2 = e1 + e2, f3 = e1 + e2 + e3; mapas 1x1 não são reduzidos
        iniciais = np.zeros((4, 4, 1, 1))
        for i in range(1, 4):
            iniciais[i, :i] = 1.0
        features = parameter(iniciais)
        q = dr_target(4)
        perdas = []
        for _ in range(200):
            zero_grads([features])
            perda = distance_regularization(features, 4)
            perda.backward()
            perdas.append(perda.item())
            features.data = features.data - 0.1 * features.grad
        assert all(b < a for a, b in zip(perdas, perdas[1:]))
        final = softmax(cyclic_distances(features)).data
        assert np.max(np.abs(final - q)) < 0.05


class TestAdversarial:

    def test_saturated_discriminator(self):
        l_adv_d = discriminator_adversarial_loss(np.full(3, 1.0 - EPS), np.full(3, EPS)).item()
        assert l_adv_d == pytest.approx(2 * math.log(EPS), rel=1e-6)

    def test_half_probabilities(self):
        l_adv_g, l_adv_d = adversarial_losses(np.full(4, 0.5), np.full(4, 0.5))
        assert l_adv_g.item() == pytest.approx(math.log(2.0))
        assert l_adv_d.item() == pytest.approx(2 * math.log(0.5))

    def test_generator_loss_finite_at_zero(self):
        assert math.isfinite(generator_adversarial_loss(np.zeros(2)).item())


class TestObjectives:

    def test_arithmetic(self):
        report = total_objectives(1.0, 0.0, l_inp=0.5, l_dr=0.2, lambdas=Lambdas(0.8, 1.25, 0.8))
        assert report.total_g == pytest.approx(0.85, abs=1e-12)

    def test_zero_components(self):
        report = total_objectives(0.0, 0.0)
        assert (report.total_g, report.total_d) == (0.0, 0.0)

    def test_identities(self, rng):
        partes = rng.standard_normal(5)
        lambdas = Lambdas(*rng.uniform(0, 2, 3))
        r = total_objectives(*partes, lambdas=lambdas)
        assert r.total_g == pytest.approx(r.l_adv_g - lambdas.lambda1 * r.l_inp + lambdas.lambda2 * r.l_dr, abs=1e-12)
        assert r.total_d == pytest.approx(r.l_adv_d + lambdas.lambda1 * r.l_inp + lambdas.lambda3 * r.l_g, abs=1e-12)

    def test_non_finite_component_named(self):
        with pytest.raises(LossError, match="l_dr"):
            total_objectives(0.0, 0.0, l_dr=float("nan"))

    def test_default_lambdas(self):
        assert Lambdas() == (0.8, 1.25, 0.8)

    def test_l_dr_reaches_only_generator(self, gen, disc, rng):
        latentes = interpolation_set(InterpolationSpec(rng.standard_normal(8), rng.standard_normal(8), 4))
        imagens, features = generator_forward(gen, latentes)
        discriminator_forward(disc, imagens)
        zero_grads(list(gen.params.values()) + list(disc.params.values()))
        distance_regularization(features, 4).backward()
        assert all(p.grad is None or np.max(np.abs(p.grad)) <= 1e-12 for p in disc.params.values())
        assert any(p.grad is not None and np.any(p.grad != 0) for p in gen.params.values())
