import numpy as np
import pytest

from nhwp.errors import NotSeparable
from nhwp.models import (AnharmonicModel, FiniteDifferenceModel, MODELS, QuadraticModel, WaveguideModel,
                         eval_all, fd_check, gamma_omega_hess, omega_conjugate)
from nhwp.phase_space import b_to_g, random_shape_matrix


def test_anharmonic_eval_all():
    e = eval_all(AnharmonicModel(1.0, 0.5, 0.2), [5.0, 0.0])
    assert e.H == 12.5
    assert np.array_equal(e.gradH, [5.0, 0.0])
    assert np.array_equal(e.hessH, np.eye(2))
    assert e.Gamma == pytest.approx(2.5, abs=1e-15)
    assert np.allclose(e.gradGamma, [1.0, 0.0], atol=1e-15)
    assert np.allclose(e.hessGamma, 0.2 * np.eye(2), atol=1e-15)


def test_waveguide_eval_all():
    e = eval_all(WaveguideModel(), [0.0, 0.0])
    assert e.Gamma == 0.0
    assert np.allclose(e.gradGamma, [0.0, 1.0], atol=1e-15)
    assert np.array_equal(e.hessGamma, np.zeros((2, 2)))
    assert np.array_equal(e.hessH, np.eye(2))


def test_quadratic_eval_all(rng):
    m = QuadraticModel(np.eye(2), np.zeros((2, 2)))
    for _ in range(10):
        z = rng.normal(size=2)
        e = eval_all(m, z)
        assert e.H == pytest.approx(0.5 * z @ z, rel=1e-15)
        assert np.allclose(e.gradH, z, rtol=1e-15)
        assert np.array_equal(e.hessH, np.eye(2))


def test_quadratic_linear_and_constant_terms():
    m = QuadraticModel(np.diag([2.0, 4.0]), np.eye(2), b_H=[1.0, -1.0], c_H=3.0, b_Gamma=[0.5, 0], c_Gamma=1.0)
    e = eval_all(m, [1.0, 2.0])
    assert e.H == pytest.approx(0.5 * (2 + 16) + 1 - 2 + 3)
    assert np.allclose(e.gradH, [3.0, 7.0])
    assert e.Gamma == pytest.approx(0.5 * 5 + 0.5 + 1.0)


def test_quadratic_rejects_bad_shapes():
    with pytest.raises(ValueError):
        QuadraticModel(np.eye(2), np.eye(4))
    with pytest.raises(ValueError):
        QuadraticModel(np.eye(3), np.eye(3))


def test_gamma_omega_hess_examples():
    m = AnharmonicModel(gamma=0.3)
    assert np.allclose(gamma_omega_hess(m, [1.0, 2.0]), 0.3 * np.eye(2))
    assert np.array_equal(omega_conjugate(np.diag([2.0, 5.0])), np.diag([5.0, 2.0]))


def test_symplectic_gamma_omega_is_inverse(rng):
    for n in (1, 2, 3):
        for _ in range(100):
            S = b_to_g(random_shape_matrix(n, rng))
            assert np.abs(omega_conjugate(S) - np.linalg.inv(S)).max() <= 1e-10 * max(1.0, np.abs(S).max() ** 2)


def test_gamma_omega_hess_symmetric(rng):
    for _ in range(100):
        A = rng.normal(size=(4, 4))
        M = A + A.T
        C = omega_conjugate(M)
        assert np.array_equal(C, C.T)


@pytest.mark.parametrize("model", [QuadraticModel(np.array([[1.0, 0.3], [0.3, 2.0]]), 0.2 * np.eye(2)),
                                   QuadraticModel(np.eye(4), np.diag([0.1, 0.2, 0.3, 0.4]))])
def test_fd_check_quadratic(model, rng):
    for _ in range(20):
        errs = fd_check(model, rng.normal(size=2 * model.n), h=1e-5)
        assert max(errs.values()) <= 1e-8


def test_fd_check_examples():
    assert max(fd_check(AnharmonicModel(), [0.0, 2.0], h=1e-4).values()) <= 1e-6
    assert max(fd_check(WaveguideModel(), [0.0, 10.0], h=1e-4).values()) <= 1e-6


@pytest.mark.parametrize("model", [AnharmonicModel(), AnharmonicModel(2.0, 1.5, 0.0), WaveguideModel(),
                                   WaveguideModel(1.0, 1.0, 2.0),
                                   QuadraticModel(np.array([[1.0, 0.3], [0.3, 2.0]]), np.eye(2))])
def test_fd_check_random_points(model, rng):
    for _ in range(100):
        z = rng.uniform(-5, 5, size=2)
        errs = fd_check(model, z, h=1e-4)
        assert max(errs.values()) <= 1e-5 * (1 + np.linalg.norm(z))


@pytest.mark.parametrize("name", sorted(MODELS))
def test_models_broadcast_over_stacks(name, rng):
    model = MODELS[name]() if name != "quadratic" else QuadraticModel.damped_harmonic()
    z = rng.normal(size=(2, 3, 4))
    assert np.shape(model.H(z)) == (3, 4)
    assert np.shape(model.Gamma(z)) == (3, 4)
    assert np.shape(model.gradH(z)) == (2, 3, 4)
    assert np.shape(model.hessGamma(z)) == (2, 2, 3, 4)
    k = (1, 2)
    pt = z[:, 1, 2]
    assert np.allclose(model.hessH(z)[:, :, 1, 2], model.hessH(pt))
    assert np.allclose(model.gradGamma(z)[(slice(None),) + k], model.gradGamma(pt))


def test_hessians_symmetric(rng):
    for model in (AnharmonicModel(), WaveguideModel(), QuadraticModel(np.array([[1, 2], [2, 1.0]]), np.eye(2))):
        for _ in range(20):
            z = rng.normal(size=2) * 3
            for h in (model.hessH(z), model.hessGamma(z)):
                assert np.array_equal(h, h.T)


def test_finite_difference_model_matches_analytic(rng):
    ref = AnharmonicModel()
    fd = FiniteDifferenceModel(ref.H, ref.Gamma, n=1)
    for _ in range(20):
        z = rng.uniform(-3, 3, size=2)
        assert np.allclose(fd.gradH(z), ref.gradH(z), atol=1e-7)
        assert np.allclose(fd.hessH(z), ref.hessH(z), atol=1e-4)
        assert np.allclose(fd.gradGamma(z), ref.gradGamma(z), atol=1e-7)


def test_separable_parts():
    T, V = AnharmonicModel(1.0, 0.5, 0.2).separable_parts()
    assert T(2.0) == pytest.approx(2 * (1 - 0.2j))
    assert V(2.0) == pytest.approx(2 * (1 - 0.2j) + 2.0)
    T, V = WaveguideModel().separable_parts()
    assert V(1.0) == pytest.approx(0.5 - 5j * np.tanh(0.2))
    with pytest.raises(NotSeparable):
        QuadraticModel(np.array([[1.0, 0.5], [0.5, 1.0]]), np.eye(2)).separable_parts()
    with pytest.raises(NotSeparable):
        QuadraticModel(np.eye(4), np.eye(4)).separable_parts()
    with pytest.raises(NotSeparable):
        FiniteDifferenceModel(lambda z: 0.0, lambda z: 0.0).separable_parts()
