import math

import numpy as np
import pytest

from rwlab.errors import ConfigError, ContractError
from rwlab.harmonics import (FOUR_PI, L_power, Mode, angular_gradient_squared, gauss_nodes,
                             make_modeset, sphere_integral, synthesize_axisymmetric,
                             zonal_harmonics, zonal_harmonics_dtheta)


def test_mode_values():
    m = Mode.from_index(3)
    assert (m.l, m.lt2, m.lam) == (3, 12.0, math.sqrt(13.0))


def test_modeset_and_L_power():
    ms = make_modeset(2)
    assert ms.indices == [0, 1, 2]
    assert np.allclose(L_power(ms, 2.0), [1.0, 3.0, 7.0])
    assert np.allclose(L_power(ms, -1.0), 1 / np.sqrt([1.0, 3.0, 7.0]))


def test_custom_spectrum():
    ms = make_modeset(spectrum=[0.0, 2.5])
    assert not ms.sphere
    assert np.allclose(ms.lam, [1.0, math.sqrt(3.5)])
    with pytest.raises(ConfigError):
        make_modeset(spectrum=[1.0, 1.0])
    with pytest.raises(ConfigError):
        make_modeset(spectrum=[-1.0])


def test_negative_l_max_rejected():
    with pytest.raises(ConfigError):
        make_modeset(-1)


def test_low_zonal_harmonics_closed_form():
    mu = np.array([-0.7, 0.0, 0.3, 1.0])
    Y = zonal_harmonics(2, mu)
    assert np.allclose(Y[0], 1 / math.sqrt(FOUR_PI))
    assert np.allclose(Y[1], math.sqrt(3 / FOUR_PI) * mu)
    assert np.allclose(Y[2], math.sqrt(5 / FOUR_PI) * 0.5 * (3 * mu**2 - 1))


def test_zonal_orthonormal():
    mu, w = gauss_nodes(10)
    Y = zonal_harmonics(10, mu)
    gram = sphere_integral(Y[:, None, :] * Y[None, :, :], w)
    assert np.allclose(gram, np.eye(11), atol=1e-13)


def test_theta_derivative_by_differences():
    theta = np.linspace(0.2, 2.9, 12)
    d = 1e-6
    num = (zonal_harmonics(5, np.cos(theta + d)) - zonal_harmonics(5, np.cos(theta - d))) / (2 * d)
    assert np.allclose(zonal_harmonics_dtheta(5, np.cos(theta)), num, atol=1e-8)


def test_gauss_node_minimum():
    assert gauss_nodes(4)[0].size == 14
    with pytest.raises(ContractError):
        gauss_nodes(4, count=8)


def test_synthesis_sixth_power_exact(rng):
    # the sphere integral of phi^2 is the coefficient norm; for Y_00 only,
    # int phi^6 = (4 pi) (c / sqrt(4 pi))^6
    ms = make_modeset(3)
    c = rng.normal(size=(4, 5))
    mu, w = gauss_nodes(3)
    f = synthesize_axisymmetric(c, ms)
    assert np.allclose(sphere_integral(f**2, w), np.sum(c**2, axis=0))
    c0 = np.zeros((4, 1))
    c0[0, 0] = 2.0
    f0 = synthesize_axisymmetric(c0, ms)
    assert sphere_integral(f0**6, w)[0] == pytest.approx(FOUR_PI * (2 / math.sqrt(FOUR_PI))**6)


def test_angular_gradient_integrates_to_lt2(rng):
    ms = make_modeset(4)
    c = rng.normal(size=(5, 3))
    mu, w = gauss_nodes(4)
    g = angular_gradient_squared(c, ms, mu)
    assert np.allclose(sphere_integral(g, w), (ms.lt2[:, None] * c**2).sum(axis=0))


def test_synthesis_requires_sphere_and_shape():
    with pytest.raises(ContractError):
        synthesize_axisymmetric(np.zeros((2, 3)), make_modeset(spectrum=[0.0, 1.0]))
    with pytest.raises(ContractError):
        synthesize_axisymmetric(np.zeros((3, 3)), make_modeset(1))
