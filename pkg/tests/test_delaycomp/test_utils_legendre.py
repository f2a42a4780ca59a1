import numpy as np
import pytest

from delaycomp.errors import DomainError
from delaycomp.utils.densela import gauss_legendre
from delaycomp.utils.legendre import (
    build_legendre_block,
    legendre_derivative,
    legendre_eval,
    legendre_vector,
)


def _quadrature(D: float, n_points: int = 40) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = gauss_legendre(n_points)
    return D * nodes, D * weights


def test_legendre_endpoints():
    """
    Check L_k(D) = 1 and L_k(0) = (-1)^k.
    """
    D = 2.5
    for k in range(10):
        assert np.isclose(legendre_eval(k, D, D), 1.0)
        assert np.isclose(legendre_eval(k, 0.0, D), (-1.0) ** k)


def test_legendre_low_degrees():
    """
    Check the first polynomials against their closed forms.
    """
    D = 2.0
    zeta = np.linspace(0.0, D, 7)
    x = zeta / D

    np.testing.assert_allclose(legendre_eval(0, zeta, D), np.ones_like(zeta))
    np.testing.assert_allclose(legendre_eval(1, zeta, D), 2 * x - 1, atol=1e-14)
    np.testing.assert_allclose(
        legendre_eval(2, zeta, D), 6 * x**2 - 6 * x + 1, atol=1e-14
    )


def test_legendre_orthogonality():
    """
    Check that the polynomials are orthogonal with norm D / (2k + 1).
    """
    D = 1.7
    zeta, w = _quadrature(D)

    L = legendre_vector(8, zeta, D)
    gram = L.T @ (w[:, None] * L)

    np.testing.assert_allclose(gram, np.diag(D / (2 * np.arange(8) + 1)), atol=1e-12)


@pytest.mark.parametrize("l", [1, 2, 5, 9])
def test_derivative_identity(l):
    """
    Check dL/dzeta = M L / D on a grid of positions.
    """
    D = 0.8
    block = build_legendre_block(l, D)
    zeta = np.linspace(0.0, D, 23)

    derivative = np.stack(
        [legendre_derivative(k, zeta, D) for k in range(l)], axis=-1
    )
    expected = legendre_vector(l, zeta, D) @ block.M.T / D

    np.testing.assert_allclose(derivative, expected, atol=1e-9)


def test_legendre_block_values():
    """
    Check the block matrices for l = 3.
    """
    block = build_legendre_block(3, 1.0)

    np.testing.assert_array_equal(block.M, [[0, 0, 0], [2, 0, 0], [0, 6, 0]])
    np.testing.assert_array_equal(block.LD, [1, 1, 1])
    np.testing.assert_array_equal(block.L0, [1, -1, 1])
    np.testing.assert_array_equal(block.Q, np.diag([1, 3, 5]))


def test_bessel_inequality():
    """
    Check that the projections never carry more energy than the signal,
    and exactly as much for a pure Legendre mode.
    """
    D = 1.3
    l = 6
    zeta, w = _quadrature(D)
    block = build_legendre_block(l, D)
    L = legendre_vector(l, zeta, D)
    rng = np.random.default_rng(7)

    # 1000 random signals, one per row
    a, b, c = rng.normal(size=(3, 1000, 1))
    signals = a * np.sin(b * 5 * zeta) + c * np.exp(-zeta)
    projections = (signals * w) @ L
    captured = np.einsum("si,ij,sj->s", projections, block.Q, projections) / D
    energy = signals**2 @ w
    assert np.all(captured <= energy * (1 + 1e-12))

    for k in range(l):
        signal = L[:, k]
        projections = L.T @ (w * signal)
        energy = w @ signal**2
        assert np.isclose(projections @ block.Q @ projections / D, energy)


def test_legendre_domain_errors():
    """
    Check the rejection of negative degrees, bad delays and positions.
    """
    with pytest.raises(DomainError):
        legendre_eval(-1, 0.5, 1.0)
    with pytest.raises(DomainError):
        legendre_eval(2, 0.5, 0.0)
    with pytest.raises(DomainError):
        legendre_eval(2, 1.5, 1.0)
    with pytest.raises(DomainError):
        build_legendre_block(0, 1.0)
    with pytest.raises(DomainError):
        build_legendre_block(3, -1.0)
