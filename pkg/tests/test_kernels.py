import math

import numpy as np
import pytest

from netcohesion.errors import InputError
from netcohesion.kernels import KERNEL_FAMILIES, KernelSpec, cross_gram, default_gamma, gram, kernel_eval

from oracles import gram_loop

SPECS = [
    KernelSpec("rbf", gamma=0.7),
    KernelSpec("laplace", gamma=0.4),
    KernelSpec("cosine"),
    KernelSpec("polynomial", degree=3, offset=0.5),
    KernelSpec("tangent", gamma=0.3, offset=-0.2),
]


def test_rbf_identity():
    assert kernel_eval(KernelSpec("rbf", gamma=2.0), [1.0, 2.0], [1.0, 2.0]) == 1.0


def test_polynomial_arithmetic():
    assert kernel_eval(KernelSpec("polynomial", degree=2, offset=1), [1, 0], [1, 1]) == 4.0


def test_cosine_orthogonal():
    assert kernel_eval(KernelSpec("cosine"), [1, 0], [0, 1]) == 0.0


def test_cosine_zero_vector():
    with pytest.raises(InputError):
        kernel_eval(KernelSpec("cosine"), [0, 0], [1, 1])


def test_dimension_mismatch():
    with pytest.raises(InputError):
        kernel_eval(KernelSpec("rbf"), [1, 2], [1, 2, 3])
    with pytest.raises(InputError):
        cross_gram(KernelSpec("rbf"), np.ones((2, 2)), np.ones((3, 3)))


@pytest.mark.parametrize("bad", [dict(family="spline"), dict(family="rbf", gamma=0),
                                 dict(family="polynomial", degree=0)])
def test_invalid_spec(bad):
    with pytest.raises(InputError):
        KernelSpec(**bad)


def test_aliases_and_defaults():
    assert KernelSpec("poly").family == "polynomial"
    assert KernelSpec("poly").offset == 1.0
    assert KernelSpec("tangent").offset == 0.0


def test_single_point_gram():
    for spec in SPECS[:3]:
        np.testing.assert_array_equal(gram(spec, [[0.3, -1.2]]), [[1.0]])


def test_rbf_closed_form():
    K = gram(KernelSpec("rbf", gamma=1.0), [[0.0], [1.0]])
    e = math.exp(-1)
    np.testing.assert_allclose(K, [[1, e], [e, 1]], rtol=1e-15)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family)
def test_gram_matches_double_loop(spec, rng):
    X = rng.standard_normal((8, 3))
    expected = gram_loop(spec.family, X, X, gamma=spec.gamma, degree=spec.degree,
                         offset=spec.offset)
    np.testing.assert_allclose(gram(spec, X), expected, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family)
def test_cross_gram_matches_double_loop(spec, rng):
    A, B = rng.standard_normal((3, 2)), rng.standard_normal((5, 2))
    expected = gram_loop(spec.family, A, B, gamma=spec.gamma, degree=spec.degree,
                         offset=spec.offset)
    assert cross_gram(spec, A, B).shape == (3, 5)
    np.testing.assert_allclose(cross_gram(spec, A, B), expected, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family)
def test_symmetry_and_cross_consistency(spec, rng):
    X = rng.standard_normal((10, 4))
    K = gram(spec, X)
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    np.testing.assert_allclose(cross_gram(spec, X, X), K, atol=1e-12)


def test_cross_gram_row_hits_training_point(rng):
    X = rng.standard_normal((6, 2))
    row = cross_gram(KernelSpec("rbf", gamma=0.5), X[[4]], X)[0]
    assert row[4] == 1.0 and np.all(np.delete(row, 4) < 1.0)


@pytest.mark.parametrize("spec", [KernelSpec("rbf", gamma=0.5), KernelSpec("laplace", gamma=0.5),
                                  KernelSpec("polynomial", degree=2), KernelSpec("polynomial", degree=4)],
                         ids=lambda s: f"{s.family}{s.degree}")
def test_psd_families(spec, rng):
    for _ in range(5):
        n = 15
        X = rng.standard_normal((n, 3))
        assert np.linalg.eigvalsh(gram(spec, X)).min() >= -1e-8 * n


def test_bounded_families(rng):
    X = rng.standard_normal((12, 3))
    for spec in SPECS[:3]:
        K = gram(spec, X)
        assert np.all(np.abs(K) <= 1.0)
        np.testing.assert_array_equal(np.diag(K), 1.0)


def test_tangent_not_psd_in_general():
    # documented exemption: tanh kernels can be indefinite
    X = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    K = gram(KernelSpec("tangent", gamma=3.0, offset=-1.0), X)
    assert np.linalg.eigvalsh(K).min() < 0


def test_default_gamma(rng):
    X = rng.standard_normal((500, 2)) * 2.0
    assert default_gamma(X) == pytest.approx(1 / (2 * X.var()))


def test_serialization_roundtrip():
    for spec in SPECS:
        assert KernelSpec.from_dict(spec.to_dict()) == spec
    assert set(SPECS[0].to_dict()) == {"family", "gamma", "degree", "offset"}
    assert {s.family for s in SPECS} == set(KERNEL_FAMILIES)
