import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from anisomhd.kernel import (
    DomainTag,
    PhysicalParams,
    Wavevector,
    bound_audit,
    check_bounds,
    classify_codes,
    classify_frequency,
    eigen_data,
    generator,
    kernel_matrix,
    kernel_triple,
    matrix_exponential_oracle,
    propagator_scalars,
    random_wavevectors,
    stress_wavevectors,
)

E = math.e
UNIT = PhysicalParams(1.0, 1.0)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# ---------------------------------------------------------------- types


def test_params_reject_nonpositive():
    with pytest.raises(ValueError, match="mu"):
        PhysicalParams(0.0, 1.0)
    with pytest.raises(ValueError, match="eta"):
        PhysicalParams(1.0, -2.0)


def test_wavevector_rejects_nonfinite():
    with pytest.raises(ValueError):
        Wavevector(0.0, np.inf, 1.0)


def test_xi_nu_sq():
    xi = Wavevector(3.0, 1.5, -2.0)
    assert xi.xi_nu_sq == 1.5**2 + 2.0**2


# ---------------------------------------------------------------- eigen data


def test_eigen_zero_operator():
    e = eigen_data(Wavevector(5.0, 0.0, 0.0), PhysicalParams(3.0, 0.2))
    assert e.gamma == 0
    assert e.lambda1 == 0 and e.lambda2 == 0
    assert e.degenerate


def test_eigen_decoupled_diagonal():
    e = eigen_data(Wavevector(0.0, 0.0, 1.0), PhysicalParams(1.0, 2.0))
    assert e.s_trace == pytest.approx(3.0)
    assert e.q_det == pytest.approx(2.0)
    assert e.gamma == pytest.approx(1.0)
    assert complex(e.lambda1) == pytest.approx(-2.0)
    assert complex(e.lambda2) == pytest.approx(-1.0)


def test_eigen_oscillatory_pair():
    e = eigen_data(Wavevector(0.0, 1.0, 0.0), UNIT)
    assert e.gamma == pytest.approx(-3.0)
    assert complex(e.lambda1) == pytest.approx((-1 - 1j * math.sqrt(3)) / 2)
    assert complex(e.lambda2) == pytest.approx((-1 + 1j * math.sqrt(3)) / 2)
    assert e.oscillatory
    assert complex(e.lambda1) == pytest.approx(np.conj(complex(e.lambda2)))


def test_vieta_on_random_samples():
    rng = np.random.default_rng(0)
    xi = random_wavevectors(rng, 5000)
    for p in (UNIT, PhysicalParams(4.0, 0.3)):
        e = eigen_data(xi, p)
        s, q = e.s_trace, e.q_det
        assert np.all(np.abs(e.lambda1 + e.lambda2 + s) <= 1e-12 * s + 1e-300)
        assert np.all(np.abs(e.lambda1 * e.lambda2 - q) <= 1e-12 * q + 1e-300)
        assert np.all(e.lambda1.real <= e.lambda2.real)
        assert np.all(e.lambda2.real <= 0)


# ---------------------------------------------------------------- propagator scalars and kernels


def test_scalars_at_zero_time():
    e = eigen_data(Wavevector(0.3, 1.2, -0.7), PhysicalParams(2.0, 0.5))
    G = propagator_scalars(e, 0.0)
    assert complex(G.g1) == 0 and complex(G.g2) == 1 and complex(G.g3) == 1


def test_scalars_decoupled_closed_form():
    e = eigen_data(Wavevector(0.0, 0.0, 1.0), PhysicalParams(1.0, 2.0))
    G = propagator_scalars(e, 1.0)
    assert complex(G.g1) == pytest.approx(E**-1 - E**-2, rel=1e-14)
    assert complex(G.g2) == pytest.approx(2 * E**-1 - E**-2, rel=1e-14)
    assert complex(G.g3) == pytest.approx(2 * E**-2 - E**-1, rel=1e-14)


def test_scalars_degenerate_limit():
    # xi2 = 0 and mu xi3^2 = eta xi_nu^2 = 1 gives a double eigenvalue -1
    e = eigen_data(Wavevector(0.0, 0.0, 1.0), UNIT)
    assert e.degenerate
    G = propagator_scalars(e, 2.0)
    assert complex(G.g1) == pytest.approx(2 * E**-2, rel=1e-14)
    assert complex(G.g2) == pytest.approx((1 + 2) * E**-2, rel=1e-14)
    assert complex(G.g3) == pytest.approx((1 - 2) * E**-2, rel=1e-14)


def test_scalars_sum_identity():
    rng = np.random.default_rng(1)
    xi = random_wavevectors(rng, 2000)
    t = 10.0 ** rng.uniform(-3, 1, size=2000)
    e = eigen_data(xi, PhysicalParams(0.7, 1.9))
    G = propagator_scalars(e, t)
    ref = np.exp(e.lambda1 * t) + np.exp(e.lambda2 * t)
    ok = np.abs(G.g2 + G.g3 - ref) <= 1e-10 * np.maximum(np.abs(ref), 1e-300) + 1e-300
    assert ok.all()


def test_kernel_identity_at_zero():
    K = kernel_triple(Wavevector(1.0, -2.0, 0.5), PhysicalParams(3.0, 0.1), 0.0)
    assert (complex(K.k1), complex(K.k2), complex(K.k3)) == (1, 0, 1)


def test_kernel_decoupled():
    K = kernel_triple(Wavevector(0.0, 0.0, 1.0), PhysicalParams(1.0, 2.0), 1.0)
    assert complex(K.k1) == pytest.approx(E**-1, rel=1e-14)
    assert complex(K.k2) == 0
    assert complex(K.k3) == pytest.approx(E**-2, rel=1e-14)


def test_kernel_oscillatory_offdiagonal():
    K = kernel_triple(Wavevector(0.0, 1.0, 0.0), UNIT, 1.0)
    expected = 1j * math.exp(-0.5) * (2 / math.sqrt(3)) * math.sin(math.sqrt(3) / 2)
    assert complex(K.k2) == pytest.approx(expected, rel=1e-14)
    M = matrix_exponential_oracle(Wavevector(0.0, 1.0, 0.0), UNIT, 1.0)
    assert rel_err(K.matrix(), M) < 1e-10


def test_kernel_matches_literal_formulas_away_from_degeneracy():
    rng = np.random.default_rng(2)
    xi = random_wavevectors(rng, 2000, log_range=(-1, 1))
    t = 10.0 ** rng.uniform(-2, 0, size=2000)
    p = PhysicalParams(1.3, 0.6)
    e = eigen_data(xi, p)
    keep = np.abs(e.lambda2 - e.lambda1) > 1e-2 * np.maximum(1, e.s_trace)
    G = propagator_scalars(e, t)
    a = p.mu * xi.xi3**2
    K = kernel_triple(xi, p, t)
    assert rel_err(K.k1[keep], (-a * G.g1 + G.g2)[keep]) < 1e-9
    assert rel_err(K.k2[keep], (1j * xi.xi2 * G.g1)[keep]) < 1e-9
    assert rel_err(K.k3[keep], (a * G.g1 + G.g3)[keep]) < 1e-9


def test_kernel_real_structure_when_gamma_nonnegative():
    rng = np.random.default_rng(3)
    xi = random_wavevectors(rng, 3000)
    e = eigen_data(xi, UNIT)
    K = kernel_triple(xi, UNIT, 0.7)
    sel = e.gamma >= 0
    assert np.all(K.k1.imag[sel] == 0) and np.all(K.k3.imag[sel] == 0)
    assert np.all(K.k2.real[sel] == 0)


def test_conjugate_symmetry():
    rng = np.random.default_rng(4)
    xi = random_wavevectors(rng, 1000)
    K = kernel_triple(xi, UNIT, 0.3)
    Km = kernel_triple(-xi, UNIT, 0.3)
    for a, b in ((K.k1, Km.k1), (K.k2, Km.k2), (K.k3, Km.k3)):
        np.testing.assert_allclose(b, np.conj(a), rtol=1e-14, atol=1e-300)


# ---------------------------------------------------------------- oracle


def test_oracle_identity_and_diagonal():
    np.testing.assert_array_equal(matrix_exponential_oracle(Wavevector(1.0, 2.0, 3.0), UNIT, 0.0), np.eye(2))
    M = matrix_exponential_oracle(Wavevector(0.0, 0.0, 1.0), PhysicalParams(1.0, 2.0), 1.0)
    np.testing.assert_allclose(M, np.diag([E**-1, E**-2]), rtol=1e-13, atol=1e-16)


def test_oracle_against_scipy_expm():
    rng = np.random.default_rng(5)
    p = PhysicalParams(0.8, 1.7)
    for _ in range(50):
        xi = Wavevector(*(10.0 ** rng.uniform(-2, 1, 3)))
        t = 10.0 ** rng.uniform(-2, 1)
        ref = expm(t * generator(xi, p))
        assert rel_err(matrix_exponential_oracle(xi, p, t), ref) < 1e-11


@settings(max_examples=200, deadline=None)
@given(
    x2=st.floats(-50, 50, allow_nan=False),
    x3=st.floats(-50, 50, allow_nan=False),
    mu=st.floats(0.05, 20),
    eta=st.floats(0.05, 20),
    t=st.floats(0.0, 20.0),
)
def test_kernel_matches_oracle_property(x2, x3, mu, eta, t):
    xi = Wavevector(0.0, x2, x3)
    p = PhysicalParams(mu, eta)
    assert rel_err(kernel_matrix(xi, p, t), matrix_exponential_oracle(xi, p, t)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(
    x2=st.floats(-10, 10, allow_nan=False),
    x3=st.floats(-10, 10, allow_nan=False),
    t=st.floats(0.0, 5.0),
    s=st.floats(0.0, 5.0),
)
def test_semigroup_property(x2, x3, t, s):
    xi = Wavevector(0.0, x2, x3)
    p = PhysicalParams(0.9, 1.4)
    lhs = kernel_matrix(xi, p, t + s)
    rhs = kernel_matrix(xi, p, t) @ kernel_matrix(xi, p, s)
    assert rel_err(lhs, rhs) < 1e-9


def test_degenerate_stress_against_oracle():
    rng = np.random.default_rng(6)
    p = PhysicalParams(2.0, 0.5)
    xi = stress_wavevectors(rng, 3000, p)
    t = 10.0 ** rng.uniform(-3, 2, size=3000)
    K = kernel_matrix(xi, p, t)
    worst = 0.0
    for j in range(0, 3000, 7):
        xj = Wavevector(xi.xi1[j], xi.xi2[j], xi.xi3[j])
        worst = max(worst, rel_err(K[j], matrix_exponential_oracle(xj, p, t[j])))
    assert worst < 1e-9


# ---------------------------------------------------------------- classification and bounds


def test_classification_examples():
    assert classify_frequency(Wavevector(0.0, 0.0, 1.0), UNIT) is DomainTag.Omega1
    assert classify_frequency(Wavevector(0.0, 3.0, 0.1), UNIT) is DomainTag.Omega23
    assert classify_frequency(Wavevector(0.0, 0.1, 1.0), PhysicalParams(4.0, 1.0)) is DomainTag.Omega21


def test_classification_partition_and_omega2_condition():
    rng = np.random.default_rng(7)
    xi = random_wavevectors(rng, 20000)
    p = PhysicalParams(3.0, 0.4)
    codes = classify_codes(xi, p)
    assert set(np.unique(codes)) <= {0, 1, 2, 3}
    e = eigen_data(xi, p)
    assert np.all(e.gamma[codes > 0] > 0.25 * e.s_trace[codes > 0] ** 2)
    # the two defining conditions agree via gamma = s^2 - 4q
    lhs = e.gamma <= 0.25 * e.s_trace**2
    rhs = e.s_trace**2 <= (16 / 3) * e.q_det
    near = np.isclose(e.gamma, 0.25 * e.s_trace**2, rtol=1e-9)
    assert np.all((lhs == rhs) | near)


def test_check_bounds_examples():
    rep = check_bounds(Wavevector(0.0, 0.0, 1.0), UNIT, 1.0)
    assert rep.hard_violations() == 0
    assert rep.by_name("omega1_re_lambda1").n_checked == 1
    assert float(rep.by_name("omega1_abs_g1").lhs) == pytest.approx(E**-1)
    rep = check_bounds(Wavevector(0.0, 3.0, 0.1), UNIT, 0.5)
    assert rep.by_name("omega23_chain").n_checked == 1
    assert rep.hard_violations() == 0


def test_check_bounds_small_time_slope():
    xi = Wavevector(0.0, 0.4, 0.9)
    for t in (1e-6, 1e-4):
        rep = check_bounds(xi, UNIT, t)
        rec = rep.by_name("omega1_abs_g1")
        assert float(rec.lhs) / float(rec.rhs) == pytest.approx(1.0, rel=1e-3)


def test_check_bounds_rejects_zero_time():
    with pytest.raises(ValueError):
        check_bounds(Wavevector(0.0, 1.0, 1.0), UNIT, 0.0)


def test_small_audit_has_no_hard_violations():
    audit = bound_audit(2000, seed=3, batch=5000)
    assert audit.hard_violations == 0
    assert min(audit.per_tag.values()) >= 2000
