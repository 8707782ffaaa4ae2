import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import member, random_instance
from dissim.exceptions import DomainError, RankError
from dissim.hybrid_model import (AuxiliarySystem, JumpDiffusionSystem,
                                 Nonlinearity, simulate_batch)
from dissim.storage import (StorageCertificate, check_assumption1,
                            check_structural_equations, compute_rtilde,
                            dissipation_check, gain_summary,
                            generator_value, interface_input, jump_matching,
                            storage_value)


def scalar_pair(lam=2.0):
    sys = JumpDiffusionSystem([[0.0]], [[1.0]], [[1.0]], R=[[1.0]],
                              lam=[lam])
    abs_sys = JumpDiffusionSystem([[0.0]], [[1.0]], [[1.0]])
    cert = StorageCertificate(
        Mhat=[[1.0]], K=[[0.0]], X=np.zeros((0, 0)), L1=np.zeros((1, 0)),
        Z=np.zeros((1, 0)), aux=AuxiliarySystem.static(0, 0), kappa_hat=1.0,
        kappa_bar=0.0, P=[[1.0]], Q=[[0.0]])
    return sys, abs_sys, cert


# --------------------------------------------------------------------------
# structural assumption

def test_consensus_certificate_passes(consensus):
    sys, _, cert = member(consensus)
    assert cert.kappa_hat == pytest.approx(19.4)
    rep = check_assumption1(sys, cert)
    assert rep.passed
    assert rep.dzw.residual == 0.0


def test_oscillator_d2xd2_block(ring):
    sys, _, cert = member(ring)
    rep = check_assumption1(sys, cert)
    # (9.47785 - 2 * 7.4055 + 1.6526) on every diagonal entry
    assert rep.d2xd2.margin == pytest.approx(-3.68055, abs=1e-9)
    assert rep.d2xd2.is_satisfied
    assert rep.dzw.feasible


def test_zero_d2_block_passes_for_any_x(consensus):
    sys, _, cert = member(consensus)
    aux = AuxiliarySystem(np.zeros((0, 0)), np.zeros((0, 6)),
                          np.zeros((6, 0)),
                          np.hstack([np.eye(6)[:, :3], np.zeros((6, 3))]), 3)
    c = cert.replace(aux=aux, X=np.diag([5.0] * 3 + [-1.0] * 3))
    assert check_assumption1(sys, c).d2xd2.margin == 0.0


# --------------------------------------------------------------------------
# structural equations

def test_consensus_structural_equations(consensus):
    sys, abs_sys, cert = member(consensus)
    rep = check_structural_equations(sys, abs_sys, cert, 1e-10)
    assert rep.passed
    assert max(rep.residuals.values()) <= 1e-10


def test_self_abstraction_has_zero_residuals(consensus):
    sys, _, cert = member(consensus)
    c = cert.replace(P=np.eye(3), Q=np.zeros((3, 3)), H=np.eye(3),
                     L2=cert.L1, What=cert.W)
    rep = check_structural_equations(sys, sys, c)
    assert rep.passed
    assert all(v == 0.0 for v in rep.residuals.values())


def test_perturbed_output_matrix_is_caught(consensus):
    sys, abs_sys, cert = member(consensus)
    bad = abs_sys.replace(C1=abs_sys.C1 + 1e-3)
    rep = check_structural_equations(sys, bad, cert)
    assert not rep.passed_each["C1P=C1hat"]
    assert rep.residuals["C1P=C1hat"] == pytest.approx(1e-3, rel=1e-6)


# --------------------------------------------------------------------------
# storage and interface

def test_storage_hand_values(ring):
    aux = AuxiliarySystem(-np.eye(2), np.zeros((2, 2)), np.eye(2),
                          np.eye(2), 1)
    c = StorageCertificate(
        Mhat=np.eye(2), K=np.zeros((1, 2)), X=np.eye(2), L1=np.zeros((1, 0)),
        Z=np.zeros((2, 1)), aux=aux, kappa_hat=1.0, kappa_bar=1.0,
        Lambda=np.eye(2), P=np.eye(2))
    assert storage_value([1.0, 0.0], [0.0, 0.0], [1.0, 1.0], c) == 3.0
    assert storage_value([0.3, 2.0], [0.3, 2.0], [0.0, 0.0], c) == 0.0
    # top-left entry of [[2I, I], [I, I]] on a one-node slice
    c2 = c.replace(Mhat=np.array([[2.0, 1.0], [1.0, 1.0]]))
    assert storage_value([1.0, 0.0], [0.0, 0.0], [0.0, 0.0], c2) == 2.0


def test_interface_on_diagonal_is_q_xhat(ring):
    sys, abs_sys, cert = member(ring)
    xhat = np.array([0.4, -1.2])
    u = interface_input(0.0, cert.P @ xhat, xhat, [0.0], cert, sys, abs_sys)
    np.testing.assert_allclose(u, cert.Q @ xhat, atol=1e-12)


def test_interface_consensus_form(consensus):
    sys, abs_sys, cert = member(consensus)
    # the scalar abstraction with a unit-gain nonlinearity input and the
    # sign convention u = ... - L2 phi(Fhat xhat)
    abs1 = abs_sys.replace(F=[[1.0]])
    c = cert.replace(L2=-np.ones((3, 1)))
    rng = np.random.default_rng(0)
    for _ in range(5):
        x, xh, uh = rng.standard_normal(3), rng.standard_normal(1), \
            rng.standard_normal(1)
        u = interface_input(0.0, x, xh, uh, c, sys, abs1)
        ref = (-10.0 * (x - xh) + uh - np.sin(x.sum()) + np.sin(xh))
        np.testing.assert_allclose(u, ref, atol=1e-12)
        u = interface_input(0.0, np.full(3, xh[0]), xh, uh, c, sys, abs1)
        ref = np.ones(3) * (uh - np.sin(3 * xh) + np.sin(xh))
        np.testing.assert_allclose(u, ref, atol=1e-12)


def test_rtilde_values(consensus, ring):
    I = np.eye(2)
    sys = JumpDiffusionSystem(np.zeros((2, 2)), I, I)
    c = StorageCertificate(Mhat=I, K=I, X=np.zeros((4, 4)),
                           L1=np.zeros((2, 0)), Z=np.zeros((2, 0)),
                           aux=AuxiliarySystem.static(0, 2), kappa_hat=1.0,
                           kappa_bar=0.0, P=I)
    np.testing.assert_allclose(compute_rtilde(sys, sys, c), I)
    for case in (consensus, ring):
        s, a, cert = member(case)
        np.testing.assert_allclose(compute_rtilde(s, a, cert),
                                   np.ones((cert.P.shape[0] // a.n, 1)),
                                   atol=1e-12)
    with pytest.raises(RankError):
        compute_rtilde(JumpDiffusionSystem(np.zeros((2, 2)),
                                           np.zeros((2, 1)), I), sys, c)


# --------------------------------------------------------------------------
# generator

def test_generator_vanishes_on_invariant_diagonal(consensus):
    sys, abs_sys, cert = member(consensus)
    quiet = sys.replace(G=None, R=None, lam=None)
    xh = np.array([0.7])
    x = cert.P @ xh
    u = interface_input(0.0, x, xh, [0.0], cert, quiet, abs_sys)
    lv = generator_value(0.0, x, xh, np.zeros(0), u, [0.0], np.zeros(3),
                         np.zeros(1), quiet, abs_sys, cert)
    assert abs(lv) <= 1e-12


def test_generator_jump_only_scalar():
    sys, abs_sys, cert = scalar_pair()
    lv = generator_value(0.0, [0.0], [0.0], np.zeros(0), [0.0], [0.0],
                         np.zeros(0), np.zeros(0), sys, abs_sys, cert)
    assert lv == pytest.approx(2.0, abs=1e-12)


def test_generator_pure_theta():
    n = 2
    aux = AuxiliarySystem(-5 * np.eye(2), np.zeros((2, 2)), np.eye(2),
                          np.eye(2), 1)
    sys = JumpDiffusionSystem(np.zeros((n, n)), np.eye(n), np.eye(n),
                              C2=np.eye(1, n), D=np.eye(n, 1))
    c = StorageCertificate(
        Mhat=np.eye(n), K=np.zeros((n, n)), X=np.eye(2), L1=np.zeros((n, 0)),
        Z=np.eye(n, 1), W=np.eye(1), What=np.eye(1), H=np.eye(1),
        aux=aux, kappa_hat=1.0, kappa_bar=1.0, Lambda=np.eye(2), P=np.eye(n),
        Q=np.zeros((n, n)))
    lv = generator_value(0.0, np.zeros(n), np.zeros(n), [1.0, 0.0],
                         np.zeros(n), np.zeros(n), [0.0], [0.0], sys, sys, c)
    assert lv == pytest.approx(-10.0, abs=1e-12)


def _fd_generator(sys, abs_sys, cert, x, xh, th, u, uh, w, wh, h):
    f = sys.A @ x + sys.B @ u + sys.D @ w
    fh = abs_sys.A @ xh + abs_sys.B @ uh + abs_sys.D @ wh
    v = np.concatenate([cert.W @ w - cert.What @ wh,
                        sys.C2 @ x - cert.H @ abs_sys.C2 @ xh])
    tdot = cert.aux.Atheta @ th + cert.aux.Btheta @ v
    V0 = storage_value(x, xh, th, cert)
    V1 = storage_value(x + h * f, xh + h * fh, th + h * tdot, cert)
    return (V1 - V0) / h


def test_generator_matches_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(100):
        sys, abs_sys, cert = random_instance(rng)
        x, xh, th = rng.standard_normal(3), rng.standard_normal(2), \
            rng.standard_normal(2)
        u, uh, w, wh = rng.standard_normal(2), rng.standard_normal(1), \
            rng.standard_normal(1), rng.standard_normal(1)
        lv = generator_value(0.0, x, xh, th, u, uh, w, wh, sys, abs_sys, cert)
        errs = [abs(_fd_generator(sys, abs_sys, cert, x, xh, th, u, uh, w,
                                  wh, h) - lv) for h in (1e-4, 1e-5)]
        scale = 1.0 + abs(lv)
        # first-order difference: error shrinks with h and stays O(h)
        assert errs[0] <= 1e-1 * scale
        assert errs[1] <= max(0.2 * errs[0], 1e-6 * scale)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_generator_is_affine_in_inputs(seed):
    rng = np.random.default_rng(seed)
    sys, abs_sys, cert = random_instance(rng, jumps=True, noise=True)
    x, xh, th = rng.standard_normal(3), rng.standard_normal(2), \
        rng.standard_normal(2)
    a = [rng.standard_normal(k) for k in (2, 1, 1, 1)]
    d = [rng.standard_normal(k) for k in (2, 1, 1, 1)]

    def g(s):
        u, uh, w, wh = (ai + s * di for ai, di in zip(a, d))
        return generator_value(0.0, x, xh, th, u, uh, w, wh, sys, abs_sys,
                               cert)

    g0, g1, g2 = g(0.0), g(1.0), g(2.0)
    assert g2 - 2 * g1 + g0 == pytest.approx(0.0, abs=1e-9 * (1 + abs(g2)))


def test_martingale_consistency_scalar_jumps():
    sys, abs_sys, cert = scalar_pair()
    h = 0.01
    b = simulate_batch(sys, [0.0], horizon=h, dt=1e-3, seed=3,
                       n_paths=10_000)
    V = storage_value(b.states[:, -1], np.zeros((10_000, 1)),
                      np.zeros((10_000, 0)), cert)
    rate = V / h
    se = rate.std(ddof=1) / np.sqrt(rate.size)
    assert abs(rate.mean() - 2.0) <= 3 * se


# --------------------------------------------------------------------------
# gains and sampled dissipation

def test_noise_free_offsets_vanish(ring):
    sys, abs_sys, cert = member(ring)
    g = gain_summary(sys, abs_sys, cert)
    assert g.c_tilde == 0.0 and g.c_prime == 0.0
    # B Rtilde = P Bhat for the oscillator groups
    assert g.psi_slope == pytest.approx(0.0, abs=1e-20)
    assert g.kappa_tilde == pytest.approx(0.05)


def test_consensus_gains(consensus):
    sys, abs_sys, cert = member(consensus)
    g = gain_summary(sys, abs_sys, cert)
    # c_tilde = (varpi^2 + lam tau^2) * n_i with Mhat = I
    assert g.c_tilde == pytest.approx((0.16 + 0.04) * 3)
    assert g.alpha_slope == pytest.approx(1.0)
    assert g.kappa_tilde == pytest.approx(19.4 / 2)
    # lam R - P (abstract jumps) = 0.2 * 1, weighted by 1 / pi_prime
    assert g.c_prime == pytest.approx(0.04 * 3 / (19.4 / 4))


def test_gain_domain_errors(consensus):
    sys, abs_sys, cert = member(consensus)
    with pytest.raises(DomainError):
        gain_summary(sys, abs_sys, cert, pi=10.0, pi_prime=10.0)
    with pytest.raises(DomainError):
        gain_summary(sys, abs_sys, cert, pi=-1.0)


def test_degenerate_certificate_has_zero_generator():
    sys = JumpDiffusionSystem(np.zeros((2, 2)), np.eye(2), np.eye(2))
    c = StorageCertificate(
        Mhat=np.eye(2), K=np.zeros((2, 2)), X=np.zeros((0, 0)),
        L1=np.zeros((2, 0)), Z=np.zeros((2, 0)),
        aux=AuxiliarySystem.static(0, 0), kappa_hat=1e-9, kappa_bar=0.0,
        P=np.eye(2), Q=np.zeros((2, 2)))
    g = gain_summary(sys, sys, c)
    rep = dissipation_check(sys, sys, c, g, samples=2000)
    assert rep.passed
    assert rep.worst_slack >= -1e-6


def test_consensus_sampled_dissipation(consensus):
    sys, abs_sys, cert = member(consensus)
    rep = dissipation_check(sys, abs_sys, cert,
                            gain_summary(sys, abs_sys, cert))
    assert rep.passed and rep.witness is None


def test_failing_check_reports_witness(consensus):
    sys, abs_sys, cert = member(consensus)
    g = gain_summary(sys, abs_sys, cert)
    # an unstable feedback gain breaks dissipation
    bad = cert.replace(K=10.0 * np.eye(3))
    rep = dissipation_check(sys, abs_sys, bad, g, samples=500)
    assert not rep.passed
    assert set(rep.witness) == {"x", "xhat", "theta", "uhat", "w", "what"}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_storage_nonnegative_and_bounds_output_error(seed):
    rng = np.random.default_rng(seed)
    sys, abs_sys, cert = random_instance(rng)
    # make C1hat = C1 P so the output-error comparison applies
    abs_sys = abs_sys.replace(C1=sys.C1 @ cert.P)
    g = gain_summary(sys, abs_sys, cert.replace(Rtilde=np.zeros((2, 1))))
    X, Xh = rng.standard_normal((200, 3)) * 3, rng.standard_normal((200, 2))
    Th = rng.standard_normal((200, 2))
    V = storage_value(X, Xh, Th, cert)
    assert np.all(V >= 0)
    err = np.sum((X @ sys.C1.T - Xh @ abs_sys.C1.T) ** 2, axis=1)
    assert np.all(g.alpha_slope * err <= V * (1 + 1e-12) + 1e-12)
    diag = storage_value(Xh @ cert.P.T, Xh, np.zeros((200, 2)), cert)
    np.testing.assert_allclose(diag, 0.0, atol=1e-10)


# --------------------------------------------------------------------------
# jump matching

def test_jump_matching_jump_free(consensus):
    sys, _, cert = member(consensus)
    quiet = sys.replace(R=None, lam=None)
    jm = jump_matching(quiet, cert.Mhat, cert.P, 1.0, [0.5, 1.0, 2.0])
    assert jm.lambda_hat == 0.5 and jm.objective == 0.0
    np.testing.assert_array_equal(jm.R_hat, 0.0)


def test_jump_matching_scalar_calculus_oracle():
    sys, _, _ = scalar_pair(lam=1.0)
    # objective 2 s^2 - 2 s over s = lambda_hat * R_hat, minimum at s = 1/2
    jm = jump_matching(sys, [[1.0]], [[1.0]], 1.0, [1.0])
    assert jm.objective == pytest.approx(-0.5, abs=1e-12)
    assert jm.lambda_hat * jm.R_hat[0] == pytest.approx(0.5, abs=1e-12)
    s = np.linspace(-2, 2, 40001)
    assert jm.objective == pytest.approx((2 * s ** 2 - 2 * s).min(), abs=1e-8)
