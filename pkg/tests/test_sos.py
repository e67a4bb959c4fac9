import numpy as np
import pytest

from sparsecs.backends import StatusCode
from sparsecs.core import DimensionMismatch, ProblemInstance, ProblemTooLarge
from sparsecs.experiments import SyntheticSpec, brute_force_oracle, generate
from sparsecs.relaxations import solve_perspective_relaxation
from sparsecs.sos import SosCertificate, solve_sos_d1, verify_certificate


def test_trivial_ball_bound_near_zero():
    inst = ProblemInstance(np.eye(2), np.array([0.1, 0.1]), 1.0)
    bound, cert, status = solve_sos_d1(inst)
    assert status.code is StatusCode.OPTIMAL
    assert -1e-6 <= bound <= 1e-6  # true optimum is 0
    assert verify_certificate(inst, cert)


def test_bound_dominates_soc_on_random_instances():
    for seed in range(8):
        inst, _ = generate(SyntheticSpec(n=np.random.default_rng(seed).integers(5, 13),
                                         m=8, k=2, alpha=0.2, seed=seed))
        sos_bound, cert, status = solve_sos_d1(inst)
        soc = solve_perspective_relaxation(inst)
        assert sos_bound >= soc.objective - 1e-6
        if status.code is StatusCode.OPTIMAL:
            assert verify_certificate(inst, cert)


def test_bound_below_exact_optimum():
    for seed in range(5):
        inst, _ = generate(SyntheticSpec(n=10, m=8, k=3, alpha=0.2, seed=seed))
        bound, _, _ = solve_sos_d1(inst)
        _, opt = brute_force_oracle(inst)
        assert bound <= opt + 1e-6


def test_certificate_roundtrip_through_json():
    inst, _ = generate(SyntheticSpec(n=6, m=8, k=2, alpha=0.2, seed=3))
    _, cert, status = solve_sos_d1(inst)
    assert status.code is StatusCode.OPTIMAL
    back = SosCertificate.from_json(cert.to_json())
    assert verify_certificate(inst, back)
    assert back.lam == cert.lam


def test_perturbed_gram_fails_psd_check():
    inst, _ = generate(SyntheticSpec(n=5, m=8, k=2, alpha=0.2, seed=4))
    _, cert, _ = solve_sos_d1(inst)
    S_bad = np.array(cert.S)
    S_bad[np.diag_indices_from(S_bad)] -= 1e-3
    bad = SosCertificate(lam=cert.lam, S=S_bad, tau=cert.tau, t=cert.t, r=cert.r)
    assert not verify_certificate(inst, bad)


def test_zero_certificate_fails_identity():
    # lam = 0 with all-zero multipliers only works if the objective itself
    # vanishes, which it never does (the z_i coefficients are 1)
    inst = ProblemInstance(np.array([[1.0]]), np.array([0.1]), 1.0, gamma=1.0)
    zero = SosCertificate(lam=0.0, S=np.zeros((3, 3)), tau=0.0,
                          t=np.zeros(1), r=np.zeros(1))
    assert not verify_certificate(inst, zero)


def test_dimension_mismatch_rejected():
    inst = ProblemInstance(np.eye(2), np.ones(2), 1.0)
    bad = SosCertificate(lam=0.0, S=np.zeros((3, 3)), tau=0.0,
                         t=np.zeros(2), r=np.zeros(2))
    with pytest.raises(DimensionMismatch):
        verify_certificate(inst, bad)


def test_size_guard():
    inst = ProblemInstance(np.ones((2, 4)), np.ones(2), 1.0)
    with pytest.raises(ProblemTooLarge):
        solve_sos_d1(inst, max_n=3)


def test_identity_tolerance_boundary():
    # nudging one multiplier by just over the identity tolerance flips the check
    inst, _ = generate(SyntheticSpec(n=5, m=8, k=2, alpha=0.2, seed=5))
    _, cert, _ = solve_sos_d1(inst)
    t_bad = np.array(cert.t)
    t_bad[0] += 5e-6
    bad = SosCertificate(lam=cert.lam, S=cert.S, tau=cert.tau, t=t_bad, r=cert.r)
    assert not verify_certificate(inst, bad)


def test_sos_improves_on_soc_at_moderate_size():
    # wider-than-tall sensing, the regime where the semidefinite bound helps
    margins = []
    for seed in range(2):
        for alpha in (0.2, 0.5):
            inst, _ = generate(SyntheticSpec(n=30, m=25, k=10, alpha=alpha,
                                             seed=seed))
            sos_bound, _, _ = solve_sos_d1(inst)
            soc = solve_perspective_relaxation(inst)
            margins.append(sos_bound - soc.objective)
            assert sos_bound >= soc.objective - 1e-6
    assert np.mean(margins) > 0.0
