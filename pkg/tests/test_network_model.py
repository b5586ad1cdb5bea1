import numpy as np
import pytest
import scipy.linalg as sla

from faultloc.errors import DomainViolation, SingularBlock
from faultloc.network_model import (FaultPhaseMask, NetworkAdmittance, PortDims, growth_diagnostics,
                                    ybar)


def chain_oracle(p, s, d):
    n = p.n
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    M[:n, n:] = p.L * s + p.R
    M[n:, :n] = p.C * s + p.G
    return sla.expm(d * M)


def upsilon_oracle(p, s, d):
    X = chain_oracle(p, s, d)
    n = p.n
    Bi = np.linalg.inv(X[:n, n:])
    return X[n:, n:] @ Bi, -Bi


def assembled_oracle(p, L, mask, s, d):
    n = p.n
    P = np.diag(mask).astype(float)
    u1, u2 = upsilon_oracle(p, s, L - d)
    w1, w2 = upsilon_oracle(p, s, d)
    Z = np.zeros((n, n))
    z = np.zeros((n, 1))
    return np.block([
        [u1, z, Z, u2],
        [z.T, np.ones((1, 1)), z.T, z.T],
        [Z, z, w1, w2],
        [P @ u2, z, P @ w2, P @ (u1 + w1)],
    ])


@pytest.mark.parametrize("mask", [(1, 0, 0), (0, 1, 1), (1, 1, 1)])
def test_admittance_matches_assembled_oracle(case_params, mask):
    net = NetworkAdmittance(case_params, 10e3, FaultPhaseMask(mask), 10.0)
    for s, d in [(0.01 + 314j, 7.7e3), (0.01 + 2e4j, 1234.5), (3.0 + 5e5j, 9990.0)]:
        Y = net(s, d)
        ref = assembled_oracle(case_params, 10e3, mask, s, d)
        assert np.abs(Y - ref).max() <= 1e-8 * np.abs(ref).max()


def test_unfaulted_rows_of_fault_port_are_zero(case_net):
    Y = case_net(0.01 + 1e3j, 5e3)
    assert np.all(Y[8:, :] == 0)
    assert np.any(Y[7, :] != 0)


def test_dims_and_dummy_port(case_net):
    assert case_net.dims.as_tuple() == (3, 1, 3, 3)
    assert case_net.dims.N == 10 and case_net.dims.n_known == 10
    Y = case_net(0.01 + 1e3j, 5e3)
    assert Y[3, 3] == 1 and np.count_nonzero(Y[3]) == 1 and np.count_nonzero(Y[:, 3]) == 1


def test_search_domain(case_net):
    assert case_net.search_domain == (10.0, 9990.0)
    with pytest.raises(DomainViolation):
        case_net(0.01 + 1j, 5.0)
    with pytest.raises(DomainViolation):
        NetworkAdmittance(case_net.params, 10e3, FaultPhaseMask((1, 0, 0)), 6e3)


def test_port_dims_validation():
    with pytest.raises(ValueError):
        PortDims(3, 0, 3, 3)
    with pytest.raises(ValueError):
        FaultPhaseMask((0, 0, 0))


def test_stream_matches_direct_evaluation(case_net):
    s = 0.01 + 1j * np.linspace(0, 6e4, 50)
    ds = np.concatenate([np.linspace(10, 9990, 40), [7.7e3]])
    seen = []
    for i, d, up, dn in case_net.stream(s, ds, refresh=8):
        Y, _, ok = case_net.from_abcd(up, dn)
        Yr, _, okr = case_net.batch(s, d)
        assert np.array_equal(ok, okr)
        scale = np.abs(Yr[ok]).max()
        assert np.abs(Y[ok] - Yr[ok]).max() <= 1e-8 * scale
        seen.append(i)
    assert sorted(seen) == list(range(ds.size))


def test_singular_bins_flagged_not_raised_in_batch(case_params):
    net = NetworkAdmittance(case_params, 10e3, FaultPhaseMask((1, 0, 0)), 10.0, cond_limit=1.0)
    Y, cond, ok = net.batch([0.01 + 100j], 5e3)
    assert not ok[0] and np.all(Y[0] == 0)
    with pytest.raises(SingularBlock):
        net(0.01 + 100j, 5e3)


def test_ybar_full_rank_on_case_study(case_net):
    Y = case_net(0.01 + 2 * np.pi * 50j, 7.7e3)
    yb = ybar(Y, case_net.dims)
    assert yb.matrix.shape == (4, 4)
    assert yb.sigma_min > 0


def test_growth_diagnostics(case_net):
    s = 0.01 + 1j * 2 * np.pi * np.array([50.0, 500.0, 5e3])
    rep = growth_diagnostics(case_net, s, [100.0, 5e3, 9.9e3])
    assert rep.triangle_ok and rep.sigma_bound_ok
    assert rep.n_samples == 9 and rep.min_sigma > 0
