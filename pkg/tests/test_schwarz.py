import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpmschwarz.band import discretize
from cpmschwarz.errors import ConfigError, EmptySubdomain, InvalidOverlap
from cpmschwarz.schwarz import (DIRICHLET_MODES, RAS, make_partition,
                                observed_kappa, ras_solve, ras_step,
                                read_history_csv, write_history_csv)
from cpmschwarz.sparsela import Factorization

L = 2 * math.pi


def partition(op, split=(0.5, 0.5), overlap=0.1 * L):
    return make_partition(op.band, L, split, (overlap, overlap), op.A)


@pytest.fixture(scope="module")
def circle_setup(circle_op):
    part = partition(circle_op)
    u_single = Factorization(circle_op.A, tol=1e-12)(circle_op.b)
    return circle_op, part, u_single


def test_one_to_two_split_intervals(circle_op):
    part = partition(circle_op, split=(1 / 3, 2 / 3))
    assert part.disjoint[0] == (0.0, L / 3)
    np.testing.assert_allclose(part.intervals,
                               [(-0.05 * L, L / 3 + 0.05 * L),
                                (L / 3 - 0.05 * L, 1.05 * L)], rtol=1e-15)
    assert part.d1 == pytest.approx(0.1 * L, rel=1e-14)
    assert part.d2 == pytest.approx(0.1 * L, rel=1e-14)


def test_equal_split_wide_overlap(circle_op):
    part = partition(circle_op, overlap=0.2 * L)
    assert part.l1 == pytest.approx(0.7 * L, rel=1e-14)
    assert part.l2 == pytest.approx(0.7 * L, rel=1e-14)
    cfg = part.config1d(1.0)
    assert cfg.d1 + cfg.d2 < min(cfg.l1, cfg.l2)


@pytest.mark.parametrize("overlap", [0.0, -0.1, 0.5 * L])
def test_invalid_overlap(circle_op, overlap):
    with pytest.raises(InvalidOverlap):
        partition(circle_op, overlap=overlap)


@pytest.mark.parametrize("split", [(0.5, 0.6), (0.0, 1.0), (1.2, -0.2)])
def test_bad_split(circle_op, split):
    with pytest.raises(ConfigError):
        partition(circle_op, split=split)


def test_empty_subdomain(coarse_circle_op):
    with pytest.raises(EmptySubdomain):
        partition(coarse_circle_op, split=(0.005, 0.995), overlap=0.02)


@pytest.mark.parametrize("split, overlap", [((0.5, 0.5), 0.1 * L),
                                            ((1 / 3, 2 / 3), 0.05 * L),
                                            ((0.8, 0.2), 0.15 * L)])
def test_partition_invariants(circle_op, split, overlap):
    part = partition(circle_op, split, overlap)
    n = circle_op.band.n
    owned = np.concatenate(part.owned)
    assert np.array_equal(np.sort(owned), np.arange(n))
    members = np.union1d(*part.member)
    assert np.array_equal(members, np.arange(n))
    for j in range(2):
        assert np.all(np.isin(part.owned[j], part.member[j]))
        assert np.all(np.isin(part.boundary[j], part.member[j]))
        assert np.array_equal(np.union1d(part.boundary[j], part.interior[j]),
                              part.member[j])
        assert not np.intersect1d(part.boundary[j], part.interior[j]).size


def test_boundary_brute_force(coarse_circle_op):
    op = coarse_circle_op
    part = partition(op)
    dense = op.A.todense()
    for j in range(2):
        mem = set(part.member[j].tolist())
        gamma = {i for i in mem
                 if any(k not in mem for k in np.flatnonzero(dense[i]))}
        assert gamma == set(part.boundary[j].tolist())


def test_owned_by_arclength(circle_op):
    part = partition(circle_op, split=(1 / 3, 2 / 3))
    s = circle_op.band.s[:circle_op.band.n]
    assert np.all(s[part.owned[0]] < L / 3)
    assert np.all(s[part.owned[1]] >= L / 3)


@pytest.mark.parametrize("mode", ["algebraic", "iterate"])
def test_fixed_point(circle_setup, mode):
    op, part, u_single = circle_setup
    u = ras_step(op.A, op.b, part, op.E, u_single, dirichlet=mode)
    assert np.max(np.abs(u - u_single)) <= 1e-9


def test_zero_data_stays_zero(circle_setup):
    op, part, _ = circle_setup
    n = op.band.n
    u = ras_step(op.A, np.zeros(n), part, op.E, np.zeros(n))
    assert np.all(u == 0)


def test_error_decreases_over_five_steps(circle_setup):
    op, part, u_single = circle_setup
    ras = RAS(op.A, op.b, part)
    u = np.zeros(op.band.n)
    errs = [np.max(np.abs(u - u_single))]
    for _ in range(5):
        u = ras.step(u)
        errs.append(np.max(np.abs(u - u_single)))
    assert np.all(np.diff(errs) < 0)


def test_every_owned_value_from_one_solve(circle_setup):
    op, part, u_single = circle_setup
    ras = RAS(op.A, op.b, part)
    written = np.zeros(op.band.n, dtype=int)
    for sub in ras._subs:
        np.add.at(written, sub[6], 1)
    assert np.all(written == 1)


def test_dense_oracle_step(coarse_circle_op):
    op = coarse_circle_op
    part = partition(op, split=(1 / 3, 2 / 3))
    A = op.A.todense()
    n = op.band.n
    u_prev = np.random.default_rng(0).normal(size=n)
    want = np.empty(n)
    for idx, own in zip(part.member, part.owned):
        out = np.setdiff1d(np.arange(n), idx)
        rhs = op.b[idx] - A[np.ix_(idx, out)] @ u_prev[out]
        x = np.linalg.solve(A[np.ix_(idx, idx)], rhs)
        pos = np.flatnonzero(np.isin(idx, own))
        want[idx[pos]] = x[pos]
    got = ras_step(op.A, op.b, part, op.E, u_prev)
    assert np.max(np.abs(got - want)) <= 1e-10 * np.max(np.abs(want))


def test_identity_row_mode_dense_oracle(coarse_circle_op):
    op = coarse_circle_op
    part = partition(op)
    A = op.A.todense()
    n = op.band.n
    u_prev = np.random.default_rng(1).normal(size=n)
    Eu = (op.E @ u_prev)[:n]
    want = np.empty(n)
    for idx, gamma, own in zip(part.member, part.boundary, part.owned):
        local = A[np.ix_(idx, idx)].copy()
        rhs = op.b[idx].copy()
        g = np.isin(idx, gamma)
        local[g] = 0.0
        local[g, np.flatnonzero(g)] = 1.0
        rhs[g] = Eu[idx[g]]
        x = np.linalg.solve(local, rhs)
        pos = np.flatnonzero(np.isin(idx, own))
        want[idx[pos]] = x[pos]
    got = ras_step(op.A, op.b, part, op.E, u_prev, dirichlet="extension")
    assert np.max(np.abs(got - want)) <= 1e-10 * np.max(np.abs(want))


def test_extension_mode_needs_E(circle_setup):
    op, part, _ = circle_setup
    with pytest.raises(ConfigError):
        RAS(op.A, op.b, part, dirichlet="extension")
    with pytest.raises(ConfigError):
        RAS(op.A, op.b, part, dirichlet="robin")


@pytest.mark.parametrize("mode", DIRICHLET_MODES)
def test_all_modes_converge(circle_setup, mode):
    op, part, u_single = circle_setup
    _, hist = ras_solve(op.A, op.b, part, op.E, np.zeros(op.band.n), 1e-6,
                        80, u_single, dirichlet=mode)
    assert hist[-1] <= 1e-6


def test_solve_returns_immediately_from_solution(circle_setup):
    op, part, u_single = circle_setup
    u, hist = ras_solve(op.A, op.b, part, op.E, u_single, 1e-9, 10, u_single)
    assert len(hist) == 1 and hist[0] <= 1e-9
    assert np.array_equal(u, u_single)


def test_solve_stops_at_max_iter(circle_setup):
    op, part, u_single = circle_setup
    _, hist = ras_solve(op.A, op.b, part, op.E, np.zeros(op.band.n), 1e-12,
                        1, u_single)
    assert len(hist) == 2


def test_solve_computes_single_domain_reference(circle_setup):
    op, part, u_single = circle_setup
    u, hist = ras_solve(op.A, op.b, part, op.E, np.zeros(op.band.n), 1e-10, 80)
    assert hist[-1] <= 1e-10
    assert np.max(np.abs(u - u_single)) <= 1e-10 + 1e-12


@pytest.mark.parametrize("tol", [0.0, -1e-3])
def test_solve_rejects_nonpositive_tol(circle_setup, tol):
    op, part, u_single = circle_setup
    with pytest.raises(ConfigError):
        ras_solve(op.A, op.b, part, op.E, np.zeros(op.band.n), tol, 5,
                  u_single)


def test_step_rejects_wrong_length(circle_setup):
    op, part, _ = circle_setup
    with pytest.raises(ConfigError):
        RAS(op.A, op.b, part).step(np.zeros(3))


@pytest.mark.slow
def test_more_overlap_contracts_faster(unit_circle):
    op = discretize(unit_circle, 0.01, 4, 1.0, np.sin)
    u_single = Factorization(op.A)(op.b)
    kappa = {}
    for frac in (0.05, 0.15):
        part = partition(op, overlap=frac * L)
        _, hist = ras_solve(op.A, op.b, part, op.E, np.zeros(op.band.n),
                            1e-10, 200, u_single)
        kappa[frac] = observed_kappa(hist, skip=1)
    assert kappa[0.15] < kappa[0.05]


def test_observed_kappa_halving():
    assert observed_kappa([1.0, 0.7, 0.5, 0.35, 0.25]) == pytest.approx(0.5, rel=1e-15)


def test_observed_kappa_constant():
    assert observed_kappa(np.full(6, 3.0)) == pytest.approx(1.0, rel=1e-15)


def test_observed_kappa_skip_and_floor():
    hist = [1.0, 0.1, 0.04, 0.02, 0.01, 1e-20, 1e-21]
    # the transient first ratio is dropped with skip=1
    assert observed_kappa(hist, skip=1) == pytest.approx(math.sqrt(0.2 * 0.25))
    # entries at rounding level are discarded
    assert observed_kappa(hist) == observed_kappa(hist[:5])


@pytest.mark.parametrize("hist", [[1.0, 0.5], [1.0, 0.0, 0.0, 0.0],
                                  [1.0, 0.5, 1e-30]])
def test_observed_kappa_needs_a_ratio(hist):
    with pytest.raises(ConfigError):
        observed_kappa(hist)


@settings(max_examples=50, deadline=None)
@given(kappa=st.floats(1e-3, 0.999), n=st.integers(3, 40),
       h0=st.floats(1e-3, 1e3))
def test_observed_kappa_recovers_geometric_rate(kappa, n, h0):
    hist = h0 * np.sqrt(kappa) ** np.arange(n)
    hist = hist[hist > 1e3 * np.finfo(float).eps * h0]
    if len(hist) < 3:
        return
    assert observed_kappa(hist) == pytest.approx(kappa, rel=1e-10)


def test_history_csv_round_trip(tmp_path):
    hist = np.array([1.0, 0.3, 0.1234567890123456789, 1e-300])
    path = tmp_path / "history.csv"
    write_history_csv(path, hist)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,error"
    assert lines[1].startswith("0,")
    np.testing.assert_array_equal(read_history_csv(path), hist)


def test_history_csv_rejects_other_files(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        read_history_csv(path)
