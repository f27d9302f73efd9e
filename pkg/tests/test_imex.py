"""Tableau identities, IMEX stepping mechanics, and degenerate limits."""

import numpy as np
import pytest

from ldgimex.imex import (ImexIntegrator, ImexTableau, NaiveBoundary,
                          builtin_tableau, integrate, validate_tableau)
from ldgimex.mesh import build_mesh
from ldgimex.operators import explicit_rhs
from ldgimex.problems import ProblemSpec, builtin_problem
from ldgimex.quadrature import build_basis, interpolate

TOL = 1e-12


# -- tableau data --------------------------------------------------------------

@pytest.mark.parametrize("name", ["ark3", "ark4"])
def test_tableau_structure_and_row_sums(name):
    tab = builtin_tableau(name)
    s = tab.stages
    assert tab.c[0] == 0.0
    assert np.max(np.abs(np.triu(tab.a_ex))) == 0.0
    assert np.max(np.abs(np.triu(tab.a_im, 1))) == 0.0
    assert tab.a_im[0, 0] == 0.0
    assert np.all(np.abs(np.diag(tab.a_im)[1:] - tab.a_im[1, 1]) < TOL)
    for A in (tab.a_ex, tab.a_im):
        np.testing.assert_allclose(A.sum(axis=1), tab.c, atol=TOL, rtol=0)
    assert s == (4 if name == 'ark3' else 6)


@pytest.mark.parametrize("name", ["ark3", "ark4"])
def test_tableau_order_three_conditions(name):
    tab = builtin_tableau(name)
    c = tab.c
    for b in (tab.b_ex, tab.b_im):
        assert abs(b.sum() - 1.0) < TOL
        assert abs(b @ c - 0.5) < TOL
        assert abs(b @ c ** 2 - 1.0 / 3.0) < TOL
        for W in (tab.a_ex, tab.a_im):
            assert abs(b @ W @ c - 1.0 / 6.0) < TOL


def test_ark4_order_four_conditions_including_coupling():
    tab = builtin_tableau('ark4')
    c = tab.c
    parts = (tab.a_ex, tab.a_im)
    for b in (tab.b_ex, tab.b_im):
        assert abs(b @ c ** 3 - 0.25) < TOL
        for W in parts:
            assert abs((b * c) @ (W @ c) - 1.0 / 8.0) < TOL
            assert abs(b @ W @ c ** 2 - 1.0 / 12.0) < TOL
            for V in parts:
                assert abs(b @ W @ V @ c - 1.0 / 24.0) < TOL


def test_tableau_registry_rejects_unknown():
    with pytest.raises(ValueError, match="unknown tableau"):
        builtin_tableau('rk7')


def test_validate_accepts_builtins_and_empty():
    assert validate_tableau(builtin_tableau('ark3'))
    assert validate_tableau(builtin_tableau('ark4'))
    empty = ImexTableau('empty', [], np.zeros((0, 0)), np.zeros((0, 0)),
                        [], [])
    assert validate_tableau(empty)


def test_validate_rejects_broken_tableaus():
    tab = builtin_tableau('ark3')

    def clone(**patch):
        kw = dict(c=tab.c.copy(), a_ex=tab.a_ex.copy(),
                  a_im=tab.a_im.copy(), b_ex=tab.b_ex.copy(),
                  b_im=tab.b_im.copy())
        kw.update(patch)
        return ImexTableau('bad', kw['c'], kw['a_ex'], kw['a_im'],
                           kw['b_ex'], kw['b_im'])

    bad = tab.a_ex.copy()
    bad[0, 1] = 0.1
    with pytest.raises(ValueError, match="strictly lower"):
        validate_tableau(clone(a_ex=bad))

    bad = tab.a_im.copy()
    bad[0, 0] = 0.1
    with pytest.raises(ValueError, match="first implicit stage"):
        validate_tableau(clone(a_im=bad))

    bad = tab.a_ex.copy()
    bad[2, 0] += 1e-3
    with pytest.raises(ValueError, match="row 2 sums"):
        validate_tableau(clone(a_ex=bad))

    bad = tab.b_im.copy()
    bad[1] += 1e-3
    with pytest.raises(ValueError, match="b_im fails"):
        validate_tableau(clone(b_im=bad))

    with pytest.raises(ValueError, match="has shape"):
        validate_tableau(clone(b_ex=tab.b_ex[:-1].copy()))


# -- scheme order on a split scalar ODE ----------------------------------------

def _imex_scalar(tab, lam, mu, T, n):
    """Reference additive RK loop for u' = lam u (implicit) + mu u (explicit)."""
    tau = T / n
    u = 1.0
    s = tab.stages
    for _ in range(n):
        xi = np.zeros(s)
        psi = np.zeros(s)
        for i in range(s):
            acc = u
            for j in range(i):
                acc += tau * (tab.a_ex[i, j] * xi[j] + tab.a_im[i, j] * psi[j])
            aii = tab.a_im[i, i]
            ui = acc / (1.0 - tau * aii * lam) if aii else acc
            xi[i] = mu * ui
            psi[i] = lam * ui
        u = u + tau * float(tab.b_ex @ xi + tab.b_im @ psi)
    return u


@pytest.mark.parametrize("name,lam,mu,T,floor",
                         [("ark3", -2.0, 0.7, 1.0, 2.8),
                          ("ark4", -1.0, 0.5, 2.0, 3.7)])
def test_scalar_ode_convergence_order(name, lam, mu, T, floor):
    tab = builtin_tableau(name)
    exact = np.exp((lam + mu) * T)
    errs = [abs(_imex_scalar(tab, lam, mu, T, n) - exact)
            for n in (8, 16, 32)]
    orders = [np.log2(errs[i - 1] / errs[i]) for i in (1, 2)]
    assert min(orders) >= floor, (errs, orders)


# -- the PDE integrator ---------------------------------------------------------

def _heat_setup(n=8, tableau=None):
    prob = builtin_problem('heat1d')
    basis = build_basis(prob.degree)
    mesh = build_mesh(prob.bounds, n)
    integ = ImexIntegrator(prob, mesh, basis, tableau=tableau,
                           check_residual=True)
    u0 = interpolate(lambda x: prob.exact(x, 0.0), mesh, basis)
    return prob, mesh, basis, integ, u0


def test_constant_state_is_a_fixed_point():
    c = 0.73
    prob = ProblemSpec('const', 1, (-1.0, 1.0), 1.5, 1.0, 0.25, 2,
                       f=lambda u: -0.4 * u,
                       fprime=lambda u: -0.4 * np.ones_like(
                           np.asarray(u, dtype=float)),
                       fprime_const=-0.4,
                       exact=lambda x, t: c * np.ones_like(
                           np.asarray(x, dtype=float)))
    basis = build_basis(2)
    mesh = build_mesh(prob.bounds, 6)
    integ = ImexIntegrator(prob, mesh, basis)
    u0 = np.full((6, basis.p), c)
    u, info = integ.integrate(u0, 0.0, 1.0, 0.05)
    assert info['steps'] == 20
    np.testing.assert_allclose(u, c, atol=1e-12, rtol=0)


def test_implicit_stage_residual_is_small():
    prob, mesh, basis, integ, u0 = _heat_setup(8)
    u, info = integ.integrate(u0, 0.0, 0.5, prob.cfl * mesh.dx)
    assert 0.0 < info['max_residual'] <= 1e-10


def test_single_lu_factorization_per_coefficient():
    for name, n in (('ark3', 8), ('ark4', 6)):
        prob, mesh, basis, integ, u0 = _heat_setup(
            n, tableau=builtin_tableau(name))
        integ.integrate(u0, 0.0, 1.0, 0.25)       # exact multiple: 4 steps
        assert len(integ._lu) == 1
        integ.integrate(u0, 0.0, 1.1, 0.25)       # adds one shortened step
        assert len(integ._lu) == 2


def test_final_step_lands_exactly_on_t_end():
    prob, mesh, basis, integ, u0 = _heat_setup(8)
    u, info = integ.integrate(u0, 0.0, 1.05, 0.25)
    assert info['steps'] == 5
    assert info['t'] == 1.05
    u2, info2 = integ.integrate(u0, 0.0, 1.0, 0.25)
    assert info2['steps'] == 4
    assert info2['t'] == 1.0


def test_no_spurious_partial_step_from_roundoff():
    prob, mesh, basis, integ, u0 = _heat_setup(6)
    u, info = integ.integrate(u0, 0.0, 0.9, 0.3)  # 3*0.3 != 0.9 in floats
    assert info['steps'] == 3


def test_prepared_boundary_schedule_matches_per_step_sampling():
    prob = builtin_problem('heat1d')
    basis = build_basis(prob.degree)
    mesh = build_mesh(prob.bounds, 6)
    u0 = interpolate(lambda x: prob.exact(x, 0.0), mesh, basis)

    class NoPrepare(NaiveBoundary):
        prepare = None

    fast, _ = integrate(prob, mesh, basis, u0, 0.0, 0.5, 0.05)
    slow, _ = integrate(prob, mesh, basis, u0, 0.0, 0.5, 0.05,
                        controller=NoPrepare(prob, mesh, basis,
                                             builtin_tableau('ark3')))
    assert np.array_equal(fast, slow)


def test_rejects_nonpositive_step():
    prob, mesh, basis, integ, u0 = _heat_setup(4)
    with pytest.raises(ValueError, match="positive"):
        integ.integrate(u0, 0.0, 1.0, 0.0)


def test_nonfinite_solution_raises():
    prob, mesh, basis, integ, u0 = _heat_setup(4)
    with pytest.raises(FloatingPointError, match="non-finite"):
        integ.integrate(np.full_like(u0, np.inf), 0.0, 0.1, 0.1)


def test_zero_diffusion_reduces_to_explicit_tableau():
    # with d = 0 the implicit tendencies vanish and one step must equal the
    # bare explicit RK combination of the recorded stage rates
    prob = ProblemSpec('advect', 1, (-1.0, 1.0), 0.0, 1.0, 0.1, 2,
                       f=lambda u: 0.5 * u * u,
                       fprime=lambda u: np.asarray(u, dtype=float),
                       exact=lambda x, t: 0.3 * np.cos(x - t))
    basis = build_basis(2)
    mesh = build_mesh(prob.bounds, 6)
    integ = ImexIntegrator(prob, mesh, basis)
    u0 = interpolate(lambda x: prob.exact(x, 0.0), mesh, basis)
    tau = 0.02
    out, state = integ.step(u0, 0.0, tau, record=True)
    tab = integ.tableau
    # recorded implicit tendencies are exactly zero
    for p in state.psi:
        if p is not None:
            assert np.max(np.abs(p)) == 0.0
    # recompute each stage and the update from the recorded rates
    for i in range(1, tab.stages):
        want = u0.copy()
        for j in range(i):
            if tab.a_ex[i, j] != 0.0:
                want += (tau * tab.a_ex[i, j]) * integ.diffusion.unflatten(
                    state.xi[j])
        np.testing.assert_allclose(state.stage_values[i], want,
                                   atol=1e-13, rtol=0)
    want = u0.copy()
    for i in range(tab.stages):
        if tab.b_ex[i] != 0.0:
            want += (tau * tab.b_ex[i]) * integ.diffusion.unflatten(
                state.xi[i])
    np.testing.assert_allclose(out, want, atol=1e-13, rtol=0)
    # and the recorded first rate is the plain convective RHS
    rhs0 = explicit_rhs(u0, 0.0, state.stage_bdata[0], prob, mesh, basis)
    np.testing.assert_allclose(integ.diffusion.unflatten(state.xi[0]), rhs0,
                               atol=0, rtol=0)


def test_recorded_stage_count_matches_tableau():
    prob, mesh, basis, integ, u0 = _heat_setup(4)
    out, state = integ.step(u0, 0.0, 0.01, record=True)
    s = integ.tableau.stages
    assert len(state.stage_values) == s
    assert len(state.stage_bdata) == s
    assert len(state.xi) == s
