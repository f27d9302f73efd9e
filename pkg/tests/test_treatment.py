"""Boundary treatment: recovery stencils, stage recursion, compiled maps."""

import numpy as np
import pytest

import stage_closed_forms as cf
from ldgimex.imex import ImexIntegrator, builtin_tableau
from ldgimex.mesh import build_mesh
from ldgimex.problems import ProblemSpec, builtin_problem
from ldgimex.quadrature import build_basis, interpolate
from ldgimex.treatment import (BoundaryDerivatives, EdgeDerivatives1D,
                               EndpointCorrector1D, FaceCorrector2D,
                               _LinearStageMap, recover_derivatives_1d,
                               recover_mixed_derivatives_2d, treated_boundary)

ARK3 = builtin_tableau('ark3')


# -- one-sided derivative recovery ---------------------------------------------

@pytest.mark.parametrize("side,xb", [("west", -1.0), ("east", 1.0)])
def test_recovery_exact_on_quadratic(side, xb):
    mesh = build_mesh((-1.0, 1.0), 10)
    basis = build_basis(2)
    u = interpolate(lambda x: x * x, mesh, basis)
    rec = recover_derivatives_1d(u, mesh, basis, side, 3)
    assert abs(rec.u_x - 2.0 * xb) < 1e-12
    assert abs(rec.u_xx - 2.0) < 1e-12
    assert abs(rec.u_xxx) < 1e-10


@pytest.mark.parametrize("side,xb", [("west", -1.0), ("east", 1.0)])
def test_recovery_exact_on_cubic(side, xb):
    mesh = build_mesh((-1.0, 1.0), 10)
    basis = build_basis(3)
    u = interpolate(lambda x: x ** 3, mesh, basis)
    rec = recover_derivatives_1d(u, mesh, basis, side, 4)
    assert abs(rec.u_x - 3.0 * xb * xb) < 1e-12
    assert abs(rec.u_xx - 6.0 * xb) < 1e-12
    assert abs(rec.u_xxx - 6.0) < 1e-11
    assert abs(rec.u_xxx_fd - 6.0) < 1e-10
    assert abs(rec.u_xxxx) < 1e-10
    assert abs(rec.u_xxxxx) < 1e-9


def test_recovered_third_derivative_converges():
    # the differenced u_xxx is consistent: error shrinks ~2x per refinement
    basis = build_basis(2)
    errs = []
    for n in (40, 80):
        mesh = build_mesh((-1.0, 1.0), n)
        u = interpolate(np.sin, mesh, basis)
        rec = recover_derivatives_1d(u, mesh, basis, 'west', 3)
        errs.append(abs(rec.u_xxx - (-np.cos(-1.0))))
    assert 1.5 < errs[0] / errs[1] < 3.0


_POLY_CASES = [
    ("x2y", lambda x, y: x * x * y,
     dict(u_x=lambda x, y: 2 * x * y, u_y=lambda x, y: x * x,
          u_xx=lambda x, y: 2 * y, u_yy=lambda x, y: 0 * x,
          u_xy=lambda x, y: 2 * x, u_xxy=lambda x, y: 2 + 0 * x,
          u_yyx=lambda x, y: 0 * x, u_xxx=lambda x, y: 0 * x,
          u_yyy=lambda x, y: 0 * x)),
    ("x+y", lambda x, y: x + y,
     dict(u_x=lambda x, y: 1 + 0 * x, u_y=lambda x, y: 1 + 0 * x,
          u_xx=lambda x, y: 0 * x, u_yy=lambda x, y: 0 * x,
          u_xy=lambda x, y: 0 * x, u_xxy=lambda x, y: 0 * x,
          u_yyx=lambda x, y: 0 * x, u_xxx=lambda x, y: 0 * x,
          u_yyy=lambda x, y: 0 * x)),
    ("xy2", lambda x, y: x * y * y,
     dict(u_x=lambda x, y: y * y, u_y=lambda x, y: 2 * x * y,
          u_xx=lambda x, y: 0 * x, u_yy=lambda x, y: 2 * x,
          u_xy=lambda x, y: 2 * y, u_xxy=lambda x, y: 0 * x,
          u_yyx=lambda x, y: 2 + 0 * x, u_xxx=lambda x, y: 0 * x,
          u_yyy=lambda x, y: 0 * x)),
]


@pytest.mark.parametrize("name,f,derivs", _POLY_CASES,
                         ids=[c[0] for c in _POLY_CASES])
@pytest.mark.parametrize("face", ["west", "east", "south", "north"])
def test_face_recovery_exact_on_low_polynomials(face, name, f, derivs):
    basis = build_basis(2)
    mesh = build_mesh(((-1.0, 1.0), (-1.0, 1.0)), (6, 5))
    X, Y = mesh.node_coords(basis)
    rec = recover_mixed_derivatives_2d(f(X, Y), mesh, basis, face)
    if face in ('west', 'east'):
        xs = np.full_like(mesh.y.node_coords(basis),
                          mesh.x.a if face == 'west' else mesh.x.b)
        ys = mesh.y.node_coords(basis)
    else:
        xs = mesh.x.node_coords(basis)
        ys = np.full_like(xs, mesh.y.a if face == 'south' else mesh.y.b)
    for key, fn in derivs.items():
        got = getattr(rec, key)
        want = np.broadcast_to(np.asarray(fn(xs, ys), float), got.shape)
        assert np.max(np.abs(got - want)) < 1e-9, (face, key)


def test_recovery_rejects_bad_requests():
    mesh = build_mesh((-1.0, 1.0), 10)
    basis = build_basis(2)
    with pytest.raises(ValueError, match="side"):
        EdgeDerivatives1D(mesh, basis, 'top', 3)
    with pytest.raises(ValueError, match="scheme_order"):
        EdgeDerivatives1D(mesh, basis, 'west', 5)
    with pytest.raises(ValueError, match=">= 3 cells"):
        EdgeDerivatives1D(build_mesh((-1.0, 1.0), 2), basis, 'west', 3)
    with pytest.raises(ValueError, match=">= 5 cells"):
        EdgeDerivatives1D(build_mesh((-1.0, 1.0), 4), build_basis(3),
                          'west', 4)


# -- hand-expanded stage values as oracles --------------------------------------

def _drive_endpoint(prob, x, variant, tau, rec, om0, omt, t=0.7):
    """Feed a corrector injected traces/derivatives; return stages 1..3."""
    corr = EndpointCorrector1D(prob, ARK3, x, 3, variant)
    samples = {'om': [om0] * 4, 'omt': list(omt)}
    if prob.p is not None and prob.p_const is None:
        tarr = t + tau * np.asarray(ARK3.c)
        samples['p'] = [float(prob.p(x, tv)) for tv in tarr]
        samples['px'] = [float(prob.p_x(x, tv)) for tv in tarr]
    corr.begin_values(rec, t, tau, samples)
    out = []
    for i in range(1, 4):
        out.append(corr.stage_value(i))
        if variant == 'stagewise' and i < 3:
            # observed stage derivatives enter the recursion at O(tau); the
            # step-start values are consistent to that order
            corr.observe_values(i, rec)
    return out, samples


def _random_states(seed, count):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield (rng.standard_normal(), rng.standard_normal(4),
               rng.standard_normal(3))


@pytest.mark.parametrize("variant", ["stagewise", "anchored"])
def test_endpoint_stages_match_hand_expansion_linear(variant):
    # stage 1 is the same algebra (any tau); stages 2-3 differ by O(tau^3),
    # invisible at tau = 2e-5
    prob = builtin_problem('heat1d')
    C, D = 0.1, 2.0
    for x in (-1.0, 1.0):
        for om0, omt, (ux, uxx, uxxx) in _random_states(3, 60):
            rec = BoundaryDerivatives(u_x=ux, u_xx=uxx, u_xxx=uxxx)
            got, _ = _drive_endpoint(prob, x, variant, 2e-2, rec, om0, omt)
            want = cf.linear_heat_stages(C, D, 2e-2, om0, omt, ux, uxx, uxxx)
            assert abs(got[0] - want[0]) < 1e-12
            got, _ = _drive_endpoint(prob, x, variant, 2e-5, rec, om0, omt)
            want = cf.linear_heat_stages(C, D, 2e-5, om0, omt, ux, uxx, uxxx)
            for g, w in zip(got, want):
                assert abs(g - w) < 1e-12


@pytest.mark.parametrize("variant", ["stagewise", "anchored"])
def test_endpoint_stages_match_hand_expansion_quadratic_flux(variant):
    prob = builtin_problem('burgers1d')
    for x in (-1.0, 1.0):
        for om0, omt, (ux, uxx, uxxx) in _random_states(5, 60):
            rec = BoundaryDerivatives(u_x=ux, u_xx=uxx, u_xxx=uxxx)
            got, samples = _drive_endpoint(prob, x, variant, 2e-2, rec,
                                           om0, omt)
            want = cf.quadratic_flux_stages(2.0, 2e-2, om0, omt,
                                            samples['p'], samples['px'][0],
                                            ux, uxx, uxxx)
            assert abs(got[0] - want[0]) < 1e-12
            got, samples = _drive_endpoint(prob, x, variant, 2e-5, rec,
                                           om0, omt)
            want = cf.quadratic_flux_stages(2.0, 2e-5, om0, omt,
                                            samples['p'], samples['px'][0],
                                            ux, uxx, uxxx)
            for g, w in zip(got, want):
                assert abs(g - w) < 1e-12


_FACE_FIELDS = 'u_x u_y u_xx u_yy u_xy u_xxx u_yyy u_xxy u_yyx'.split()


def _face_setup(face, mesh, basis):
    yc = mesh.y.node_coords(basis)
    xc = mesh.x.node_coords(basis)
    if face == 'west':
        return np.full_like(yc, mesh.x.a), yc
    if face == 'east':
        return np.full_like(yc, mesh.x.b), yc
    if face == 'south':
        return xc, np.full_like(xc, mesh.y.a)
    return xc, np.full_like(xc, mesh.y.b)


@pytest.mark.parametrize("face", ["west", "east", "south", "north"])
def test_face_stages_match_hand_expansion(face):
    from ldgimex.treatment import EdgeDerivatives2D
    prob = builtin_problem('heat2d')
    C, D = 0.1, 1.0
    basis = build_basis(2)
    mesh = build_mesh(prob.bounds, (8, 6))
    xs, ys = _face_setup(face, mesh, basis)
    rng = np.random.default_rng(9)
    t = 0.4
    for _ in range(2):   # 2 draws x >= 18 points x 3 stages
        rec = BoundaryDerivatives(**{f: rng.standard_normal(xs.shape)
                                     for f in _FACE_FIELDS})
        for tau, stages_checked in ((2e-2, (1,)), (2e-5, (1, 2, 3))):
            corr = FaceCorrector2D(prob, ARK3, xs, ys,
                                   EdgeDerivatives2D(mesh, basis, face))
            corr.begin_values(rec, t, tau)
            om0 = np.broadcast_to(
                np.asarray(prob.omega(xs, ys, t), float), xs.shape)
            omt = [np.broadcast_to(
                np.asarray(prob.omega_t(xs, ys, t + ci * tau), float),
                xs.shape) for ci in ARK3.c]
            want = cf.linear_heat_2d_stages(C, D, tau, om0, omt, rec)
            for i in range(1, 4):
                got = corr.stage_value(i)
                if i in stages_checked:
                    assert np.max(np.abs(got - want[i - 1])) < 1e-12
                if i < 3:
                    corr.observe_values(i, rec)


def test_late_stage_gap_to_hand_expansion_is_cubic():
    # the documented structural O(tau^3) difference at stages 2-3
    prob = builtin_problem('heat1d')
    om0, omt = 0.6, np.array([0.3, -0.8, 0.5, 1.1])
    ux, uxx, uxxx = 0.9, -1.2, 0.7
    rec = BoundaryDerivatives(u_x=ux, u_xx=uxx, u_xxx=uxxx)
    gaps = []
    for tau in (1e-2, 5e-3, 2.5e-3):
        got, _ = _drive_endpoint(prob, -1.0, 'anchored', tau, rec, om0, omt)
        want = cf.linear_heat_stages(0.1, 2.0, tau, om0, omt, ux, uxx, uxxx)
        gaps.append(max(abs(got[1] - want[1]), abs(got[2] - want[2])))
    slopes = [np.log2(gaps[i - 1] / gaps[i]) for i in (1, 2)]
    assert min(slopes) >= 2.9, (gaps, slopes)


# -- structural properties -------------------------------------------------------

@pytest.mark.parametrize("variant", ["stagewise", "anchored"])
def test_boundary_ode_degeneracy(variant):
    # no convection, no source, data linear in t: every treated stage value
    # must equal the trace at its own stage time
    aa, bb = 0.7, -0.3
    ode = ProblemSpec(
        'ode', 1, (-1.0, 1.0), 1.5, 1.0, 0.25, 2,
        f=lambda u: 0.0 * u, fprime=lambda u: 0.0 * u,
        fsecond=lambda u: 0.0 * u, fprime_const=0.0,
        exact=lambda x, t: (aa + bb * t) + 0.0 * x,
        omega_t=lambda x, t: bb + 0.0 * x,
        omega_tt=lambda x, t: 0.0 * x)
    basis = build_basis(2)
    mesh = build_mesh((-1.0, 1.0), 10)
    ctrl = treated_boundary(ode, mesh, basis, ARK3, variant=variant)
    u0 = interpolate(lambda x: aa + 0 * x, mesh, basis)
    t0, tau = 0.3, 0.17
    ctrl.begin_step(u0, t0, tau)
    for i in range(ARK3.stages):
        bd = ctrl.stage_data(i)
        ti = t0 + ARK3.c[i] * tau
        assert abs(bd.west - (aa + bb * ti)) < 1e-13
        assert abs(bd.east - (aa + bb * ti)) < 1e-13
        ctrl.observe_stage(i, u0)


@pytest.mark.parametrize("variant", ["stagewise", "anchored"])
def test_treated_values_consistent_to_second_order(variant):
    # |treated stage value - omega(t^{n,i})| must shrink as O(tau^2): the
    # whole point is replacing the naive trace by the scheme's own O(tau^2)
    # stage approximation
    prob = builtin_problem('heat1d')
    basis = build_basis(prob.degree)
    mesh = build_mesh(prob.bounds, 40)
    t0 = 0.6
    u0 = interpolate(lambda x: prob.exact(x, t0), mesh, basis)
    for stage in (1, 2, 3):
        errs = []
        for tau in (0.02, 0.01, 0.005):
            ctrl = treated_boundary(prob, mesh, basis, ARK3, variant=variant)
            ctrl._fast = False
            ctrl.begin_step(u0, t0, tau)
            worst = 0.0
            for i in range(ARK3.stages):
                bd = ctrl.stage_data(i)
                ti = t0 + ARK3.c[i] * tau
                if i == stage:
                    worst = max(abs(bd.west - prob.omega(mesh.a, ti)),
                                abs(bd.east - prob.omega(mesh.b, ti)))
                ctrl.observe_stage(i, u0)
            errs.append(worst)
        slopes = [np.log2(errs[i - 1] / errs[i]) for i in (1, 2)]
        assert min(slopes) >= 1.9, (stage, errs, slopes)


def test_variants_agree_to_third_order():
    # anchored and stagewise solutions differ by O(tau^3) over a fixed mesh
    prob = builtin_problem('heat1d')
    basis = build_basis(prob.degree)
    mesh = build_mesh(prob.bounds, 10)
    u0 = interpolate(lambda x: prob.exact(x, 0.0), mesh, basis)
    diffs = []
    for tau in (0.02, 0.01, 0.005):
        us = {}
        for variant in ('anchored', 'stagewise'):
            ctrl = treated_boundary(prob, mesh, basis, ARK3, variant=variant)
            integ = ImexIntegrator(prob, mesh, basis, tableau=ARK3,
                                   controller=ctrl)
            us[variant], _ = integ.integrate(u0, 0.0, 0.4, tau)
        diffs.append(float(np.max(np.abs(us['anchored'] - us['stagewise']))))
    orders = [np.log2(diffs[i - 1] / diffs[i]) for i in (1, 2)]
    assert min(orders) >= 3.0, (diffs, orders)


def test_tangential_invariance_reduces_to_endpoint_values():
    # data constant along a face: the face treatment must reproduce the 1D
    # endpoint treatment at every point of that face
    C, D, q = 0.1, 1.0, 1.0

    def g(x, t):
        return np.exp(-t) * np.sin(x + C * t)

    def g_t(x, t):
        return np.exp(-t) * (C * np.cos(x + C * t) - np.sin(x + C * t))

    pb2 = ProblemSpec(
        'strip', 2, ((-1.0, 1.0), (-1.0, 1.0)), D, 1.0, 0.2, 2,
        f1=lambda u: -C * u, f2=lambda u: -C * u,
        f1prime=lambda u: -C * np.ones_like(np.asarray(u, float)),
        f2prime=lambda u: -C * np.ones_like(np.asarray(u, float)),
        fprime_const=-C,
        p=lambda x, y, t: q * np.ones_like(np.asarray(x, float)), p_const=q,
        exact=lambda x, y, t: g(x, t) + 0.0 * y,
        omega_t=lambda x, y, t: g_t(x, t) + 0.0 * y)
    pb1 = ProblemSpec(
        'line', 1, (-1.0, 1.0), D, 1.0, 0.2, 2,
        f=lambda u: -C * u,
        fprime=lambda u: -C * np.ones_like(np.asarray(u, float)),
        fprime_const=-C,
        p=lambda x, t: q * np.ones_like(np.asarray(x, float)), p_const=q,
        exact=g, omega_t=g_t)
    basis = build_basis(2)
    mesh2 = build_mesh(pb2.bounds, (6, 5))
    mesh1 = build_mesh(pb1.bounds, 6)
    u2 = interpolate(lambda x, y: pb2.exact(x, y, 0.3), mesh2, basis)
    u1 = interpolate(lambda x: g(x, 0.3), mesh1, basis)
    ctrl2 = treated_boundary(pb2, mesh2, basis, ARK3, variant='alg3')
    ctrl1 = treated_boundary(pb1, mesh1, basis, ARK3)
    tau = 0.05
    ctrl2.begin_step(u2, 0.3, tau)
    ctrl1.begin_step(u1, 0.3, tau)
    for i in range(ARK3.stages):
        bd2 = ctrl2.stage_data(i)
        bd1 = ctrl1.stage_data(i)
        assert np.max(np.abs(bd2.west - bd1.west)) < 1e-12
        assert np.max(np.abs(bd2.east - bd1.east)) < 1e-12
        ctrl2.observe_stage(i, u2)
        ctrl1.observe_stage(i, u1)


# -- compiled linear stage maps ---------------------------------------------------

@pytest.mark.parametrize("name,order", [("heat1d", 3), ("heat1d_o4", 4)])
@pytest.mark.parametrize("variant", ["stagewise", "anchored"])
def test_compiled_stage_map_equals_generic_recursion(name, order, variant):
    prob = builtin_problem(name)
    tab = builtin_tableau(prob.tableau)
    rng = np.random.default_rng(order * 7 + len(variant))
    for tau in (0.037, 1.3e-4):
        m = _LinearStageMap(prob, tab, order, variant, tau)
        corr = EndpointCorrector1D(prob, tab, 0.0, order, variant)
        for _ in range(25):
            vec = rng.standard_normal(m.size).tolist()
            generic = m._probe(corr, vec, tau)
            for i in range(1, tab.stages):
                g = generic[i - 1]
                c = m.value(vec, i)
                assert abs(c - g) <= 1e-13 * max(1.0, abs(g)), (tau, i)


@pytest.mark.parametrize("name", ["heat1d", "heat1d_o4"])
def test_fast_controller_path_matches_generic(name):
    prob = builtin_problem(name)
    basis = build_basis(prob.degree)
    tab = builtin_tableau(prob.tableau)
    mesh = build_mesh(prob.bounds, 10)
    u0 = interpolate(lambda x: prob.exact(x, 0.0), mesh, basis)
    outs = {}
    for fast in (True, False):
        ctrl = treated_boundary(prob, mesh, basis, tab)
        ctrl._fast = fast
        integ = ImexIntegrator(prob, mesh, basis, tableau=tab,
                               controller=ctrl)
        outs[fast], _ = integ.integrate(u0, 0.0, 1.0, 0.02)
    assert np.max(np.abs(outs[True] - outs[False])) < 1e-13


def test_nonlinear_problems_use_the_generic_path():
    prob = builtin_problem('burgers1d')
    basis = build_basis(prob.degree)
    mesh = build_mesh(prob.bounds, 8)
    ctrl = treated_boundary(prob, mesh, basis, ARK3)
    assert not ctrl._fast
    with pytest.raises(ValueError, match="constant"):
        _LinearStageMap(prob, ARK3, 3, 'stagewise', 0.01)


# -- configuration errors ----------------------------------------------------------

def test_variant_aliases():
    prob = builtin_problem('heat1d')
    basis = build_basis(2)
    mesh = build_mesh(prob.bounds, 8)
    assert treated_boundary(prob, mesh, basis, ARK3,
                            variant='alg1').west._anchored
    assert not treated_boundary(prob, mesh, basis, ARK3,
                                variant='alg2').west._anchored
    assert not treated_boundary(prob, mesh, basis, ARK3,
                                variant='alg3').west._anchored
    with pytest.raises(ValueError, match="unknown treatment variant"):
        treated_boundary(prob, mesh, basis, ARK3, variant='alg9')


def test_unsupported_configurations_raise():
    heat = builtin_problem('heat1d')
    heat2 = builtin_problem('heat2d')
    burg = builtin_problem('burgers1d')
    mesh1 = build_mesh(heat.bounds, 8)
    mesh2 = build_mesh(heat2.bounds, (6, 6))
    with pytest.raises(ValueError, match="k = 2 or 3"):
        treated_boundary(heat, mesh1, build_basis(1), ARK3)
    with pytest.raises(ValueError, match="stagewise variant only"):
        treated_boundary(heat2, mesh2, build_basis(2), ARK3, variant='alg1')
    with pytest.raises(ValueError, match="k = 2"):
        treated_boundary(heat2, mesh2, build_basis(3), ARK3)
    # fourth order needs a linear flux to close d/dt psi_x in space
    with pytest.raises(ValueError, match="fprime_const"):
        treated_boundary(burg, mesh1, build_basis(3), ARK3)
    nod = ProblemSpec('nod', 1, (-1.0, 1.0), 1.0, 1.0, 0.25, 2,
                      f=lambda u: -u, fprime_const=-1.0,
                      exact=lambda x, t: 0.0 * x)
    with pytest.raises(ValueError, match="omega and omega_t"):
        treated_boundary(nod, mesh1, build_basis(2), ARK3)
    nopx = ProblemSpec('nopx', 1, (-1.0, 1.0), 1.0, 1.0, 0.25, 2,
                       f=lambda u: -u, fprime_const=-1.0,
                       p=lambda x, t: np.cos(x),
                       exact=lambda x, t: 0.0 * x,
                       omega_t=lambda x, t: 0.0 * x)
    with pytest.raises(ValueError, match="p_x"):
        treated_boundary(nopx, mesh1, build_basis(2), ARK3)


def test_stage_protocol_enforced():
    prob = builtin_problem('heat1d')
    corr = EndpointCorrector1D(prob, ARK3, -1.0, 3)
    with pytest.raises(RuntimeError, match="begin a step"):
        corr.stage_value(1)
    rec = BoundaryDerivatives(u_x=0.1, u_xx=0.2, u_xxx=0.3)
    corr.begin_values(rec, 0.0, 0.01,
                      {'om': [1.0] * 4, 'omt': [0.0] * 4})
    with pytest.raises(RuntimeError, match="in order"):
        corr.stage_value(2)
    corr.stage_value(1)
    with pytest.raises(RuntimeError, match="observed in order"):
        corr.observe_values(2, rec)


# -- stage-value tracing -------------------------------------------------------------

def test_trace_rows_1d():
    prob = builtin_problem('heat1d')
    basis = build_basis(prob.degree)
    mesh = build_mesh(prob.bounds, 8)
    ctrl = treated_boundary(prob, mesh, basis, ARK3)
    ctrl.trace = []
    integ = ImexIntegrator(prob, mesh, basis, tableau=ARK3, controller=ctrl)
    u0 = interpolate(lambda x: prob.exact(x, 0.0), mesh, basis)
    integ.integrate(u0, 0.0, 0.1, 0.05)
    rows = ctrl.trace
    assert len(rows) == 2 * ARK3.stages * 2      # steps x stages x sides
    t = 0.0
    for k in range(0, len(rows), 2):
        i, side, x, naive, treated = rows[k]
        assert side == 'west' and x == mesh.a
        assert rows[k + 1][1] == 'east' and rows[k + 1][2] == mesh.b
        ts = t + ARK3.c[i] * 0.05
        assert abs(naive - prob.omega(mesh.a, ts)) < 1e-14
        if i == 0:
            assert treated == naive
        else:
            assert treated != naive
        if i == ARK3.stages - 1:
            t += 0.05


def test_trace_rows_2d():
    prob = builtin_problem('heat2d')
    basis = build_basis(prob.degree)
    mesh = build_mesh(prob.bounds, (4, 3))
    ctrl = treated_boundary(prob, mesh, basis, builtin_tableau('ark3'))
    ctrl.trace = []
    integ = ImexIntegrator(prob, mesh, basis, controller=ctrl)
    u0 = interpolate(lambda x, y: prob.exact(x, y, 0.0), mesh, basis)
    integ.integrate(u0, 0.0, 0.05, 0.05)
    p = basis.p
    per_stage = 2 * (mesh.m * p) + 2 * (mesh.n * p)
    assert len(ctrl.trace) == ARK3.stages * per_stage
    for i, face, (xv, yv), naive, treated in ctrl.trace:
        assert face in ('west', 'east', 'south', 'north')
        assert np.isfinite(naive) and np.isfinite(treated)
