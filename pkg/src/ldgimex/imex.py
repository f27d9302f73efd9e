"""IMEX Runge-Kutta time integration for the LDG semidiscretization.

The stiff diffusive part L u + g_b enters through a diagonally implicit
tableau, the convective/source part xi through the paired explicit tableau:

    (I - a_ii tau L) u^{n,i} = u^n + tau sum_{j<i} (at_ij xi^j + a_ij psi^j)
                                    + a_ii tau g_b(omega^i)
    u^{n+1} = u^n + tau sum_i (bt_i xi^i + b_i psi^i)

with psi^j = L u^j + g_b(omega^j).  Boundary values omega^i come from a
pluggable controller so the intermediate-stage treatment can replace the
naive pointwise samples.  Sparse LU factors of (I - a_ii tau L) are cached
per coefficient, so a fixed step size factors each distinct diagonal entry
once per integration.
"""

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operators import BoundaryData, build_diffusion, explicit_rhs


class ImexTableau:
    """Paired explicit/implicit Butcher tableaus sharing abscissae c."""

    def __init__(self, name, c, a_ex, a_im, b_ex, b_im):
        self.name = name
        self.c = np.asarray(c, dtype=float)
        self.a_ex = np.asarray(a_ex, dtype=float)
        self.a_im = np.asarray(a_im, dtype=float)
        self.b_ex = np.asarray(b_ex, dtype=float)
        self.b_im = np.asarray(b_im, dtype=float)
        self.stages = len(self.c)


def _ark3():
    # Third-order, four-stage pair with ESDIRK implicit part (gamma is the
    # middle root of 6 x^3 - 18 x^2 + 9 x - 1).
    g = 1767732205903.0 / 4055673282236.0
    beta1 = -1.5 * g * g + 4.0 * g - 0.25
    beta2 = 1.5 * g * g - 5.0 * g + 1.25
    alpha1 = -0.35
    alpha2 = (1.0 / 3.0 - 2.0 * g * g - 2.0 * beta2 * alpha1 * g) / (g * (1.0 - g))
    c = [0.0, g, (1.0 + g) / 2.0, 1.0]
    a_ex = [[0.0, 0.0, 0.0, 0.0],
            [g, 0.0, 0.0, 0.0],
            [(1.0 + g) / 2.0 - alpha1, alpha1, 0.0, 0.0],
            [0.0, 1.0 - alpha2, alpha2, 0.0]]
    a_im = [[0.0, 0.0, 0.0, 0.0],
            [0.0, g, 0.0, 0.0],
            [0.0, (1.0 - g) / 2.0, g, 0.0],
            [0.0, beta1, beta2, g]]
    b = [0.0, beta1, beta2, g]
    return ImexTableau('ark3', c, a_ex, a_im, b, b)


def _ark4():
    # Fourth-order, six-stage additive pair with ESDIRK diagonal 1/4.
    c = [0.0, 0.5, 83.0 / 250.0, 31.0 / 50.0, 17.0 / 20.0, 1.0]
    a_ex = [[0.0] * 6,
            [0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
            [13861.0 / 62500.0, 6889.0 / 62500.0, 0.0, 0.0, 0.0, 0.0],
            [-116923316275.0 / 2393684061468.0,
             -2731218467317.0 / 15368042101831.0,
             9408046702089.0 / 11113171139209.0, 0.0, 0.0, 0.0],
            [-451086348788.0 / 2902428689909.0,
             -2682348792572.0 / 7519795681897.0,
             12662868775082.0 / 11960479115383.0,
             3355817975965.0 / 11060851509271.0, 0.0, 0.0],
            [647845179188.0 / 3216320057751.0,
             73281519250.0 / 8382639484533.0,
             552539513391.0 / 3454668386233.0,
             3354512671639.0 / 8306763924573.0, 4040.0 / 17871.0, 0.0]]
    a_im = [[0.0] * 6,
            [0.25, 0.25, 0.0, 0.0, 0.0, 0.0],
            [8611.0 / 62500.0, -1743.0 / 31250.0, 0.25, 0.0, 0.0, 0.0],
            [5012029.0 / 34652500.0, -654441.0 / 2922500.0,
             174375.0 / 388108.0, 0.25, 0.0, 0.0],
            [15267082809.0 / 155376265600.0, -71443401.0 / 120774400.0,
             730878875.0 / 902184768.0, 2285395.0 / 8070912.0, 0.25, 0.0],
            [82889.0 / 524892.0, 0.0, 15625.0 / 83664.0, 69875.0 / 102672.0,
             -2260.0 / 8211.0, 0.25]]
    b = [82889.0 / 524892.0, 0.0, 15625.0 / 83664.0, 69875.0 / 102672.0,
         -2260.0 / 8211.0, 0.25]
    return ImexTableau('ark4', c, a_ex, a_im, b, b)


_BUILTIN = {'ark3': _ark3, 'ark4': _ark4}


def builtin_tableau(name):
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise ValueError("unknown tableau %r (choose from %s)"
                         % (name, sorted(_BUILTIN)))


def validate_tableau(tab, tol=1e-10):
    """Check structure and basic order conditions; raise ValueError on failure."""
    s = tab.stages
    if s == 0:
        return True
    for arr, shape, label in ((tab.a_ex, (s, s), 'a_ex'),
                              (tab.a_im, (s, s), 'a_im'),
                              (tab.b_ex, (s,), 'b_ex'),
                              (tab.b_im, (s,), 'b_im')):
        if arr.shape != shape:
            raise ValueError("%s has shape %s, expected %s"
                             % (label, arr.shape, shape))
    if np.max(np.abs(np.triu(tab.a_ex))) > tol:
        raise ValueError("explicit tableau must be strictly lower triangular")
    if np.max(np.abs(np.triu(tab.a_im, 1))) > tol:
        raise ValueError("implicit tableau must be lower triangular")
    if abs(tab.a_im[0, 0]) > tol:
        raise ValueError("first implicit stage must be explicit (a_im[0,0]=0)")
    for label, a in (('a_ex', tab.a_ex), ('a_im', tab.a_im)):
        rs = a.sum(axis=1)
        bad = np.nonzero(np.abs(rs - tab.c) > tol)[0]
        if bad.size:
            raise ValueError("%s row %d sums to %.3e but c=%.3e"
                             % (label, bad[0], rs[bad[0]], tab.c[bad[0]]))
    for label, b in (('b_ex', tab.b_ex), ('b_im', tab.b_im)):
        checks = ((b.sum(), 1.0, 'sum b'),
                  ((b * tab.c).sum(), 0.5, 'sum b c'),
                  ((b * tab.c ** 2).sum(), 1.0 / 3.0, 'sum b c^2'))
        for got, want, what in checks:
            if abs(got - want) > tol:
                raise ValueError("%s fails %s: %.15g != %.15g"
                                 % (label, what, got, want))
    return True


class NaiveBoundary:
    """Boundary controller sampling omega pointwise at the stage times."""

    def __init__(self, problem, mesh, basis, tableau):
        self.problem = problem
        self.mesh = mesh
        self.c = tableau.c
        if mesh.dim == 1:
            self._xpair = np.array([[mesh.a], [mesh.b]])
            self._carr = np.asarray(tableau.c, dtype=float)
            self._vals = None
            self._pre = None
        else:
            yc = mesh.y.node_coords(basis)
            xc = mesh.x.node_coords(basis)
            self._xw = np.full_like(yc, mesh.x.a)
            self._xe = np.full_like(yc, mesh.x.b)
            self._yc = yc
            self._xc = xc
            self._ys = np.full_like(xc, mesh.y.a)
            self._yn = np.full_like(xc, mesh.y.b)
        self.t = 0.0
        self.tau = 0.0

    def prepare(self, t0, tau, nsteps):
        """Sample the boundary trace for a whole fixed-step schedule at once.

        Steps whose start time falls off this grid (the shortened final
        step, or integrations restarted elsewhere) fall back to per-step
        sampling in begin_step.  The grid arithmetic t0 + m*tau matches
        integrate() exactly, so cached and direct values agree bitwise.
        """
        if self.mesh.dim != 1 or nsteps < 1:
            return
        tgrid = ((t0 + tau * np.arange(nsteps))[:, None]
                 + tau * self._carr[None, :])
        v = np.asarray(self.problem.omega(self._xpair[:, :, None], tgrid),
                       dtype=float)
        v = np.broadcast_to(v, (2,) + tgrid.shape)
        self._pre = (t0, tau, v.transpose(1, 0, 2).tolist())

    def begin_step(self, u, t, tau):
        self.t = t
        self.tau = tau
        if self.mesh.dim == 1:
            pre = self._pre
            if pre is not None and tau == pre[1]:
                m = int(round((t - pre[0]) / tau))
                if 0 <= m < len(pre[2]) and pre[0] + m * tau == t:
                    self._vals = pre[2][m]
                    return
            tarr = t + tau * self._carr
            v = np.asarray(self.problem.omega(self._xpair, tarr), dtype=float)
            if v.shape != (2, tarr.shape[0]):
                v = np.broadcast_to(v, (2, tarr.shape[0]))
            self._vals = v.tolist()

    def stage_data(self, i):
        if self.mesh.dim == 1:
            return BoundaryData(west=self._vals[0][i], east=self._vals[1][i])
        ts = self.t + self.c[i] * self.tau
        omega = self.problem.omega
        return BoundaryData(west=omega(self._xw, self._yc, ts),
                            east=omega(self._xe, self._yc, ts),
                            south=omega(self._xc, self._ys, ts),
                            north=omega(self._xc, self._yn, ts))

    def observe_stage(self, i, u_stage):
        pass


class TimeStepState:
    """Per-step record of stage fields and tendencies (for tests/tracing)."""

    def __init__(self, t, tau):
        self.t = t
        self.tau = tau
        self.stage_values = []
        self.stage_bdata = []
        self.xi = []
        self.psi = []


class ImexIntegrator:
    """Drives the IMEX scheme for one problem/mesh/basis triple."""

    def __init__(self, problem, mesh, basis, tableau=None, controller=None,
                 check_residual=False):
        self.problem = problem
        self.mesh = mesh
        self.basis = basis
        self.tableau = tableau or builtin_tableau(problem.tableau)
        validate_tableau(self.tableau)
        self.diffusion = build_diffusion(mesh, basis, problem)
        self.controller = controller or NaiveBoundary(problem, mesh, basis,
                                                      self.tableau)
        self.coords = mesh.node_coords(basis)
        self.check_residual = check_residual
        self.max_residual = 0.0
        ndof = self.diffusion.L.shape[0]
        self._eye = sp.identity(ndof, format='csc')
        self._lcsc = self.diffusion.L.tocsc()
        self._lu = {}
        tab = self.tableau
        s = tab.stages
        self._ex_terms = [[(j, tab.a_ex[i, j]) for j in range(i)
                           if tab.a_ex[i, j] != 0.0] for i in range(s)]
        self._im_terms = [[(j, tab.a_im[i, j]) for j in range(i)
                           if tab.a_im[i, j] != 0.0] for i in range(s)]
        self._bt_terms = [(i, tab.b_ex[i]) for i in range(s)
                          if tab.b_ex[i] != 0.0]
        self._b_terms = [(i, tab.b_im[i]) for i in range(s)
                         if tab.b_im[i] != 0.0]
        used_im = set(j for terms in self._im_terms for j, _ in terms)
        used_im.update(i for i, _ in self._b_terms)
        self._need_psi = [i in used_im or tab.a_im[i, i] != 0.0
                          for i in range(s)]

    def _solver(self, coef):
        lu = self._lu.get(coef)
        if lu is None:
            lu = spla.splu((self._eye - coef * self._lcsc).tocsc())
            self._lu[coef] = lu
        return lu

    def _xi(self, u_field, t, bdata):
        return self.diffusion.flatten(explicit_rhs(
            u_field, t, bdata, self.problem, self.mesh, self.basis,
            coords=self.coords))

    def step(self, u, t, tau, record=False):
        """Advance one step of size tau from (u, t); returns the new field.

        With record=True, also returns the TimeStepState holding all stage
        fields, boundary data, and tendencies.
        """
        tab = self.tableau
        diff = self.diffusion
        s = tab.stages
        uflat = diff.flatten(u)
        state = TimeStepState(t, tau) if record else None
        ctrl = self.controller
        ctrl.begin_step(u, t, tau)

        xi = [None] * s
        psi = [None] * s
        bdata0 = ctrl.stage_data(0)
        xi[0] = self._xi(u, t, bdata0)
        if self._need_psi[0]:
            psi[0] = self._lcsc @ uflat + diff.gb(bdata0)
        if record:
            state.stage_values.append(np.array(u, dtype=float))
            state.stage_bdata.append(bdata0)
            state.xi.append(xi[0])
            state.psi.append(psi[0])

        for i in range(1, s):
            bd = ctrl.stage_data(i)
            acc = uflat.copy()
            for j, cf in self._ex_terms[i]:
                acc += (tau * cf) * xi[j]
            for j, cf in self._im_terms[i]:
                acc += (tau * cf) * psi[j]
            gb_i = diff.gb(bd)
            aii = tab.a_im[i, i]
            if aii != 0.0:
                rhs = acc + (tau * aii) * gb_i
                ui = self._solver(tau * aii).solve(rhs)
                if self.check_residual:
                    res = rhs - (ui - (tau * aii) * (self._lcsc @ ui))
                    rel = np.linalg.norm(res) / max(np.linalg.norm(rhs), 1e-300)
                    self.max_residual = max(self.max_residual, rel)
            else:
                ui = acc
            ufield = diff.unflatten(ui)
            ctrl.observe_stage(i, ufield)
            if self._need_psi[i]:
                psi[i] = self._lcsc @ ui + gb_i
            xi[i] = self._xi(ufield, t + tab.c[i] * tau, bd)
            if record:
                state.stage_values.append(np.array(ufield, dtype=float))
                state.stage_bdata.append(bd)
                state.xi.append(xi[i])
                state.psi.append(psi[i])

        unew = uflat.copy()
        for i, cf in self._bt_terms:
            unew += (tau * cf) * xi[i]
        for i, cf in self._b_terms:
            unew += (tau * cf) * psi[i]
        out = diff.unflatten(unew)
        if record:
            return out, state
        return out

    def integrate(self, u0, t0, t_end, tau):
        """Step from t0 to t_end, shortening the last step to land exactly.

        Returns (u, info) where info reports the step count and the largest
        relative implicit residual seen (if residual checking is on).
        """
        u = np.array(u0, dtype=float)
        t = t0
        steps = 0
        remaining = t_end - t0
        if tau <= 0.0:
            raise ValueError("step size must be positive")
        nfull = int(math.floor(remaining / tau + 1e-12))
        prepare = getattr(self.controller, 'prepare', None)
        if prepare is not None and nfull > 0:
            prepare(t0, tau, nfull)
        for _ in range(nfull):
            u = self.step(u, t, tau)
            steps += 1
            t = t0 + steps * tau
        if t_end - t > 1e-12 * max(1.0, abs(t_end)):
            u = self.step(u, t, t_end - t)
            steps += 1
            t = t_end
        if not np.all(np.isfinite(u)):
            raise FloatingPointError("non-finite solution at t=%.6g" % t)
        return u, {'steps': steps, 'max_residual': self.max_residual,
                   't': t}


def integrate(problem, mesh, basis, u0, t0, t_end, tau, tableau=None,
              controller=None, check_residual=False):
    """One-call convenience wrapper around ImexIntegrator.integrate."""
    integ = ImexIntegrator(problem, mesh, basis, tableau=tableau,
                           controller=controller,
                           check_residual=check_residual)
    return integ.integrate(u0, t0, t_end, tau)
