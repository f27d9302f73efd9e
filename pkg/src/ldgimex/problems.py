"""Problem registry: fluxes, diffusion, sources, boundary data, exact solutions."""

import numpy as np


class ProblemSpec:
    """Definition of one convection-diffusion-reaction problem.

    The PDE is u_t + div F(u) = div(G(grad u)) + h(u, x, t) with linear
    diffusion G = D grad u and Dirichlet data omega on the whole boundary.

    1D fields (dim == 1):
        f, fprime, fsecond: convective flux and derivatives, callables of u.
        d_coef: diffusion coefficient D >= 0.
        p, p_x: source factor with h = p(x, t) * u, or None for h == 0.
        exact: exact solution u(x, t) or None.
        u0: initial data u(x); defaults to exact at t = 0 when that exists.
        omega, omega_t, omega_tt: boundary trace and time derivatives (x, t).

    2D fields (dim == 2): f1/f2 flux pairs with derivatives, p(x, y, t) with
    p_x and p_y, exact/omega of (x, y, t).

    fprime_const / p_const hold the scalar values of f' and p when those are
    constant (needed by the fourth-order Cauchy-Kovalevskaya substitution),
    else None.
    """

    def __init__(self, name, dim, bounds, d_coef, T, cfl, degree,
                 tableau='ark3', **kw):
        self.name = name
        self.dim = dim
        self.bounds = bounds
        self.d_coef = float(d_coef)
        self.T = float(T)
        self.cfl = float(cfl)
        self.degree = int(degree)
        self.tableau = tableau
        self.f = kw.pop('f', None)
        self.fprime = kw.pop('fprime', None)
        self.fsecond = kw.pop('fsecond', None)
        self.f1 = kw.pop('f1', None)
        self.f1prime = kw.pop('f1prime', None)
        self.f1second = kw.pop('f1second', None)
        self.f2 = kw.pop('f2', None)
        self.f2prime = kw.pop('f2prime', None)
        self.f2second = kw.pop('f2second', None)
        self.p = kw.pop('p', None)
        self.p_x = kw.pop('p_x', None)
        self.p_y = kw.pop('p_y', None)
        self.exact = kw.pop('exact', None)
        self.u0 = kw.pop('u0', None)
        if self.u0 is None and self.exact is not None:
            if dim == 1:
                self.u0 = lambda x: self.exact(x, 0.0)
            else:
                self.u0 = lambda x, y: self.exact(x, y, 0.0)
        self.omega = kw.pop('omega', self.exact)
        self.omega_t = kw.pop('omega_t', None)
        self.omega_tt = kw.pop('omega_tt', None)
        self.h = kw.pop('h', None)
        self.h_x = kw.pop('h_x', None)
        self.fprime_const = kw.pop('fprime_const', None)
        self.p_const = kw.pop('p_const', None)
        if kw:
            raise TypeError("ProblemSpec: unknown fields %r" % sorted(kw))
        if self.h is None and self.p is not None:
            if dim == 1:
                self.h = lambda u, x, t: self.p(x, t) * u
            else:
                self.h = lambda u, x, y, t: self.p(x, y, t) * u

    def source(self, u, coords, t):
        """Source h evaluated nodewise; zero when the problem has none."""
        if self.h is None:
            return np.zeros_like(u)
        if self.dim == 1:
            return self.h(u, coords, t)
        return self.h(u, coords[0], coords[1], t)

    def has_source(self):
        return self.h is not None


def _heat1d():
    C, D = 0.1, 2.0

    def exact(x, t):
        return np.exp(-t) * np.sin(x + C * t)

    def omega_t(x, t):
        return np.exp(-t) * (C * np.cos(x + C * t) - np.sin(x + C * t))

    def omega_tt(x, t):
        return np.exp(-t) * ((1.0 - C * C) * np.sin(x + C * t)
                             - 2.0 * C * np.cos(x + C * t))

    return ProblemSpec(
        'heat1d', 1, (-1.0, 1.0), D, 5.0, 0.25, 2, tableau='ark3',
        f=lambda u: -C * u,
        fprime=lambda u: -C * np.ones_like(np.asarray(u, dtype=float)),
        fsecond=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        fprime_const=-C,
        p=lambda x, t: (D - 1.0) * np.ones_like(np.asarray(x, dtype=float)),
        p_x=lambda x, t: np.zeros_like(np.asarray(x, dtype=float)),
        p_const=D - 1.0,
        exact=exact, omega_t=omega_t, omega_tt=omega_tt)


def _burgers1d():
    D = 2.0

    def exact(x, t):
        return np.exp(-t) * np.sin(x)

    def omega_t(x, t):
        return -np.exp(-t) * np.sin(x)

    def omega_tt(x, t):
        return np.exp(-t) * np.sin(x)

    return ProblemSpec(
        'burgers1d', 1, (-1.0, 1.0), D, 5.0, 0.4, 2, tableau='ark3',
        f=lambda u: 0.5 * u * u,
        fprime=lambda u: np.asarray(u, dtype=float),
        fsecond=lambda u: np.ones_like(np.asarray(u, dtype=float)),
        p=lambda x, t: D - 1.0 + np.exp(-t) * np.cos(x),
        p_x=lambda x, t: -np.exp(-t) * np.sin(x),
        exact=exact, omega_t=omega_t, omega_tt=omega_tt)


def _heat2d():
    C, D = 0.1, 1.0

    def exact(x, y, t):
        return np.exp(-t) * np.sin(x + C * t) * np.cos(y + C * t)

    def omega_t(x, y, t):
        sx, cx = np.sin(x + C * t), np.cos(x + C * t)
        sy, cy = np.sin(y + C * t), np.cos(y + C * t)
        return np.exp(-t) * (-sx * cy + C * cx * cy - C * sx * sy)

    return ProblemSpec(
        'heat2d', 2, ((-1.0, 1.0), (-1.0, 1.0)), D, 5.0, 0.2, 2,
        tableau='ark3',
        f1=lambda u: -C * u,
        f1prime=lambda u: -C * np.ones_like(np.asarray(u, dtype=float)),
        f1second=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        f2=lambda u: -C * u,
        f2prime=lambda u: -C * np.ones_like(np.asarray(u, dtype=float)),
        f2second=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        fprime_const=-C,
        p=lambda x, y, t: (2.0 * D - 1.0) * np.ones_like(np.asarray(x, dtype=float)),
        p_x=lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float)),
        p_y=lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float)),
        p_const=2.0 * D - 1.0,
        exact=exact, omega_t=omega_t)


def _heat1d_o4():
    C, D = 0.1, 1.0

    def exact(x, t):
        return np.exp(-t) * np.sin(x + C * t)

    def omega_t(x, t):
        return np.exp(-t) * (C * np.cos(x + C * t) - np.sin(x + C * t))

    def omega_tt(x, t):
        return np.exp(-t) * ((1.0 - C * C) * np.sin(x + C * t)
                             - 2.0 * C * np.cos(x + C * t))

    return ProblemSpec(
        'heat1d_o4', 1, (-1.0, 1.0), D, 5.0, 0.25, 3, tableau='ark4',
        f=lambda u: -C * u,
        fprime=lambda u: -C * np.ones_like(np.asarray(u, dtype=float)),
        fsecond=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        fprime_const=-C,
        p=None, p_x=None, p_const=0.0,
        exact=exact, omega_t=omega_t, omega_tt=omega_tt)


_BUILTIN = {
    'heat1d': _heat1d,
    'burgers1d': _burgers1d,
    'heat2d': _heat2d,
    'heat1d_o4': _heat1d_o4,
}


def builtin_problem(name):
    """One of the four builtin problems: heat1d, burgers1d, heat2d, heat1d_o4."""
    try:
        factory = _BUILTIN[name]
    except KeyError:
        raise ValueError("unknown problem %r; choose from %s"
                         % (name, sorted(_BUILTIN))) from None
    return factory()


def residual_check(spec, samples=20, step=1e-5, seed=0):
    """Max |PDE residual| of the exact solution at random space-time points.

    All derivatives are central differences with the given step, so a correct
    problem definition scores around step^2 and a wrong one scores O(1).
    """
    if spec.exact is None:
        raise ValueError("residual_check needs an exact solution")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        t = rng.uniform(0.1, 2.0)
        if spec.dim == 1:
            a, b = spec.bounds
            x = rng.uniform(a + 0.1, b - 0.1)
            u = spec.exact
            u_t = (u(x, t + step) - u(x, t - step)) / (2 * step)
            u_x = (u(x + step, t) - u(x - step, t)) / (2 * step)
            u_xx = (u(x + step, t) - 2 * u(x, t) + u(x - step, t)) / step ** 2
            conv = spec.fprime(u(x, t)) * u_x if spec.f is not None else 0.0
            src = spec.h(u(x, t), x, t) if spec.h is not None else 0.0
            res = u_t + conv - spec.d_coef * u_xx - src
        else:
            (a1, b1), (a2, b2) = spec.bounds
            x = rng.uniform(a1 + 0.1, b1 - 0.1)
            y = rng.uniform(a2 + 0.1, b2 - 0.1)
            u = spec.exact
            u_t = (u(x, y, t + step) - u(x, y, t - step)) / (2 * step)
            u_x = (u(x + step, y, t) - u(x - step, y, t)) / (2 * step)
            u_y = (u(x, y + step, t) - u(x, y - step, t)) / (2 * step)
            u_xx = (u(x + step, y, t) - 2 * u(x, y, t) + u(x - step, y, t)) / step ** 2
            u_yy = (u(x, y + step, t) - 2 * u(x, y, t) + u(x, y - step, t)) / step ** 2
            conv = spec.f1prime(u(x, y, t)) * u_x + spec.f2prime(u(x, y, t)) * u_y
            src = spec.h(u(x, y, t), x, y, t) if spec.h is not None else 0.0
            res = u_t + conv - spec.d_coef * (u_xx + u_yy) - src
        worst = max(worst, abs(float(res)))
    return worst
