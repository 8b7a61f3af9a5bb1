"""Catalogue of uniformly elliptic convex integrands on the plane.

Every integrand F here is convex, superlinear and carries batched access to
values, gradients and Hessians.  Evaluation accepts a single point ``(2,)``
or a batch ``(m, 2)`` and returns matching shapes.  Where closed forms exist
they are used; a finite-difference derivative mode is available for profiles
given only by values.

The central quantity is the ellipticity ratio
``e(z) = lmax(D2F(z)) / lmin(D2F(z))``; catalogue constructors record the
exact supremum H of this ratio whenever it is known.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class IntegrandError(ValueError):
    """Invalid integrand parameters or failed validation."""


class NormalisationError(RuntimeError):
    """The argmin search or gradient-infimum search did not converge."""


def as_points(z):
    """Coerce input to an (m, 2) float array; also report if it was a single point."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1 and z.shape[0] == 2:
        return z.reshape(1, 2), True
    if z.ndim == 2 and z.shape[1] == 2:
        return z, False
    raise IntegrandError(f"expected a point of shape (2,) or batch (m, 2), got {z.shape}")


class Integrand:
    """Base class: convex integrand with batched eval / grad / hess.

    Attributes
    ----------
    kind : str
        Catalogue kind tag (matches the config schema).
    analytic_H : float or None
        Exact ellipticity-ratio bound when known.
    minimum : ndarray or None
        Argmin of F when known.
    singular_points : tuple of ndarray
        Points to exclude (small balls around them) from Hessian sampling,
        where lmax blows up or lmin vanishes.
    constant_hessian : bool
        True when D2F does not depend on z (quadratics).
    """

    kind = "base"
    analytic_H = None
    minimum = None
    singular_points = ()
    constant_hessian = False

    def _eval(self, z):
        raise NotImplementedError

    def _grad(self, z):
        raise NotImplementedError

    def _hess(self, z):
        raise NotImplementedError

    def eval(self, z):
        zz, single = as_points(z)
        out = self._eval(zz)
        return float(out[0]) if single else out

    def grad(self, z):
        zz, single = as_points(z)
        out = self._grad(zz)
        return out[0] if single else out

    def hess(self, z):
        zz, single = as_points(z)
        out = self._hess(zz)
        return out[0] if single else out

    def hess_eig_bounds(self, z):
        """(lmin, lmax) of the Hessian at each point, closed form in 2-D."""
        zz, single = as_points(z)
        lo, hi = _kernels.sym2_eig_bounds(np.ascontiguousarray(self._hess(zz)))
        if single:
            return float(lo[0]), float(hi[0])
        return lo, hi

    def describe(self):
        return self.kind

    def __repr__(self):
        return f"<{type(self).__name__} {self.describe()}>"


# ---------------------------------------------------------------------------
# radial profiles (shared by the Uhlenbeck and Finsler kinds)
# ---------------------------------------------------------------------------

class RadialProfile:
    """Scalar profile G on [0, inf) with first and second derivative access.

    Missing derivatives are filled in by central differences with steps
    1e-6 (1+t) for G' and 1e-5 (1+t) for G''.
    """

    def __init__(self, value, deriv=None, second=None, name="profile"):
        self.value = value
        self._deriv = deriv
        self._second = second
        self.name = name

    def __call__(self, t):
        return self.value(np.asarray(t, dtype=float))

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self._deriv is not None:
            return self._deriv(t)
        h = 1e-6 * (1.0 + np.abs(t))
        return (self.value(t + h) - self.value(np.maximum(t - h, 0.0))) / (
            t + h - np.maximum(t - h, 0.0))

    def second(self, t):
        t = np.asarray(t, dtype=float)
        if self._second is not None:
            return self._second(t)
        h = 1e-5 * (1.0 + np.abs(t))
        tm = np.maximum(t - h, 0.0)
        return (self.deriv(t + h) - self.deriv(tm)) / (t + h - tm)


def power_profile(p):
    """G(t) = t^p / p, the profile of the power integrand."""
    return RadialProfile(
        lambda t: t**p / p,
        lambda t: t ** (p - 1.0),
        lambda t: (p - 1.0) * t ** (p - 2.0),
        name=f"power(p={p})",
    )


def power_sum_profile(terms):
    """G(t) = sum_i c_i t^{p_i} / p_i for positive weights c_i and p_i > 1."""
    terms = [(float(c), float(p)) for c, p in terms]
    for c, p in terms:
        if c <= 0 or p <= 1:
            raise IntegrandError("power_sum terms need c > 0 and p > 1")
    return RadialProfile(
        lambda t: sum(c * t**p / p for c, p in terms),
        lambda t: sum(c * t ** (p - 1.0) for c, p in terms),
        lambda t: sum(c * (p - 1.0) * t ** (p - 2.0) for c, p in terms),
        name="power_sum(" + ",".join(f"{c}*t^{p}" for c, p in terms) + ")",
    )


# ---------------------------------------------------------------------------
# catalogue kinds
# ---------------------------------------------------------------------------

class PowerIntegrand(Integrand):
    """F(z) = |z|^p / p with exact derivatives.

    Hessian eigenvalues are |z|^{p-2} and (p-1)|z|^{p-2}, so the ellipticity
    ratio is constant: max(p-1, 1/(p-1)).  The gradient extends continuously
    by 0 at the origin; the Hessian there is excluded from sampling unless
    p = 2.
    """

    kind = "power"

    def __init__(self, p):
        p = float(p)
        if not p > 1.0:
            raise IntegrandError(f"power exponent must exceed 1, got {p}")
        self.p = p
        self.analytic_H = max(p - 1.0, 1.0 / (p - 1.0))
        self.minimum = np.zeros(2)
        if p != 2.0:
            self.singular_points = (np.zeros(2),)

    def _eval(self, z):
        return _kernels.power_eval(np.ascontiguousarray(z), self.p)

    def _grad(self, z):
        return _kernels.power_grad(np.ascontiguousarray(z), self.p)

    def _hess(self, z):
        return _kernels.power_hess(np.ascontiguousarray(z), self.p)

    def describe(self):
        return f"power(p={self.p:g})"


class AnisotropicQuadratic(Integrand):
    """F(z) = (A z, z) / 2 for a symmetric positive definite A."""

    kind = "anisotropic_quadratic"
    constant_hessian = True

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.shape != (2, 2):
            raise IntegrandError(f"matrix must be 2x2, got {A.shape}")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise IntegrandError("matrix must be symmetric")
        lam = np.linalg.eigvalsh(A)
        if lam[0] <= 0.0:
            raise IntegrandError(f"matrix must be positive definite, eigenvalues {lam}")
        self.A = 0.5 * (A + A.T)
        self.eigenvalues = lam
        self.analytic_H = float(lam[-1] / lam[0])
        self.minimum = np.zeros(2)

    def _eval(self, z):
        return 0.5 * np.einsum("mi,ij,mj->m", z, self.A, z)

    def _grad(self, z):
        return z @ self.A.T

    def _hess(self, z):
        return np.broadcast_to(self.A, (z.shape[0], 2, 2)).copy()

    def describe(self):
        return f"aniso(A={self.A.tolist()})"


class UhlenbeckIntegrand(Integrand):
    """F(z) = G(|z|) for a validated radial profile G.

    Hessian eigenvalues are G''(r) (radial direction) and G'(r)/r
    (tangential), where r = |z|.
    """

    kind = "uhlenbeck"

    def __init__(self, profile, analytic_H=None):
        self.profile = profile
        self.analytic_H = analytic_H
        self.minimum = np.zeros(2)
        self.singular_points = (np.zeros(2),)

    def _radii(self, z):
        return np.hypot(z[:, 0], z[:, 1])

    def _eval(self, z):
        return np.asarray(self.profile(self._radii(z)), dtype=float)

    def _grad(self, z):
        r = self._radii(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0.0, self.profile.deriv(r) / np.where(r > 0, r, 1.0), 0.0)
        return s[:, None] * z

    def _hess(self, z):
        r = self._radii(z)
        m = z.shape[0]
        out = np.zeros((m, 2, 2))
        nz = r > 0.0
        if nz.any():
            rr = r[nz]
            gp = np.asarray(self.profile.deriv(rr), dtype=float)
            gpp = np.asarray(self.profile.second(rr), dtype=float)
            tang = gp / rr
            zh = z[nz] / rr[:, None]
            proj = zh[:, :, None] * zh[:, None, :]
            eye = np.eye(2)[None, :, :]
            out[nz] = gpp[:, None, None] * proj + tang[:, None, None] * (eye - proj)
        return out

    def describe(self):
        return f"uhlenbeck({self.profile.name})"


class FinslerIntegrand(Integrand):
    """F(z) = G(h(z)) with the elliptic gauge h(z) = sqrt((A z, z)), A SPD."""

    kind = "finsler"

    def __init__(self, gauge_matrix, profile):
        A = np.asarray(gauge_matrix, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise IntegrandError("gauge matrix must be symmetric 2x2")
        if np.linalg.eigvalsh(A)[0] <= 0.0:
            raise IntegrandError("gauge matrix must be positive definite")
        self.A = 0.5 * (A + A.T)
        self.profile = profile
        self.minimum = np.zeros(2)
        self.singular_points = (np.zeros(2),)

    def _gauge(self, z):
        return np.sqrt(np.einsum("mi,ij,mj->m", z, self.A, z))

    def _eval(self, z):
        return np.asarray(self.profile(self._gauge(z)), dtype=float)

    def _grad(self, z):
        h = self._gauge(z)
        az = z @ self.A.T
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(h > 0.0, self.profile.deriv(h) / np.where(h > 0, h, 1.0), 0.0)
        return s[:, None] * az

    def _hess(self, z):
        h = self._gauge(z)
        m = z.shape[0]
        out = np.zeros((m, 2, 2))
        nz = h > 0.0
        if nz.any():
            hh = h[nz]
            az = z[nz] @ self.A.T
            gp = np.asarray(self.profile.deriv(hh), dtype=float)
            gpp = np.asarray(self.profile.second(hh), dtype=float)
            dh = az / hh[:, None]
            dh_outer = dh[:, :, None] * dh[:, None, :]
            d2h = (self.A[None, :, :] - dh_outer) / hh[:, None, None]
            out[nz] = gpp[:, None, None] * dh_outer + gp[:, None, None] * d2h
        return out

    def describe(self):
        return f"finsler(A={self.A.tolist()}, {self.profile.name})"


def _quintic_hermite(x0, x1, v0, d0, s0, v1, d1, s1):
    """Coefficients (highest first) of the quintic matching value, first and
    second derivative at both endpoints."""
    rows = []
    rhs = []
    for x, v, d, s in ((x0, v0, d0, s0), (x1, v1, d1, s1)):
        pw = np.array([x**k for k in range(5, -1, -1)], dtype=float)
        rows.append(pw)
        rows.append(np.array([k * x ** (k - 1) if k >= 1 else 0.0 for k in range(5, -1, -1)]))
        rows.append(np.array([k * (k - 1) * x ** (k - 2) if k >= 2 else 0.0
                              for k in range(5, -1, -1)]))
        rhs.extend([v, d, s])
    return np.linalg.solve(np.array(rows), np.array(rhs))


class BlendIntegrand(Integrand):
    """Power term plus a small localized bump of slow growth.

    F(z) = |z|^p / p + eps * phi(z), where phi equals |z - w|^q / q inside
    the ball of radius |w|/4 around w, equals 1 outside radius |w|/2, and is
    the unique quintic radial interpolation (matching value, first and second
    derivative at both junction radii) in between.  For admissible eps the
    result is uniformly elliptic with lmin -> 0 at the origin and
    lmax -> infinity at w, so the degenerate and singular sets are {0} and
    {w} simultaneously.

    The admissibility threshold eps < alpha / (2 beta) is computed by
    sampling; alpha, beta, gamma, delta_s (the extremal Hessian quantities of
    the construction) are recorded in ``admissibility``.
    """

    kind = "blend"

    def __init__(self, p, q, w, eps=None):
        p, q = float(p), float(q)
        if not (p > 2.0 > q > 1.0):
            raise IntegrandError(f"blend needs p > 2 > q > 1, got p={p}, q={q}")
        w = np.asarray(w, dtype=float).reshape(2)
        r = float(np.hypot(*w))
        if r == 0.0:
            raise IntegrandError("blend bump center w must be nonzero")
        self.p, self.q, self.w, self.r = p, q, w, r
        rho1, rho2 = r / 4.0, r / 2.0
        self.rho1, self.rho2 = rho1, rho2
        self._coef = _quintic_hermite(
            rho1, rho2,
            rho1**q / q, rho1 ** (q - 1.0), (q - 1.0) * rho1 ** (q - 2.0),
            1.0, 0.0, 0.0,
        )
        self._coef_d = np.polyder(self._coef)
        self._coef_dd = np.polyder(self._coef_d)
        self.admissibility = self._sample_admissibility()
        self.eps_threshold = self.admissibility["alpha"] / (2.0 * self.admissibility["beta"])
        if eps is None:
            eps = 0.5 * self.eps_threshold
        eps = float(eps)
        if eps <= 0.0:
            raise IntegrandError("blend weight eps must be positive")
        if eps >= self.eps_threshold:
            raise IntegrandError(
                f"blend weight eps={eps:g} is not admissible; sampled threshold "
                f"alpha/(2 beta) = {self.eps_threshold:g}")
        self.eps = eps
        self.minimum = np.zeros(2)
        self.singular_points = (np.zeros(2), w.copy())

    def _sample_admissibility(self):
        p, q, r = self.p, self.q, self.r
        rad = np.geomspace(r / 2.0, 8.0 * r, 512)
        alpha = float(np.min(rad ** (p - 2.0)))
        rho = np.linspace(self.rho1, self.rho2, 2048)
        psi1 = np.polyval(self._coef_d, rho)
        psi2 = np.polyval(self._coef_dd, rho)
        beta = float(np.max(np.sqrt(psi2**2 + (psi1 / rho) ** 2)))
        rad_near = np.linspace(0.75 * r, 1.25 * r, 512)
        gamma = float(np.max((p - 1.0) * rad_near ** (p - 2.0)))
        rho_in = np.linspace(self.rho1 / 64.0, self.rho1, 512)
        delta_s = float(np.min((q - 1.0) * rho_in ** (q - 2.0)))
        return {"alpha": alpha, "beta": beta, "gamma": gamma, "delta_s": delta_s}

    def _phi_parts(self, rho):
        """(psi, psi', psi'') of the radial bump profile at radii rho."""
        q = self.q
        psi = np.empty_like(rho)
        d1 = np.empty_like(rho)
        d2 = np.empty_like(rho)
        inner = rho <= self.rho1
        outer = rho >= self.rho2
        mid = ~(inner | outer)
        ri = rho[inner]
        with np.errstate(divide="ignore"):
            psi[inner] = ri**q / q
            d1[inner] = ri ** (q - 1.0)
            d2[inner] = np.where(ri > 0, (q - 1.0) * ri ** (q - 2.0), np.inf)
        psi[mid] = np.polyval(self._coef, rho[mid])
        d1[mid] = np.polyval(self._coef_d, rho[mid])
        d2[mid] = np.polyval(self._coef_dd, rho[mid])
        psi[outer] = 1.0
        d1[outer] = 0.0
        d2[outer] = 0.0
        return psi, d1, d2

    def _eval(self, z):
        base = _kernels.power_eval(np.ascontiguousarray(z), self.p)
        rho = np.hypot(z[:, 0] - self.w[0], z[:, 1] - self.w[1])
        psi, _, _ = self._phi_parts(rho)
        return base + self.eps * psi

    def _grad(self, z):
        out = _kernels.power_grad(np.ascontiguousarray(z), self.p)
        d = z - self.w
        rho = np.hypot(d[:, 0], d[:, 1])
        _, d1, _ = self._phi_parts(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(rho > 0.0, d1 / np.where(rho > 0, rho, 1.0), 0.0)
        return out + self.eps * s[:, None] * d

    def _hess(self, z):
        out = _kernels.power_hess(np.ascontiguousarray(z), self.p)
        d = z - self.w
        rho = np.hypot(d[:, 0], d[:, 1])
        _, d1, d2 = self._phi_parts(rho)
        nz = rho > 0.0
        if nz.any():
            rr = rho[nz]
            dh = d[nz] / rr[:, None]
            proj = dh[:, :, None] * dh[:, None, :]
            eye = np.eye(2)[None, :, :]
            tang = d1[nz] / rr
            out[nz] += self.eps * (d2[nz][:, None, None] * proj
                                   + tang[:, None, None] * (eye - proj))
        return out

    def describe(self):
        return (f"blend(p={self.p:g}, q={self.q:g}, w=({self.w[0]:g},{self.w[1]:g}), "
                f"eps={self.eps:g})")


# ---------------------------------------------------------------------------
# combinators
# ---------------------------------------------------------------------------

class SumIntegrand(Integrand):
    """Sum of integrands.  The recorded H is the max of the parts' values,
    an upper bound by eigenvalue subadditivity of sums of symmetric matrices."""

    kind = "sum"

    def __init__(self, parts):
        if not parts:
            raise IntegrandError("sum needs at least one part")
        self.parts = list(parts)
        hs = [f.analytic_H for f in self.parts]
        self.analytic_H = max(hs) if all(h is not None for h in hs) else None
        mins = [f.minimum for f in self.parts]
        if all(m is not None and np.allclose(m, 0.0) for m in mins):
            self.minimum = np.zeros(2)
        pts = []
        for f in self.parts:
            pts.extend(f.singular_points)
        self.singular_points = tuple(pts)

    def _eval(self, z):
        return sum(f._eval(z) for f in self.parts)

    def _grad(self, z):
        return sum(f._grad(z) for f in self.parts)

    def _hess(self, z):
        return sum(f._hess(z) for f in self.parts)

    def describe(self):
        return "sum(" + ", ".join(f.describe() for f in self.parts) + ")"


class ScaledIntegrand(Integrand):
    """lam * F for lam > 0; the ellipticity ratio is unchanged."""

    kind = "scaled"

    def __init__(self, part, lam):
        lam = float(lam)
        if lam <= 0.0:
            raise IntegrandError(f"scale must be positive, got {lam}")
        self.part = part
        self.lam = lam
        self.analytic_H = part.analytic_H
        self.minimum = part.minimum
        self.singular_points = part.singular_points
        self.constant_hessian = part.constant_hessian

    def _eval(self, z):
        return self.lam * self.part._eval(z)

    def _grad(self, z):
        return self.lam * self.part._grad(z)

    def _hess(self, z):
        return self.lam * self.part._hess(z)

    def describe(self):
        return f"scaled({self.lam:g} * {self.part.describe()})"


class ShiftedIntegrand(Integrand):
    """F(z + zbar) - F(zbar): recentres the minimum of F at the origin."""

    kind = "shifted"

    def __init__(self, part, zbar):
        self.part = part
        self.zbar = np.asarray(zbar, dtype=float).reshape(2)
        self._offset = part.eval(self.zbar)
        self.analytic_H = part.analytic_H
        if part.minimum is not None:
            self.minimum = part.minimum - self.zbar
        self.singular_points = tuple(s - self.zbar for s in part.singular_points)
        self.constant_hessian = part.constant_hessian

    def _eval(self, z):
        return self.part._eval(z + self.zbar) - self._offset

    def _grad(self, z):
        return self.part._grad(z + self.zbar)

    def _hess(self, z):
        return self.part._hess(z + self.zbar)

    def describe(self):
        return f"shifted({self.part.describe()}, zbar=({self.zbar[0]:g},{self.zbar[1]:g}))"


class AffineAddIntegrand(Integrand):
    """F(z) + (w, z) + c; Hessian unchanged."""

    kind = "affine_add"

    def __init__(self, part, w, c=0.0):
        self.part = part
        self.w = np.asarray(w, dtype=float).reshape(2)
        self.c = float(c)
        self.analytic_H = part.analytic_H
        self.singular_points = part.singular_points
        self.constant_hessian = part.constant_hessian

    def _eval(self, z):
        return self.part._eval(z) + z @ self.w + self.c

    def _grad(self, z):
        return self.part._grad(z) + self.w

    def _hess(self, z):
        return self.part._hess(z)

    def describe(self):
        return f"affine_add({self.part.describe()}, w=({self.w[0]:g},{self.w[1]:g}))"


class FiniteDifferenceIntegrand(Integrand):
    """Derivative mode switch: gradients and Hessians from central differences
    of the wrapped integrand's values.

    Steps follow 1e-6 (1+|z|) for the gradient and 1e-5 (1+|z|) for the
    Hessian, balancing truncation against rounding in double precision.
    """

    kind = "finite_difference"

    def __init__(self, part):
        self.part = part
        self.analytic_H = part.analytic_H
        self.minimum = part.minimum
        self.singular_points = part.singular_points

    def _eval(self, z):
        return self.part._eval(z)

    def _grad(self, z):
        h = 1e-6 * (1.0 + np.hypot(z[:, 0], z[:, 1]))
        out = np.empty_like(z)
        for i in range(2):
            e = np.zeros((1, 2))
            e[0, i] = 1.0
            step = h[:, None] * e
            out[:, i] = (self.part._eval(z + step) - self.part._eval(z - step)) / (2.0 * h)
        return out

    def _hess(self, z):
        h = 1e-5 * (1.0 + np.hypot(z[:, 0], z[:, 1]))
        f0 = self.part._eval(z)
        out = np.empty((z.shape[0], 2, 2))
        eye = np.eye(2)
        for i in range(2):
            ei = h[:, None] * eye[i]
            out[:, i, i] = (self.part._eval(z + ei) - 2.0 * f0
                            + self.part._eval(z - ei)) / h**2
        e0 = h[:, None] * eye[0]
        e1 = h[:, None] * eye[1]
        cross = (self.part._eval(z + e0 + e1) - self.part._eval(z + e0 - e1)
                 - self.part._eval(z - e0 + e1) + self.part._eval(z - e0 - e1)) / (4.0 * h**2)
        out[:, 0, 1] = cross
        out[:, 1, 0] = cross
        return out

    def describe(self):
        return f"fd({self.part.describe()})"


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def make_power(p):
    """|z|^p / p for p > 1."""
    return PowerIntegrand(p)


def make_anisotropic_quadratic(A):
    """(A z, z) / 2 for symmetric positive definite A."""
    return AnisotropicQuadratic(A)


def make_blend(p, q, w, eps=None):
    """The two-point blend with degenerate origin and singular bump center w.

    ``eps=None`` picks half the sampled admissibility threshold.
    """
    return BlendIntegrand(p, q, w, eps)


def make_uhlenbeck(profile, *, ratio_bound=1e3, t_range=(1e-4, 1e4), n_samples=257):
    """G(|z|) after validating the radial ellipticity ratio t G''(t) / G'(t).

    The ratio must stay within [1/ratio_bound, ratio_bound] on log-spaced
    sample radii; a violation is reported with the offending radius.
    """
    t = np.geomspace(*t_range, n_samples)
    gp = np.asarray(profile.deriv(t), dtype=float)
    gpp = np.asarray(profile.second(t), dtype=float)
    if np.any(gp <= 0.0):
        bad = float(t[np.argmax(gp <= 0.0)])
        raise IntegrandError(f"profile derivative must be positive; G'({bad:g}) <= 0")
    g0 = float(profile(np.array([0.0]))[0])
    if abs(g0) > 1e-12:
        raise IntegrandError(f"profile must satisfy G(0) = 0, got {g0:g}")
    ratio = t * gpp / gp
    bad = (ratio < 1.0 / ratio_bound) | (ratio > ratio_bound) | ~np.isfinite(ratio)
    if bad.any():
        t_bad = float(t[np.argmax(bad)])
        raise IntegrandError(
            f"radial ellipticity ratio t G''/G' = {float(ratio[np.argmax(bad)]):g} at "
            f"t = {t_bad:g} is outside [{1.0 / ratio_bound:g}, {ratio_bound:g}]")
    # the sampled ratio extremes bound the ellipticity ratio of G(|z|)
    lo = min(float(ratio.min()), 1.0)
    hi = max(float(ratio.max()), 1.0)
    return UhlenbeckIntegrand(profile, analytic_H=max(hi, 1.0 / lo))


def make_finsler(gauge_matrix, profile, *, ratio_bound=1e3):
    """G(h(z)) for the elliptic gauge h(z) = sqrt((A z, z))."""
    make_uhlenbeck(profile, ratio_bound=ratio_bound)  # validates the profile
    return FinslerIntegrand(gauge_matrix, profile)


def combine(kind, parts, *, scale=None, shift=None, w=None, c=0.0):
    """Cone algebra: 'sum', 'scaled', 'shifted' or 'affine_add' of integrands."""
    if kind == "sum":
        return SumIntegrand(parts)
    if len(parts) != 1:
        raise IntegrandError(f"combine('{kind}') takes exactly one part")
    part = parts[0]
    if kind == "scaled":
        return ScaledIntegrand(part, scale)
    if kind == "shifted":
        return ShiftedIntegrand(part, shift)
    if kind == "affine_add":
        return AffineAddIntegrand(part, w, c)
    raise IntegrandError(f"unknown combinator {kind!r}")


def with_fd_derivatives(F):
    """Switch an integrand to the finite-difference derivative mode."""
    return FiniteDifferenceIntegrand(F)


# ---------------------------------------------------------------------------
# normalisation
# ---------------------------------------------------------------------------

def _solve2x2(H, rhs):
    """Batched solve of 2x2 systems H x = rhs with a Levenberg safeguard."""
    a, b = H[:, 0, 0], H[:, 0, 1]
    c, d = H[:, 1, 0], H[:, 1, 1]
    det = a * d - b * c
    bad = ~(det > 0.0) | ~np.isfinite(det)
    if bad.any():
        mu = 1e-10 * (1.0 + np.abs(a) + np.abs(d))
        a = np.where(bad, a + mu, a)
        d = np.where(bad, d + mu, d)
        det = a * d - b * c
    x = np.empty_like(rhs)
    x[:, 0] = (d * rhs[:, 0] - b * rhs[:, 1]) / det
    x[:, 1] = (-c * rhs[:, 0] + a * rhs[:, 1]) / det
    return x


def find_minimum(F, *, x0=None, tol=None, max_iter=200):
    """Argmin of a strictly convex coercive integrand.

    Damped Newton on DF = 0 with Armijo backtracking on F, started at the
    origin; plain gradient descent with halved steps takes over if a Newton
    step fails.  Tolerance |DF| <= 1e-12 (1 + |F(0)|).
    """
    x = np.zeros((1, 2)) if x0 is None else np.asarray(x0, dtype=float).reshape(1, 2)
    if tol is None:
        tol = 1e-12 * (1.0 + abs(F.eval(np.zeros(2))))
    fx = F._eval(x)[0]
    for _ in range(max_iter):
        g = F._grad(x)
        gn = float(np.hypot(g[0, 0], g[0, 1]))
        if gn <= tol:
            return x[0].copy()
        H = F._hess(x)
        step = -_solve2x2(H + 1e-12 * np.eye(2)[None], g)
        slope = float((g * step).sum())
        if not np.isfinite(step).all() or slope >= 0.0:
            step = -g
            slope = -gn**2
        alpha = 1.0
        floor = 1e-14 * abs(fx) + 1e-300  # rounding floor near convergence
        for _ in range(60):
            trial = x + alpha * step
            ft = F._eval(trial)[0]
            if np.isfinite(ft) and ft <= fx + 1e-4 * alpha * slope + floor:
                break
            alpha *= 0.5
        else:
            raise NormalisationError("argmin line search stalled")
        x = x + alpha * step
        fx = F._eval(x)[0]
    g = F._grad(x)
    if float(np.hypot(g[0, 0], g[0, 1])) <= 100.0 * tol:
        return x[0].copy()
    raise NormalisationError(
        f"argmin search did not reach |DF| <= {tol:g}; final |DF| = "
        f"{float(np.hypot(g[0,0], g[0,1])):g}")


def _golden_min(fun, lo, hi, iters=80):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (a + b) / 2.0


def gradient_infimum_on_circle(F, *, n_angles=720):
    """i_F = inf over the unit circle of |DF|.

    Equi-angular sweep brackets the minimum (|DF| along the circle is Hoelder
    continuous), then golden-section refinement pins it down.
    """
    theta = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    g = F._grad(pts)
    mags = np.hypot(g[:, 0], g[:, 1])
    k = int(np.argmin(mags))
    dth = 2.0 * np.pi / n_angles

    def fun(th):
        gg = F.grad(np.array([np.cos(th), np.sin(th)]))
        return float(np.hypot(gg[0], gg[1]))

    th_star = _golden_min(fun, theta[k] - dth, theta[k] + dth)
    return min(float(mags[k]), fun(th_star))


def normalise(F, *, n_angles=720):
    """Shift the minimum to the origin and rescale so that i_F = 1.

    Returns (F(z + zbar) - F(zbar)) / i_F where zbar is the argmin and i_F
    the infimum of the shifted gradient magnitude over the unit circle.  The
    result carries ``normalisation = {"zbar": ..., "i_F": ...}``.
    """
    zbar = find_minimum(F)
    shifted = ShiftedIntegrand(F, zbar) if np.any(zbar != 0.0) or shifted_needed(F) else F
    i_f = gradient_infimum_on_circle(shifted, n_angles=n_angles)
    if not np.isfinite(i_f) or i_f <= 0.0:
        raise NormalisationError(f"gradient infimum on the unit circle is {i_f}")
    out = ScaledIntegrand(shifted, 1.0 / i_f)
    out.normalisation = {"zbar": zbar, "i_F": i_f}
    out.minimum = np.zeros(2)
    return out


def shifted_needed(F):
    return abs(F.eval(np.zeros(2))) > 0.0


def is_normalised(F, tol=1e-8):
    """Cheap check of the normalisation contract F(0) = 0, DF(0) = 0, i_F ~ 1."""
    if abs(F.eval(np.zeros(2))) > tol:
        return False
    g0 = F.grad(np.zeros(2))
    if np.hypot(g0[0], g0[1]) > np.sqrt(tol):
        return False
    return abs(gradient_infimum_on_circle(F, n_angles=180) - 1.0) < 1e-2


# ---------------------------------------------------------------------------
# isotropic envelope
# ---------------------------------------------------------------------------

class IsotropicEnvelope:
    """Tables of a(t) = sup_{|z| <= t} |DF(z)| and its antiderivative A.

    a is strictly increasing for these integrands; A is the convex Young
    function giving the two-sided isotropic control of F.  Between table
    nodes a is interpolated as a power law (exact for power integrands), and
    A accumulates the per-segment power-law integrals.
    """

    def __init__(self, radii, a_table, n_angles):
        radii = np.asarray(radii, dtype=float)
        a_table = np.asarray(a_table, dtype=float)
        if np.any(np.diff(a_table) <= 0.0):
            raise IntegrandError("envelope table a(t) is not strictly increasing")
        self.radii = radii
        self.a_table = a_table
        self.n_angles = n_angles
        self._log_t = np.log(radii)
        self._log_a = np.log(a_table)
        slopes = np.diff(self._log_a) / np.diff(self._log_t)
        self._slopes = slopes
        # segment integrals of the power-law interpolant; the leading segment
        # [0, t_0] extrapolates the first exponent
        seg = a_table[:-1] * radii[:-1] / (slopes + 1.0) * (
            (radii[1:] / radii[:-1]) ** (slopes + 1.0) - 1.0)
        head = a_table[0] * radii[0] / (slopes[0] + 1.0)
        self.A_table = head + np.concatenate([[0.0], np.cumsum(seg)])

    def a(self, t):
        t = np.asarray(t, dtype=float)
        lt = np.log(np.clip(t, self.radii[0], self.radii[-1]))
        return np.exp(np.interp(lt, self._log_t, self._log_a))

    def A(self, t):
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.radii[0], self.radii[-1])
        idx = np.clip(np.searchsorted(self.radii, tc, side="right") - 1, 0,
                      len(self._slopes) - 1)
        s = self._slopes[idx]
        part = self.a_table[idx] * self.radii[idx] / (s + 1.0) * (
            (tc / self.radii[idx]) ** (s + 1.0) - 1.0)
        return self.A_table[idx] + part

    def a_inv(self, s):
        s = np.asarray(s, dtype=float)
        ls = np.log(np.clip(s, self.a_table[0], self.a_table[-1]))
        return np.exp(np.interp(ls, self._log_a, self._log_t))

    def A_inv(self, v):
        v = np.asarray(v, dtype=float)
        lv = np.log(np.clip(v, self.A_table[0], self.A_table[-1]))
        return np.exp(np.interp(lv, np.log(self.A_table), self._log_t))

    def check_envelope(self, F, rng, n=2000):
        """Empirical C with (1/C) A(|z|) <= F(z) <= C A(|z|) on random points."""
        t = np.exp(rng.uniform(np.log(self.radii[0] * 2), np.log(self.radii[-1] / 2), n))
        th = rng.uniform(0.0, 2.0 * np.pi, n)
        z = t[:, None] * np.stack([np.cos(th), np.sin(th)], axis=1)
        fv = F._eval(z)
        av = self.A(t)
        c_hi = float(np.max(fv / av))
        c_lo = float(np.max(av / fv))
        return {"C": max(c_hi, c_lo), "C_upper": c_hi, "C_lower": c_lo}

    def check_doubling(self, H):
        """Empirical C in a(2t) <= C eta_H(2) a(t) over the table."""
        eta2 = max(2.0**H, 2.0 ** (1.0 / H))
        mask = 2.0 * self.radii <= self.radii[-1]
        t = self.radii[mask]
        return float(np.max(self.a(2.0 * t) / (eta2 * self.a(t))))


def isotropic_envelope(F, *, t_range=(1e-4, 1e4), n_radii=257, n_angles=256):
    """Build the isotropic envelope tables of a normalised integrand."""
    radii = np.geomspace(*t_range, n_radii)
    theta = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, 2)
    g = F._grad(pts).reshape(n_radii, n_angles, 2)
    per_radius = np.hypot(g[:, :, 0], g[:, :, 1]).max(axis=1)
    a_table = np.maximum.accumulate(per_radius)
    return IsotropicEnvelope(radii, a_table, n_angles)


# ---------------------------------------------------------------------------
# validation sampling
# ---------------------------------------------------------------------------

def check_midpoint_convexity(F, rng, n=10**4, radius=100.0):
    """Worst midpoint-convexity margin over random pairs; >= -tol for convex F."""
    z = rng.uniform(-radius, radius, (n, 2))
    w = rng.uniform(-radius, radius, (n, 2))
    gap = 0.5 * (F._eval(z) + F._eval(w)) - F._eval(0.5 * (z + w))
    scale = np.maximum(1.0, np.abs(F._eval(z)) + np.abs(F._eval(w)))
    return float(np.min(gap / scale))


def check_gradient_finite_differences(F, rng, n=10**3, radius=10.0):
    """Max relative mismatch between DF and central differences of F."""
    z = rng.uniform(-radius, radius, (n, 2))
    g = F._grad(z)
    h = 1e-6 * (1.0 + np.hypot(z[:, 0], z[:, 1]))
    fd = np.empty_like(g)
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1.0
        step = h[:, None] * e
        fd[:, i] = (F._eval(z + step) - F._eval(z - step)) / (2.0 * h)
    num = np.hypot(*(g - fd).T)
    den = 1.0 + np.hypot(*g.T)
    return float(np.max(num / den))


def check_hessian_symmetry(F, rng, n=10**3, radius=10.0, exclude=1e-8):
    """Max Frobenius asymmetry |H - H^T| over random sample points."""
    z = rng.uniform(-radius, radius, (n, 2))
    for s in F.singular_points:
        close = np.hypot(z[:, 0] - s[0], z[:, 1] - s[1]) < exclude
        z = z[~close]
    H = F._hess(z)
    return float(np.max(np.abs(H - np.transpose(H, (0, 2, 1)))))
