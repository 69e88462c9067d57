"""Minimal-regularity benchmark on the unit square.

The exact solution is ``u(x) = (-log m(x))^g - (log 2)^g`` with
``m(x) = max(|x1 - 1/2|, |x2 - 1/2|)`` and ``g = 1/4``.  It lies in H^1_0 but
its gradient is in no L^p with p > 2.  Because ``u`` depends on ``m`` only, and
``m`` is affine along any segment that stays on one side of the two diagonals
and of the two coordinate lines through the center, every integral the scheme
and the error functionals need reduces to incomplete gamma functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiagonalPoint, DomainError, QuadratureFailure, SingularPoint
from .quadrature import cone_triangles, gauss_legendre
from .space import ExactSolutionOracle

GAMMA_EXPONENT = 0.25
OUTER_RADIUS = 0.5
CENTER = np.array([0.5, 0.5])

_MAX_TERMS = 200
_EPS = 1e-16
_TINY = 1e-300


def upper_incomplete_gamma(a, x):
    """Gamma(a, x) = int_x^inf t^(a-1) e^(-t) dt for a > 0, x >= 0 (vectorized).

    Series for x < a + 1, Lentz continued fraction otherwise.  ``x = inf`` gives 0.
    """
    a_arr = np.asarray(a, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(a_arr <= 0) or np.any(np.isnan(a_arr)):
        raise DomainError("Gamma(a, x) needs a > 0")
    if np.any(x_arr < 0) or np.any(np.isnan(x_arr)):
        raise DomainError("Gamma(a, x) needs x >= 0")
    a_b, x_b = np.broadcast_arrays(a_arr, x_arr)
    a_f, x_f = a_b.ravel(), x_b.ravel()
    out = np.zeros(a_f.shape)
    finite = np.isfinite(x_f)
    series = finite & (x_f < a_f + 1.0)
    frac = finite & ~series
    if np.any(series):
        out[series] = _gamma_series(a_f[series], x_f[series])
    if np.any(frac):
        out[frac] = _gamma_cf(a_f[frac], x_f[frac])
    out = out.reshape(a_b.shape)
    return float(out) if out.ndim == 0 else out


def _gamma_series(a, x):
    """Gamma(a) - gamma(a, x) with the lower function from its power series."""
    gamma_a = np.array([math.gamma(v) for v in a]) if a.size < 64 else _gamma_vec(a)
    ap = a.copy()
    term = 1.0 / a
    total = term.copy()
    active = x > 0
    for _ in range(_MAX_TERMS):
        if not np.any(active):
            break
        ap = ap + 1.0
        term = np.where(active, term * x / ap, 0.0)
        total = total + term
        active = np.abs(term) >= np.abs(total) * _EPS
    else:
        raise QuadratureFailure("incomplete gamma series did not converge")
    with np.errstate(divide="ignore"):
        lower = np.where(x > 0, total * np.exp(-x + a * np.log(np.where(x > 0, x, 1.0))), 0.0)
    return gamma_a - lower


def _gamma_vec(a):
    uniq, inv = np.unique(a, return_inverse=True)
    return np.array([math.gamma(v) for v in uniq])[inv]


def _gamma_cf(a, x):
    """Continued fraction for Gamma(a, x), modified Lentz, valid for x >= a + 1."""
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for i in range(1, _MAX_TERMS + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _EPS
        if np.all(done):
            break
    else:
        raise QuadratureFailure("incomplete gamma continued fraction did not converge")
    return np.exp(-x + a * np.log(x)) * h


# ------------------------------------------------------------------ exact solution


@dataclass(frozen=True)
class SingularSolution:
    gamma: float = GAMMA_EXPONENT
    radius: float = OUTER_RADIUS

    @property
    def shift(self) -> float:
        return (-math.log(self.radius)) ** self.gamma

    def value(self, x):
        return u_exact(x, self.gamma, self.radius)

    def gradient(self, x):
        return grad_u_exact(x, self.gamma)

    def oracle(self) -> ExactSolutionOracle:
        """Bundle with closed-form cone means and cell moments."""
        return ExactSolutionOracle(
            value=self.value,
            gradient=lambda x: grad_u_branch(x, self.gamma),
            cone_normal_means=lambda mesh: cone_mean_normal_gradient(mesh, self.gamma, self.radius),
            cell_moments=lambda mesh: cell_moments_exact(mesh, self.gamma, self.radius),
            gradient_moments=lambda mesh: gradient_moments_exact(mesh, self.gamma),
            singular_point=CENTER.copy(),
            laplacian=None,
            name="singular",
        )


def _offsets(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0] - 0.5, x[..., 1] - 0.5


def u_exact(x, gamma=GAMMA_EXPONENT, radius=OUTER_RADIUS):
    """(-log max(|x1-1/2|, |x2-1/2|))^gamma - (-log radius)^gamma."""
    e1, e2 = _offsets(x)
    m = np.maximum(np.abs(e1), np.abs(e2))
    if np.any(m == 0):
        raise SingularPoint("the exact solution is unbounded at the center")
    out = (-np.log(m)) ** gamma - (-math.log(radius)) ** gamma
    return float(out) if np.ndim(out) == 0 else out


def grad_u_branch(x, gamma=GAMMA_EXPONENT):
    """Gradient of the active branch; on the diagonals the first coordinate wins.

    The diagonals have measure zero, so any choice there is a valid a.e.
    representative for quadrature.
    """
    e1, e2 = _offsets(x)
    a1, a2 = np.abs(e1), np.abs(e2)
    first = a1 >= a2
    m = np.where(first, a1, a2)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = -gamma * (-np.log(m)) ** (gamma - 1.0) / m
    g = np.zeros(np.shape(e1) + (2,))
    g[..., 0] = np.where(first, mag * np.sign(e1), 0.0)
    g[..., 1] = np.where(first, 0.0, mag * np.sign(e2))
    return g


def grad_u_exact(x, gamma=GAMMA_EXPONENT):
    """Gradient of the exact solution, undefined on the diagonals and at the center."""
    e1, e2 = _offsets(x)
    if np.any((e1 == 0) & (e2 == 0)):
        raise SingularPoint("gradient is undefined at the center")
    if np.any(np.abs(e1) == np.abs(e2)):
        raise DiagonalPoint("gradient is undefined on the diagonals through the center")
    return grad_u_branch(x, gamma)


# ------------------------------------------------------------------- exact norms


def exact_norms(r: float, gamma=GAMMA_EXPONENT):
    """(||grad u||, ||u||) on B(r) = {max(|x1-1/2|, |x2-1/2|) < r}.

    On B(r) the solution is taken with the boundary constant of B(r), i.e.
    ``(-log m)^g - (-log r)^g``, which vanishes on the boundary of B(r); for
    r = 1/2 this is the benchmark solution itself.
    """
    if not (0.0 < r <= OUTER_RADIUS):
        raise DomainError("radius must lie in (0, 1/2]")
    L = -math.log(r)
    grad_sq = 8.0 * gamma ** 2 / (1.0 - 2.0 * gamma) * L ** (2.0 * gamma - 1.0)
    c = L
    val_sq = (
        2.0 ** (2.0 - 2.0 * gamma) * upper_incomplete_gamma(2.0 * gamma + 1.0, 2.0 * L)
        - 2.0 ** (3.0 - gamma) * c ** gamma * upper_incomplete_gamma(gamma + 1.0, 2.0 * L)
        + (2.0 * r) ** 2 * c ** (2.0 * gamma)
    )
    return math.sqrt(grad_sq), math.sqrt(max(val_sq, 0.0))


# --------------------------------------------------------- piecewise-affine pieces


def _split_parameters(p, q):
    """Break points in (0, 1) where a segment p -> q (center offsets) changes branch.

    Returns an (n, 6) sorted array including 0 and 1; on every piece m(t) is
    affine.
    """
    t = q - p
    cands = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for num, den in (
            (-p[:, 0], t[:, 0]),
            (-p[:, 1], t[:, 1]),
            (-(p[:, 0] - p[:, 1]), t[:, 0] - t[:, 1]),
            (-(p[:, 0] + p[:, 1]), t[:, 0] + t[:, 1]),
        ):
            r = num / den
            r = np.where(np.isfinite(r) & (r > 1e-14) & (r < 1.0 - 1e-14), r, 0.0)
            cands.append(r)
    br = np.column_stack([np.zeros(len(p))] + cands + [np.ones(len(p))])
    return np.sort(br, axis=1)


def _m_of(p):
    return np.maximum(np.abs(p[..., 0]), np.abs(p[..., 1]))


def _pieces(p, q):
    """Endpoints (alpha, beta) of m on each affine piece and the piece parameter length."""
    br = _split_parameters(p, q)
    t0, t1 = br[:, :-1], br[:, 1:]
    d = q - p
    pa = p[:, None, :] + t0[..., None] * d[:, None, :]
    pb = p[:, None, :] + t1[..., None] * d[:, None, :]
    # evaluate m at the piece midpoint's branch so both endpoints use one branch
    pm = 0.5 * (pa + pb)
    use_first = np.abs(pm[..., 0]) >= np.abs(pm[..., 1])
    alpha = np.where(use_first, np.abs(pa[..., 0]), np.abs(pa[..., 1]))
    beta = np.where(use_first, np.abs(pb[..., 0]), np.abs(pb[..., 1]))
    return alpha, beta, t1 - t0


def _mean_log_power(alpha, beta, gamma):
    """Mean over s in [0, 1] of (-log(alpha + (beta - alpha) s))^gamma."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    out = np.empty(alpha.shape)
    lo, hi = np.minimum(alpha, beta), np.maximum(alpha, beta)
    close = (hi - lo) <= 1e-3 * hi
    far = ~close
    if np.any(far):
        a, b = alpha[far], beta[far]
        with np.errstate(divide="ignore"):
            ga = upper_incomplete_gamma(gamma + 1.0, -np.log(a))
            gb = upper_incomplete_gamma(gamma + 1.0, -np.log(b))
        out[far] = (gb - ga) / (b - a)
    if np.any(close):
        x, w = gauss_legendre(8)
        a, b = alpha[close], beta[close]
        m = a[:, None] + (b - a)[:, None] * x[None, :]
        out[close] = ((-np.log(m)) ** gamma) @ w
    return out


def segment_integrals(p, q, gamma=GAMMA_EXPONENT, radius=OUTER_RADIUS):
    """Exact integral of the solution along segments p -> q (points in the square)."""
    p = np.asarray(p, dtype=float) - CENTER
    q = np.asarray(q, dtype=float) - CENTER
    length = np.hypot(*(q - p).T)
    alpha, beta, dt = _pieces(p, q)
    live = dt > 0
    mean = np.zeros(alpha.shape)
    mean[live] = _mean_log_power(alpha[live], beta[live], gamma)
    raw = length * np.sum(dt * mean, axis=1)
    return raw - (-math.log(radius)) ** gamma * length


def cone_mean_normal_gradient(mesh, gamma=GAMMA_EXPONENT, radius=OUTER_RADIUS):
    """Closed-form (1/|D|) int_D grad u . n_{K,s} on every cone of a 2D mesh."""
    xk, a, b = cone_triangles(mesh)
    total = np.zeros(mesh.n_cones)
    orient = np.sign((a - xk)[:, 0] * (b - xk)[:, 1] - (a - xk)[:, 1] * (b - xk)[:, 0])
    for p, q in ((a, b), (xk, a), (b, xk)):
        t = q - p
        n_edge = orient[:, None] * np.column_stack([t[:, 1], -t[:, 0]]) / np.hypot(t[:, 0], t[:, 1])[:, None]
        total += np.einsum("ij,ij->i", n_edge, mesh.cone_normal) * segment_integrals(p, q, gamma, radius)
    return total / mesh.cone_measure


# ------------------------------------------------------------- area integrals


def _fan_pieces(mesh):
    """Center-fan triangles (center, p, q) over every cell edge.

    Returns the signed doubled area of each fan triangle, its owner cell, and the
    branch pieces of m along the edge p -> q.
    """
    f = np.array([mesh.faces[s] for s in mesh.cone_face])
    p = mesh.vertices[f[:, 0]] - CENTER
    q = mesh.vertices[f[:, 1]] - CENTER
    # orient each edge counter-clockwise around its own cell
    det = p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]
    lever = mesh.face_centroid[mesh.cone_face] - mesh.cell_points[mesh.cone_cell]
    t = q - p
    ccw = (lever[:, 0] * t[:, 1] - lever[:, 1] * t[:, 0]) > 0
    det = np.where(ccw, det, -det)
    keep = np.abs(det) > 1e-300
    return p[keep], q[keep], det[keep], mesh.cone_cell[keep]


def _fan_integral(mesh, radial, nodes=20):
    """Per-cell sum of |det| * int_0^1 radial(m(tau)) dtau over center-fan triangles.

    ``radial(m)`` must be the inner integral int_0^1 s g(s m) ds (or its analogue)
    already evaluated in closed form; the outer integral along the edge is done
    with Gauss-Legendre on each affine piece of m, in the variable v = -log m
    when m varies by more than a factor 1.5 over the piece.
    """
    p, q, det, owner = _fan_pieces(mesh)
    alpha, beta, dt = _pieces(p, q)
    x, w = gauss_legendre(nodes)
    a = alpha.ravel()
    b = beta.ravel()
    length = dt.ravel()
    res = np.zeros(a.shape)
    live = length > 0
    ratio = np.maximum(a, b) / np.maximum(np.minimum(a, b), 1e-300)
    direct = live & (ratio <= 1.5)
    logv = live & ~direct
    if np.any(direct):
        m = a[direct, None] + (b - a)[direct, None] * x[None, :]
        res[direct] = radial(m) @ w
    if np.any(logv):
        # int_0^1 G(m(tau)) dtau = 1/(b - a) int_a^b G(m) dm, m = exp(-v)
        aa, bb = a[logv], b[logv]
        va, vb = -np.log(aa), -np.log(bb)
        v = vb[:, None] + (va - vb)[:, None] * x[None, :]
        m = np.exp(-v)
        integrand = radial(m) * m
        res[logv] = (va - vb) * (integrand @ w) / (bb - aa)
    per_edge = np.sum(res.reshape(alpha.shape) * dt, axis=1) * det
    return np.bincount(owner, weights=per_edge, minlength=mesh.n_cells)


def _radial_log_power(p):
    """m -> int_0^1 s (-log(s m))^p ds = 2^(-p-1) Gamma(p+1, -2 log m) / m^2."""

    def radial(m):
        return 2.0 ** (-p - 1.0) * upper_incomplete_gamma(p + 1.0, -2.0 * np.log(m)) / (m * m)

    return radial


def cell_moments_exact(mesh, gamma=GAMMA_EXPONENT, radius=OUTER_RADIUS):
    """(int_K u, int_K u^2) per cell from one-dimensional closed forms."""
    c = (-math.log(radius)) ** gamma
    i1 = _fan_integral(mesh, _radial_log_power(gamma))
    i2 = _fan_integral(mesh, _radial_log_power(2.0 * gamma))
    area = mesh.cell_measure
    return i1 - c * area, i2 - 2.0 * c * i1 + c * c * area


def gradient_moments_exact(mesh, gamma=GAMMA_EXPONENT):
    """(int_K grad u, int_K |grad u|^2) per cell.

    The first comes from the boundary formula int_K grad u = int_dK u n; the
    second from the center fan with the exact radial integral
    int_0^1 s |grad u(s y)|^2 ds = g^2 (-log m)^(2g-1) / ((1-2g) m^2).
    """
    nc = mesh.n_cells
    f = np.array([mesh.faces[s] for s in mesh.cone_face])
    a, b = mesh.vertices[f[:, 0]], mesh.vertices[f[:, 1]]
    seg = segment_integrals(a, b, gamma, OUTER_RADIUS)
    first = np.zeros((nc, 2))
    np.add.at(first, mesh.cone_cell, mesh.cone_normal * seg[:, None])

    def radial(m):
        return gamma ** 2 * (-np.log(m)) ** (2.0 * gamma - 1.0) / ((1.0 - 2.0 * gamma) * m * m)

    second = _fan_integral(mesh, radial)
    return first, second


# ------------------------------------------------------------------ scheme data


def rhs_cone_means(mesh, gamma=GAMMA_EXPONENT):
    """Scheme data for f = 0, F = -grad u."""
    from .assembly import SteadyProblemData

    g = cone_mean_normal_gradient(mesh, gamma)
    return SteadyProblemData(f=np.zeros(mesh.n_cells), F=-g)


def run_benchmark(meshes, solution: SingularSolution | None = None, method="cg"):
    """Solve the benchmark on each mesh and return one BenchmarkRow per level."""
    from .analysis import benchmark_level

    solution = solution or SingularSolution()
    return [benchmark_level(mesh, solution.oracle(), rhs_cone_means(mesh, solution.gamma), method=method)
            for mesh in meshes]
