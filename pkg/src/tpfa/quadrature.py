"""Quadrature on cone triangles, cells and segments (2D)."""

from __future__ import annotations

import numpy as np

from .errors import QuadratureFailure

_S15 = np.sqrt(15.0)
_A1, _B1 = (6.0 - _S15) / 21.0, (9.0 + 2.0 * _S15) / 21.0
_A2, _B2 = (6.0 + _S15) / 21.0, (9.0 - 2.0 * _S15) / 21.0
# 7-point degree-5 rule on the reference triangle, barycentric nodes, weights summing to 1
TRI7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
        [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
    ]
)
TRI7_WEIGHTS = np.array(
    [9 / 40] + [(155.0 - _S15) / 1200.0] * 3 + [(155.0 + _S15) / 1200.0] * 3
)


def gauss_legendre(n: int):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Quadrature points (nt, 7, 2) and area-scaled weights (nt, 7) for triangles (nt, 2)."""
    pts = (
        TRI7_BARY[None, :, 0, None] * a[:, None, :]
        + TRI7_BARY[None, :, 1, None] * b[:, None, :]
        + TRI7_BARY[None, :, 2, None] * c[:, None, :]
    )
    area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    return pts, area[:, None] * TRI7_WEIGHTS[None, :]


def cone_triangles(mesh):
    """Vertices (x_K, a, b) of the triangle of every cone of a 2D mesh."""
    if mesh.dim != 2:
        raise NotImplementedError("cone quadrature is implemented for 2D meshes")
    f = np.array([mesh.faces[s] for s in mesh.cone_face])
    return mesh.cell_points[mesh.cone_cell], mesh.vertices[f[:, 0]], mesh.vertices[f[:, 1]]


def _contains(a, b, c, p, tol=1e-12):
    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    area2 = cross(b - a, c - a)
    scale = np.abs(area2)
    l0 = cross(b - p, c - p) * np.sign(area2)
    l1 = cross(c - p, a - p) * np.sign(area2)
    l2 = cross(a - p, b - p) * np.sign(area2)
    return (l0 >= -tol * scale) & (l1 >= -tol * scale) & (l2 >= -tol * scale)


def refine_toward(a, b, c, owner, point, levels):
    """Split triangles whose closure holds ``point`` into four, ``levels`` times."""
    if point is None or levels <= 0:
        return a, b, c, owner
    p = np.asarray(point, dtype=float)[None, :]
    for _ in range(levels):
        hit = _contains(a, b, c, p)
        if not np.any(hit):
            break
        A, B, C = a[hit], b[hit], c[hit]
        ab, bc, ca = 0.5 * (A + B), 0.5 * (B + C), 0.5 * (C + A)
        keep = ~hit
        a = np.concatenate([a[keep], A, ab, ca, ab])
        b = np.concatenate([b[keep], ab, B, bc, bc])
        c = np.concatenate([c[keep], ca, bc, C, ca])
        o = owner[hit]
        owner = np.concatenate([owner[keep], o, o, o, o])
    return a, b, c, owner


def integrate_cones(mesh, func, singular_point=None, levels=3):
    """Integrate ``func`` over every cone triangle.

    ``func`` maps points (..., 2) to values (...) or (..., k).  Triangles touching
    ``singular_point`` are refined dyadically ``levels`` times before the
    degree-5 rule is applied.  Returns per-cone integrals (ncones,) or (ncones, k).
    """
    a, b, c = cone_triangles(mesh)
    owner = np.arange(mesh.n_cones)
    a, b, c, owner = refine_toward(a, b, c, owner, singular_point, levels)
    pts, w = triangle_rule(a, b, c)
    vals = np.asarray(func(pts), dtype=float)
    if vals.ndim == 2:
        local = np.sum(vals * w, axis=1)
        return np.bincount(owner, weights=local, minlength=mesh.n_cones)
    local = np.einsum("tq,tqk->tk", w, vals)
    out = np.zeros((mesh.n_cones, vals.shape[-1]))
    np.add.at(out, owner, local)
    return out


def integrate_cells(mesh, func, singular_point=None, levels=3):
    """Per-cell integrals of ``func`` using the cone triangles of each cell."""
    per_cone = integrate_cones(mesh, func, singular_point, levels)
    if per_cone.ndim == 1:
        return np.bincount(mesh.cone_cell, weights=per_cone, minlength=mesh.n_cells)
    out = np.zeros((mesh.n_cells, per_cone.shape[1]))
    np.add.at(out, mesh.cone_cell, per_cone)
    return out


def integrate_segments(func, p, q, rtol=1e-12, atol=1e-300, max_depth=60, order=8):
    """Adaptive Gauss-Legendre integration of ``func`` along segments p -> q.

    ``func`` maps points (m, 2) to values (m,).  Each segment is accepted when an
    ``order``-point and a ``2*order``-point rule agree to ``max(rtol*|I|, atol*len)``;
    otherwise it is bisected.  Raises QuadratureFailure past ``max_depth``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    xs, ws = gauss_legendre(order)
    xl, wl = gauss_legendre(2 * order)
    total = np.zeros(len(p))
    owner = np.arange(len(p))
    a, b = p, q
    for _ in range(max_depth):
        if len(owner) == 0:
            return total
        t = b - a
        length = np.hypot(t[:, 0], t[:, 1])
        ps = a[:, None, :] + xs[None, :, None] * t[:, None, :]
        pl = a[:, None, :] + xl[None, :, None] * t[:, None, :]
        fs = np.asarray(func(ps.reshape(-1, 2))).reshape(len(a), -1)
        fl = np.asarray(func(pl.reshape(-1, 2))).reshape(len(a), -1)
        i_s = length * (fs @ ws)
        i_l = length * (fl @ wl)
        ok = np.abs(i_l - i_s) <= np.maximum(rtol * np.abs(i_l), atol * length)
        np.add.at(total, owner[ok], i_l[ok])
        bad = ~ok
        mid = 0.5 * (a[bad] + b[bad])
        a = np.concatenate([a[bad], mid])
        b = np.concatenate([mid, b[bad]])
        owner = np.concatenate([owner[bad], owner[bad]])
    raise QuadratureFailure(f"segment quadrature did not converge within {max_depth} bisections")
