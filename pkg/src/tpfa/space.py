"""Discrete space X_T, discrete gradients, norms and projections of continuous functions.

A :class:`DiscreteField` holds one value per cell and one per interior face;
boundary face values are structurally zero.  Cone-wise quantities live on the
half-diamonds ``D_{K,s}`` and are stored in mesh cone order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DataMisalignment, SingularPoint, UndefinedValue
from .mesh import AdmissibleMesh
from .quadrature import cone_triangles, integrate_cells, integrate_segments, refine_toward, triangle_rule


@dataclass(eq=False)
class DiscreteField:
    mesh: AdmissibleMesh
    cell: np.ndarray
    face: np.ndarray

    def __post_init__(self):
        self.cell = np.asarray(self.cell, dtype=float)
        self.face = np.asarray(self.face, dtype=float)
        if self.cell.shape != (self.mesh.n_cells,) or self.face.shape != (self.mesh.n_interior,):
            raise DataMisalignment(
                f"field has shapes {self.cell.shape}/{self.face.shape}, mesh needs "
                f"({self.mesh.n_cells},)/({self.mesh.n_interior},)"
            )

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_cells), np.zeros(mesh.n_interior))

    @classmethod
    def random(cls, mesh, rng):
        """Uniform values in [-1, 1] for cells and interior faces."""
        return cls(mesh, rng.uniform(-1.0, 1.0, mesh.n_cells), rng.uniform(-1.0, 1.0, mesh.n_interior))

    @classmethod
    def from_vector(cls, mesh, x):
        x = np.asarray(x, dtype=float)
        return cls(mesh, x[: mesh.n_cells], x[mesh.n_cells:])

    def to_vector(self):
        return np.concatenate([self.cell, self.face])

    def face_values(self) -> np.ndarray:
        """Values on all faces, zero on the boundary."""
        out = np.zeros(self.mesh.n_faces)
        out[self.mesh.interior_faces] = self.face
        return out

    def cone_jumps(self) -> np.ndarray:
        """u_s - u_K on every cone."""
        return self.face_values()[self.mesh.cone_face] - self.cell[self.mesh.cone_cell]

    def __add__(self, other):
        return DiscreteField(self.mesh, self.cell + other.cell, self.face + other.face)

    def __sub__(self, other):
        return DiscreteField(self.mesh, self.cell - other.cell, self.face - other.face)

    def __mul__(self, s):
        return DiscreteField(self.mesh, s * self.cell, s * self.face)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def to_csv(self) -> str:
        rows = [f"cell,{k},{v!r}" for k, v in enumerate(self.cell.tolist())]
        rows += [f"face,{int(s)},{v!r}" for s, v in zip(self.mesh.interior_faces, self.face.tolist())]
        return "\n".join(rows) + "\n"


@dataclass(eq=False)
class ConeField:
    """Piecewise constant scalar (or vector when ``values`` is 2D) on the cones."""

    mesh: AdmissibleMesh
    values: np.ndarray

    def l2_norm(self) -> float:
        v = self.values if self.values.ndim == 1 else np.sum(self.values ** 2, axis=1) ** 0.5
        return float(np.sqrt(np.dot(self.mesh.cone_measure, v * v)))

    def inner(self, other) -> float:
        prod = self.values * other.values
        if prod.ndim == 2:
            prod = prod.sum(axis=1)
        return float(np.dot(self.mesh.cone_measure, prod))

    def __sub__(self, other):
        return ConeField(self.mesh, self.values - other.values)


ConeVectorField = ConeField


@dataclass(eq=False)
class CellVectorField:
    mesh: AdmissibleMesh
    values: np.ndarray

    def l2_norm(self) -> float:
        return float(np.sqrt(np.dot(self.mesh.cell_measure, np.sum(self.values ** 2, axis=1))))


@dataclass
class ExactSolutionOracle:
    """A continuous function with its gradient and optional closed-form reductions.

    value, gradient : vectorized callables on points (..., d).
    cone_normal_means : mesh -> (ncones,) means of grad . n_{K,s} over each cone.
    cell_moments : mesh -> (int_K u, int_K u^2) per cell.
    gradient_moments : mesh -> (int_K grad u (nc, d), int_K |grad u|^2 (nc,)).
    singular_point : where quadrature should refine, if anywhere.
    """

    value: Callable
    gradient: Callable
    cone_normal_means: Optional[Callable] = None
    cell_moments: Optional[Callable] = None
    gradient_moments: Optional[Callable] = None
    singular_point: Optional[np.ndarray] = None
    laplacian: Optional[Callable] = None
    h2_norm: Optional[float] = None
    name: str = field(default="oracle")

    def gradient_fd_error(self, points, eps=1e-6) -> float:
        """Largest relative mismatch between ``gradient`` and central differences."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        g = np.asarray(self.gradient(points))
        fd = np.empty_like(g)
        for j in range(points.shape[1]):
            e = np.zeros(points.shape[1])
            e[j] = eps
            fd[:, j] = (self.value(points + e) - self.value(points - e)) / (2 * eps)
        scale = np.maximum(np.abs(g).max(axis=1, keepdims=True), 1.0)
        return float(np.max(np.abs(fd - g) / scale))


def affine_oracle(a, c=0.0) -> ExactSolutionOracle:
    """Oracle for x -> a.x + c."""
    a = np.asarray(a, dtype=float)
    return ExactSolutionOracle(
        value=lambda x: np.asarray(x) @ a + c,
        gradient=lambda x: np.broadcast_to(a, np.shape(x)).copy(),
        cone_normal_means=lambda mesh: mesh.cone_normal @ a,
        laplacian=lambda x: np.zeros(np.shape(x)[:-1]),
        name="affine",
    )


# ------------------------------------------------------------------ operators


def normal_derivative(u: DiscreteField) -> ConeField:
    """G_T u = (u_s - u_K) / d_{K,s} on each cone."""
    return ConeField(u.mesh, u.cone_jumps() / u.mesh.cone_distance)


def inflated_gradient(u: DiscreteField) -> ConeField:
    """d (u_s - u_K) / d_{K,s} n_{K,s} on each cone."""
    g = normal_derivative(u).values
    return ConeField(u.mesh, u.mesh.dim * g[:, None] * u.mesh.cone_normal)


def consistent_gradient(u: DiscreteField, with_dimension_factor: bool = False) -> CellVectorField:
    """Cell-constant reconstruction (1/|K|) sum |s| (xbar_s - x_K)(u_s - u_K)/d_{K,s}.

    Exact on affine functions.  ``with_dimension_factor`` multiplies by ``d``
    (kept only for comparison; it breaks affine exactness).
    """
    m = u.mesh
    g = normal_derivative(u).values
    lever = m.face_centroid[m.cone_face] - m.cell_points[m.cone_cell]
    contrib = (m.face_measure[m.cone_face] * g)[:, None] * lever
    out = np.zeros((m.n_cells, m.dim))
    np.add.at(out, m.cone_cell, contrib)
    out /= m.cell_measure[:, None]
    if with_dimension_factor:
        out *= m.dim
    return CellVectorField(m, out)


def discrete_norm(u: DiscreteField) -> float:
    """||u||_T = (sum over cones of |s|/d_{K,s} (u_s - u_K)^2)^(1/2)."""
    m = u.mesh
    j = u.cone_jumps()
    return float(np.sqrt(np.sum(m.face_measure[m.cone_face] / m.cone_distance * j * j)))


def energy_inner(u: DiscreteField, v: DiscreteField) -> float:
    """d <G_T u, G_T v>, the bilinear form of the scheme."""
    m = u.mesh
    return float(np.sum(m.face_measure[m.cone_face] / m.cone_distance * u.cone_jumps() * v.cone_jumps()))


def cell_l2_norm(u) -> float:
    """L2 norm of the piecewise constant cell function of a field (or cell array with mesh)."""
    return float(np.sqrt(np.dot(u.mesh.cell_measure, u.cell * u.cell)))


def cell_inner(u: DiscreteField, v: DiscreteField) -> float:
    return float(np.dot(u.mesh.cell_measure, u.cell * v.cell))


# ------------------------------------------------------- continuous -> discrete


def mean_normal_gradient(phi: ExactSolutionOracle, mesh: AdmissibleMesh, rtol=1e-12) -> ConeField:
    """Cone means (1/|D|) int_D grad(phi) . n_{K,s}.

    Uses ``phi.cone_normal_means`` when available.  Otherwise applies the
    divergence theorem on each cone triangle, int_D d_n phi = sum over the three
    edges of (n_edge . n_{K,s}) int_edge phi, with adaptive Gauss-Legendre on
    each edge.
    """
    if phi.cone_normal_means is not None:
        return ConeField(mesh, np.asarray(phi.cone_normal_means(mesh), dtype=float))
    return ConeField(mesh, mean_normal_gradient_by_boundary(phi.value, mesh, rtol=rtol))


def mean_normal_gradient_by_boundary(value, mesh, rtol=1e-12):
    xk, a, b = cone_triangles(mesh)
    nK = mesh.cone_normal
    total = np.zeros(mesh.n_cones)
    # face vertex order is shared by both neighbours, so flip clockwise triangles
    orient = np.sign((a - xk)[:, 0] * (b - xk)[:, 1] - (a - xk)[:, 1] * (b - xk)[:, 0])
    for p, q in ((a, b), (xk, a), (b, xk)):
        t = q - p
        length = np.hypot(t[:, 0], t[:, 1])
        n_edge = orient[:, None] * np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
        weight = np.einsum("ij,ij->i", n_edge, nK)
        total += weight * integrate_segments(value, p, q, rtol=rtol, atol=1e-15)
    return total / mesh.cone_measure


def cell_integrals(func, mesh, singular_point=None, levels=3):
    return integrate_cells(mesh, func, singular_point, levels)


def oscillation(phi, mesh: AdmissibleMesh, singular_point=None, levels=3) -> float:
    """Theta_T(phi): sqrt of 2 sum_K (int_K |phi|^2 - |K| |mean_K phi|^2).

    ``phi`` is either an ExactSolutionOracle (its gradient field is used, with
    closed-form moments when present) or a callable vector field.
    """
    if isinstance(phi, ExactSolutionOracle):
        if phi.gradient_moments is not None:
            first, second = phi.gradient_moments(mesh)
            var = second - np.sum(first ** 2, axis=1) / mesh.cell_measure
            return float(np.sqrt(2.0 * np.sum(np.maximum(var, 0.0))))
        singular_point = phi.singular_point if singular_point is None else singular_point
        phi = phi.gradient
    first = integrate_cells(mesh, phi, singular_point, levels)
    mean = first / mesh.cell_measure[:, None]
    # same variance, summed in centered form to avoid cancellation
    var = centered_square_integrals(mesh, phi, mean, singular_point, levels)
    return float(np.sqrt(2.0 * np.sum(var)))


def centered_square_integrals(mesh, phi, mean, singular_point, levels):
    """Per-cell int_K |phi - mean_K|^2."""
    a, b, c = cone_triangles(mesh)
    owner = mesh.cone_cell.copy()
    a, b, c, owner = refine_toward(a, b, c, owner, singular_point, levels)
    pts, w = triangle_rule(a, b, c)
    vals = np.asarray(phi(pts), dtype=float)
    if vals.ndim == 2:
        vals = vals[..., None]
        mean = mean.reshape(mesh.n_cells, 1)
    sq = np.sum((vals - mean[owner][:, None, :]) ** 2, axis=-1)
    return np.bincount(owner, weights=np.sum(sq * w, axis=1), minlength=mesh.n_cells)


def cell_moments(phi: ExactSolutionOracle, mesh, levels=3):
    """(int_K phi, int_K phi^2) per cell, closed form when the oracle has one."""
    if phi.cell_moments is not None:
        return phi.cell_moments(mesh)
    v = integrate_cells(mesh, lambda x: np.stack([phi.value(x), phi.value(x) ** 2], axis=-1),
                        phi.singular_point, levels)
    return v[:, 0], v[:, 1]


def face_points(mesh: AdmissibleMesh) -> np.ndarray:
    """x_s: intersection of [x_K, x_L] with s on interior faces, centroid elsewhere."""
    pts = mesh.face_centroid.copy()
    inner = mesh.interior_faces
    cK, cL = mesh.face_cones[inner, 0], mesh.face_cones[inner, 1]
    dK, dL = mesh.cone_distance[cK], mesh.cone_distance[cL]
    xK = mesh.cell_points[mesh.cone_cell[cK]]
    xL = mesh.cell_points[mesh.cone_cell[cL]]
    t = dK / (dK + dL)
    pts[inner] = xK + t[:, None] * (xL - xK)
    return pts


def harmonic_face_values(mesh: AdmissibleMesh, cell_values: np.ndarray) -> np.ndarray:
    """Face values solving (u_s - u_K)/d_K + (u_s - u_L)/d_L = 0 on interior faces."""
    inner = mesh.interior_faces
    cK, cL = mesh.face_cones[inner, 0], mesh.face_cones[inner, 1]
    dK, dL = mesh.cone_distance[cK], mesh.cone_distance[cL]
    uK, uL = cell_values[mesh.cone_cell[cK]], cell_values[mesh.cone_cell[cL]]
    return (dL * uK + dK * uL) / (dK + dL)


def canonical_interpolant(phi, mesh: AdmissibleMesh, face_mode: str = "point") -> DiscreteField:
    """Interpolate a continuous function into X_T.

    Cell values are phi(x_K).  ``face_mode='point'`` sets u_s = phi(x_s) with x_s
    on the segment [x_K, x_L]; ``'harmonic'`` uses the flux-matching face values.
    """
    value = phi.value if isinstance(phi, ExactSolutionOracle) else phi
    try:
        cell = np.asarray(value(mesh.cell_points), dtype=float)
        if face_mode == "point":
            face = np.asarray(value(face_points(mesh)[mesh.interior_faces]), dtype=float)
        elif face_mode == "harmonic":
            face = harmonic_face_values(mesh, cell)
        else:
            raise ValueError(f"unknown face_mode {face_mode!r}")
    except SingularPoint as exc:
        raise UndefinedValue(str(exc)) from exc
    if not (np.all(np.isfinite(cell)) and np.all(np.isfinite(face))):
        raise UndefinedValue("function is not finite at a required point")
    return DiscreteField(mesh, cell, face)
