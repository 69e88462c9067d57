"""Admissible finite-volume meshes: construction, validation, generators and text I/O.

A mesh is a set of convex cells, each carrying one point ``x_K``, such that for
every interior face the segment joining the two cell points is orthogonal to the
face.  All per-cone geometry (a cone is the pyramid with apex ``x_K`` and base
one face of ``K``) is cached at build time.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import (
    DegenerateGeometry,
    NonAcutePattern,
    NonConformity,
    OrthogonalityViolation,
    ParseError,
    PointOutsideCell,
)

ORTHOGONALITY_TOL = 1e-10
INTERIOR_MARGIN = 1e-12
INVARIANT_RTOL = 1e-12


@dataclass(frozen=True)
class MeshQuality:
    h: float
    theta: float


@dataclass(frozen=True, eq=False)
class AdmissibleMesh:
    """Immutable admissible mesh with cached cone geometry.

    Cones are stored cell by cell: the cones of cell ``K`` are
    ``cell_cone_ptr[K]:cell_cone_ptr[K + 1]``.  ``face_cells[s, 1] == -1`` marks
    a boundary face, and ``face_dof[s]`` is the position of an interior face in
    the face-value vector of a discrete field (``-1`` on the boundary).
    """

    dim: int
    vertices: np.ndarray
    cells: tuple
    cell_points: np.ndarray
    faces: tuple
    face_cells: np.ndarray
    cell_measure: np.ndarray
    cell_diameter: np.ndarray
    face_measure: np.ndarray
    face_centroid: np.ndarray
    cone_cell: np.ndarray
    cone_face: np.ndarray
    cone_normal: np.ndarray
    cone_distance: np.ndarray
    cone_measure: np.ndarray
    cell_cone_ptr: np.ndarray
    face_cones: np.ndarray
    interior_faces: np.ndarray
    face_dof: np.ndarray
    domain_measure: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_interior(self) -> int:
        return len(self.interior_faces)

    @property
    def n_cones(self) -> int:
        return len(self.cone_cell)

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    @cached_property
    def cone_dof(self) -> np.ndarray:
        """Interior-face dof of each cone, ``-1`` for boundary cones."""
        return self.face_dof[self.cone_face]

    @cached_property
    def cone_neighbor_distance(self) -> np.ndarray:
        """``d_{L,sigma}`` seen from each cone (0 for boundary cones)."""
        other = np.zeros(self.n_cones)
        fc = self.face_cones[self.cone_face]
        mine = np.arange(self.n_cones)
        opp = np.where(fc[:, 0] == mine, fc[:, 1], fc[:, 0])
        inner = opp >= 0
        other[inner] = self.cone_distance[opp[inner]]
        return other

    @cached_property
    def domain_diameter(self) -> float:
        pts = self.vertices[np.unique(np.concatenate([self.faces[s] for s in self.boundary_faces]))]
        return float(pdist(pts).max())

    def quality(self) -> MeshQuality:
        return quality(self)


def quality(mesh: AdmissibleMesh) -> MeshQuality:
    """Return ``h_T`` (max cell diameter) and ``theta_T`` (min d_{K,s}/diam K)."""
    h = float(mesh.cell_diameter.max())
    theta = float(np.min(mesh.cone_distance / mesh.cell_diameter[mesh.cone_cell]))
    return MeshQuality(h=h, theta=theta)


# --------------------------------------------------------------------------- build


def _polygon_area(p: np.ndarray) -> float:
    q = p - p.mean(axis=0)
    x, y = q[:, 0], q[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _planar_face_geometry(p: np.ndarray):
    """Area, unit normal (Newell orientation) and centroid of a planar 3D polygon."""
    c = p.mean(axis=0)
    q = np.roll(p, -1, axis=0)
    cr = np.cross(p - c, q - c)
    area_vec = 0.5 * cr.sum(axis=0)
    area = float(np.linalg.norm(area_vec))
    if area == 0.0:
        return 0.0, np.zeros(3), c
    tri_area = 0.5 * (cr @ (area_vec / area))
    centroid = (tri_area[:, None] * (p + q + c) / 3.0).sum(axis=0) / tri_area.sum()
    return area, area_vec / area, centroid


def _derive_faces_2d(cells):
    edges = {}
    order = []
    for k, cell in enumerate(cells):
        nv = len(cell)
        for i in range(nv):
            a, b = cell[i], cell[(i + 1) % nv]
            key = (min(a, b), max(a, b))
            if key not in edges:
                edges[key] = [(a, b), []]
                order.append(key)
            edges[key][1].append(k)
    faces = [edges[key][0] for key in order]
    adjacency = [edges[key][1] for key in order]
    return faces, adjacency


def build_mesh(
    vertices,
    cells: Sequence[Sequence[int]],
    cell_points,
    faces: Sequence[Sequence[int]] | None = None,
    face_cells=None,
) -> AdmissibleMesh:
    """Build and validate an admissible mesh.

    Parameters
    ----------
    vertices : (nv, d) array
    cells : per-cell vertex lists.  In 2D the vertices must be listed around the
        polygon (either orientation); in 3D the list is only used for the cell
        diameter and the faces must be given.
    cell_points : (nc, d) array of the points ``x_K``.
    faces, face_cells : optional explicit faces with their one or two cells
        (``-1`` for none).  Required when ``d == 3``.  In 2D they are checked
        against the polygon edges and fix the face order.

    Checks run in the order DegenerateGeometry, PointOutsideCell,
    OrthogonalityViolation, NonConformity.
    """
    vertices = np.array(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
        raise DegenerateGeometry("vertices must be an (nv, 2) or (nv, 3) array")
    dim = vertices.shape[1]
    cell_points = np.array(cell_points, dtype=float).reshape(-1, dim)
    cells = [tuple(int(v) for v in c) for c in cells]
    nc = len(cells)
    if nc == 0:
        raise DegenerateGeometry("mesh has no cells")
    if len(cell_points) != nc:
        raise DegenerateGeometry("one point per cell is required")
    nv = len(vertices)
    for k, c in enumerate(cells):
        if len(c) < dim + 1 or min(c) < 0 or max(c) >= nv:
            raise DegenerateGeometry(f"cell {k} has an invalid vertex list")

    if dim == 2:
        cells = [c if _polygon_area(vertices[list(c)]) > 0 else c[::-1] for c in cells]
        derived, adjacency = _derive_faces_2d(cells)
        if faces is None:
            face_list = derived
            adj_list = adjacency
        else:
            face_list, adj_list = _match_given_faces_2d(derived, adjacency, faces, face_cells)
    else:
        if faces is None or face_cells is None:
            raise DegenerateGeometry("3D meshes need explicit faces and face_cells")
        face_list = [tuple(int(v) for v in f) for f in faces]
        fcs = np.asarray(face_cells, dtype=int).reshape(-1, 2)
        adj_list = [[int(c) for c in row if c >= 0] for row in fcs]

    nf = len(face_list)
    overloaded = [s for s in range(nf) if len(adj_list[s]) not in (1, 2)]

    # cell measures and diameters, independent of the cell points
    cell_measure = np.empty(nc)
    cell_diameter = np.empty(nc)
    cell_center = np.empty((nc, dim))
    for k, c in enumerate(cells):
        p = vertices[list(c)]
        cell_diameter[k] = pdist(p).max()
        cell_center[k] = p.mean(axis=0)
        if dim == 2:
            cell_measure[k] = _polygon_area(p)
            _check_convex_2d(p, k)

    # face geometry
    face_measure = np.empty(nf)
    face_centroid = np.empty((nf, dim))
    face_normal = np.empty((nf, dim))
    for s, f in enumerate(face_list):
        p = vertices[list(f)]
        if dim == 2:
            t = p[1] - p[0]
            length = float(np.hypot(t[0], t[1]))
            face_measure[s] = length
            face_centroid[s] = 0.5 * (p[0] + p[1])
            face_normal[s] = (np.array([t[1], -t[0]]) / length) if length > 0 else 0.0
        else:
            area, normal, centroid = _planar_face_geometry(p)
            face_measure[s], face_normal[s], face_centroid[s] = area, normal, centroid
    scale = cell_diameter.max()
    small = face_measure <= 1e-14 * scale ** (dim - 1)
    if np.any(small):
        raise DegenerateGeometry(f"face {int(np.flatnonzero(small)[0])} has zero measure")

    # cones, grouped by cell
    cell_faces = [[] for _ in range(nc)]
    for s in range(nf):
        for k in adj_list[s]:
            cell_faces[k].append(s)
    if dim == 2:
        # keep polygon edge order within each cell
        pos = {}
        for s, f in enumerate(face_list):
            pos[(min(f), max(f))] = s
        cell_faces = []
        for c in cells:
            m = len(c)
            cell_faces.append([pos[(min(c[i], c[(i + 1) % m]), max(c[i], c[(i + 1) % m]))] for i in range(m)])
    ptr = np.zeros(nc + 1, dtype=int)
    ptr[1:] = np.cumsum([len(cf) for cf in cell_faces])
    cone_cell = np.repeat(np.arange(nc), np.diff(ptr))
    cone_face = np.array([s for cf in cell_faces for s in cf], dtype=int)
    orient = np.einsum("ij,ij->i", face_centroid[cone_face] - cell_center[cone_cell], face_normal[cone_face])
    sign = np.where(orient >= 0.0, 1.0, -1.0)
    cone_normal = face_normal[cone_face] * sign[:, None]
    cone_distance = np.einsum("ij,ij->i", face_centroid[cone_face] - cell_points[cone_cell], cone_normal)
    cone_measure = face_measure[cone_face] * cone_distance / dim
    if dim == 3:
        # divergence theorem with the vertex mean as apex, independent of x_K
        lever = np.einsum("ij,ij->i", face_centroid[cone_face] - cell_center[cone_cell], cone_normal)
        cell_measure = np.bincount(cone_cell, weights=face_measure[cone_face] * lever / 3.0, minlength=nc)
    if np.any(cell_measure <= 0):
        raise DegenerateGeometry(f"cell {int(np.argmin(cell_measure))} has non-positive measure")

    # point-in-cell: strictly inside every face half-space with a margin
    margin = INTERIOR_MARGIN * cell_diameter[cone_cell]
    bad = cone_distance <= margin
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise PointOutsideCell(
            f"point of cell {int(cone_cell[i])} is not strictly inside (distance to face "
            f"{int(cone_face[i])} is {cone_distance[i]:.3e})"
        )

    # pair the cones of each face
    face_cells_arr = -np.ones((nf, 2), dtype=int)
    face_cones = -np.ones((nf, 2), dtype=int)
    for i in range(len(cone_face)):
        s = cone_face[i]
        slot = 0 if face_cones[s, 0] < 0 else 1
        if slot == 1 and face_cones[s, 1] >= 0:
            continue
        face_cones[s, slot] = i
        face_cells_arr[s, slot] = cone_cell[i]

    inner = np.flatnonzero(face_cones[:, 1] >= 0)
    iK, iL = face_cones[inner, 0], face_cones[inner, 1]
    seg = cell_points[cone_cell[iL]] - cell_points[cone_cell[iK]]
    seglen = np.linalg.norm(seg, axis=1)
    cosang = np.einsum("ij,ij->i", seg, cone_normal[iK]) / np.where(seglen > 0, seglen, 1.0)
    cosang[seglen == 0] = 0.0
    bad = cosang < 1.0 - ORTHOGONALITY_TOL
    if np.any(bad):
        s = int(inner[np.flatnonzero(bad)[0]])
        raise OrthogonalityViolation(
            f"face {s}: cell points are not aligned with the face normal (cos = {cosang[bad][0]:.15f})"
        )
    # opposite cones see exactly opposite normals
    cone_normal[iL] = -cone_normal[iK]

    if overloaded:
        s = overloaded[0]
        raise NonConformity(f"face {s} is shared by {len(adj_list[s])} cells")
    if dim == 2:
        _check_no_hanging_nodes_2d(vertices, face_list, face_cells_arr)

    face_dof = -np.ones(nf, dtype=int)
    face_dof[inner] = np.arange(len(inner))

    bnd = face_cells_arr[:, 1] < 0
    bcones = face_cones[bnd, 0]
    domain_measure = float(
        np.sum(face_measure[bnd] * np.einsum("ij,ij->i", face_centroid[bnd], cone_normal[bcones])) / dim
    )

    for arr in (vertices, cell_points, face_cells_arr, cell_measure, cell_diameter, face_measure,
                face_centroid, cone_cell, cone_face, cone_normal, cone_distance, cone_measure, ptr,
                face_cones, inner, face_dof):
        arr.setflags(write=False)

    mesh = AdmissibleMesh(
        dim=dim,
        vertices=vertices,
        cells=tuple(cells),
        cell_points=cell_points,
        faces=tuple(tuple(f) for f in face_list),
        face_cells=face_cells_arr,
        cell_measure=cell_measure,
        cell_diameter=cell_diameter,
        face_measure=face_measure,
        face_centroid=face_centroid,
        cone_cell=cone_cell,
        cone_face=cone_face,
        cone_normal=cone_normal,
        cone_distance=cone_distance,
        cone_measure=cone_measure,
        cell_cone_ptr=ptr,
        face_cones=face_cones,
        interior_faces=inner,
        face_dof=face_dof,
        domain_measure=domain_measure,
    )
    validate(mesh)
    return mesh


def _check_convex_2d(p: np.ndarray, k: int) -> None:
    e = np.roll(p, -1, axis=0) - p
    cr = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = np.max(np.abs(e)) ** 2
    if np.any(cr < -1e-12 * scale):
        raise DegenerateGeometry(f"cell {k} is not convex")


def _match_given_faces_2d(derived, adjacency, faces, face_cells):
    given = [tuple(int(v) for v in f) for f in faces]
    if face_cells is None:
        raise NonConformity("explicit faces need their adjacent cells")
    fcs = np.asarray(face_cells, dtype=int).reshape(-1, 2)
    if len(fcs) != len(given):
        raise NonConformity("faces and face_cells have different lengths")
    index = {(min(f), max(f)): i for i, f in enumerate(derived)}
    seen = set()
    out_faces, out_adj = [], []
    for s, f in enumerate(given):
        if len(f) != 2:
            raise NonConformity(f"face {s} of a 2D mesh must have two vertices")
        key = (min(f), max(f))
        if key not in index or key in seen:
            raise NonConformity(f"face {s} is not an edge of its cells or is repeated")
        seen.add(key)
        adj = adjacency[index[key]]
        listed = sorted(int(c) for c in fcs[s] if c >= 0)
        if sorted(adj) != listed:
            raise NonConformity(f"face {s}: listed cells {listed} differ from cells {sorted(adj)}")
        # keep the cell order of the file so that face orientation round-trips
        out_faces.append(derived[index[key]])
        out_adj.append([int(c) for c in fcs[s] if c >= 0])
    if len(seen) != len(derived):
        raise NonConformity("some cell edges are missing from the face list")
    return out_faces, out_adj


def _check_no_hanging_nodes_2d(vertices, faces, face_cells, chunk=512):
    """Reject boundary faces that contain another boundary vertex in their interior."""
    bnd = np.flatnonzero(face_cells[:, 1] < 0)
    if len(bnd) == 0:
        return
    ends = np.array([faces[s] for s in bnd])
    cand = np.unique(ends)
    pts = vertices[cand]
    for start in range(0, len(bnd), chunk):
        e = ends[start:start + chunk]
        a, b = vertices[e[:, 0]], vertices[e[:, 1]]
        t = b - a
        L2 = np.einsum("ij,ij->i", t, t)
        rel = pts[None, :, :] - a[:, None, :]
        proj = np.einsum("fvj,fj->fv", rel, t) / L2[:, None]
        cross = (rel[..., 0] * t[:, None, 1] - rel[..., 1] * t[:, None, 0]) / np.sqrt(L2)[:, None]
        tol = 1e-10 * np.sqrt(L2)[:, None]
        inside = (proj > 1e-10) & (proj < 1 - 1e-10) & (np.abs(cross) < tol)
        if np.any(inside):
            f, v = np.argwhere(inside)[0]
            raise NonConformity(f"vertex {int(cand[v])} hangs on face {int(bnd[start + f])}")


def validate(mesh: AdmissibleMesh) -> None:
    """Assert the stored invariants; raise the matching mesh error otherwise."""
    rel = abs(mesh.cell_measure.sum() - mesh.domain_measure) / mesh.domain_measure
    if rel > INVARIANT_RTOL:
        raise NonConformity(f"cells do not tile the domain (relative area mismatch {rel:.2e})")
    cone_sum = np.bincount(mesh.cone_cell, weights=mesh.cone_measure, minlength=mesh.n_cells)
    rel = np.abs(cone_sum - mesh.cell_measure) / mesh.cell_measure
    if np.any(rel > INVARIANT_RTOL):
        raise DegenerateGeometry(f"cone measures do not add up to cell {int(np.argmax(rel))}")
    ident = geometric_identity(mesh)
    err = np.abs(ident - np.eye(mesh.dim)[None]).max()
    if err > 1e-12:
        raise DegenerateGeometry(f"geometric identity fails by {err:.2e}")


def geometric_identity(mesh: AdmissibleMesh) -> np.ndarray:
    """Per-cell matrix (1/|K|) sum |s| (xbar_s - x_K) n_{K,s}^T, which equals Id."""
    d = mesh.dim
    lever = mesh.face_centroid[mesh.cone_face] - mesh.cell_points[mesh.cone_cell]
    outer = mesh.face_measure[mesh.cone_face][:, None, None] * lever[:, :, None] * mesh.cone_normal[:, None, :]
    out = np.zeros((mesh.n_cells, d, d))
    np.add.at(out, mesh.cone_cell, outer)
    return out / mesh.cell_measure[:, None, None]


# ---------------------------------------------------------------------- generators


def generate_square_grid(n: int) -> AdmissibleMesh:
    """Uniform n x n squares on the unit square with cell centers as points."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    x = np.arange(n + 1) / n
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    cells, points = [], []
    for j in range(n):
        for i in range(n):
            v0 = j * (n + 1) + i
            cells.append((v0, v0 + 1, v0 + n + 2, v0 + n + 1))
            points.append(((i + 0.5) / n, (j + 0.5) / n))
    return build_mesh(vertices, cells, points)


# Acute tile of the unit square: 14 triangles, all angles in [45, 75.97] degrees,
# longest edge exactly half the square side.  The tile keeps the four corners and
# four side midpoints as vertices, so neighbouring tiles conform.
TILE_A = 0.31246217159866563
TILE_B = np.sqrt(2.0) / 4.0
_TILE_INTERIOR = np.array(
    [[TILE_A, 1.0 - TILE_A], [1.0 - TILE_A, TILE_A], [TILE_B, TILE_B], [1.0 - TILE_B, 1.0 - TILE_B]]
)
# local vertex ids: 0-3 corners (ccw from origin), 4-7 side midpoints (bottom,
# right, top, left), 8-11 the interior points above
_TILE_TRIANGLES = (
    (11, 5, 2), (6, 11, 2), (4, 10, 0), (10, 7, 0), (8, 10, 11), (10, 8, 7), (6, 8, 11),
    (8, 6, 3), (7, 8, 3), (9, 5, 11), (10, 9, 11), (9, 10, 4), (5, 9, 1), (9, 4, 1),
)
_TILE_HALF_LATTICE = ((0, 0), (2, 0), (2, 2), (0, 2), (1, 0), (2, 1), (1, 2), (0, 1))


def circumcenter(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Circumcenters of triangles given by (..., 2) vertex arrays."""
    ab, ac = b - a, c - a
    d = 2.0 * (ab[..., 0] * ac[..., 1] - ab[..., 1] * ac[..., 0])
    nab, nac = np.sum(ab * ab, axis=-1), np.sum(ac * ac, axis=-1)
    ux = (ac[..., 1] * nab - ab[..., 1] * nac) / d
    uy = (ab[..., 0] * nac - ac[..., 0] * nab) / d
    return a + np.stack([ux, uy], axis=-1)


def generate_acute_triangular_grid(n: int) -> AdmissibleMesh:
    """Acute triangulation of the unit square built from n x n copies of a 14-triangle tile.

    Cell points are circumcenters.  The mesh has ``14 n^2`` triangles and
    ``h_T = 1/(2n)``; refinement n -> 2n is self-similar so ``theta_T`` is constant.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    index = {}
    coords = []

    def lattice_vertex(i2, j2):
        key = (i2, j2)
        if key not in index:
            index[key] = len(coords)
            coords.append((i2 / (2 * n), j2 / (2 * n)))
        return index[key]

    cells = []
    for j in range(n):
        for i in range(n):
            local = [lattice_vertex(2 * i + a, 2 * j + b) for a, b in _TILE_HALF_LATTICE]
            for p in _TILE_INTERIOR:
                local.append(len(coords))
                coords.append(((i + p[0]) / n, (j + p[1]) / n))
            cells.extend(tuple(local[v] for v in tri) for tri in _TILE_TRIANGLES)
    vertices = np.array(coords)
    tri = np.array(cells)
    a, b, c = vertices[tri[:, 0]], vertices[tri[:, 1]], vertices[tri[:, 2]]
    cc = circumcenter(a, b, c)
    _check_inside_triangles(a, b, c, cc)
    return build_mesh(vertices, cells, cc)


def _check_inside_triangles(a, b, c, p, margin=1e-12):
    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    area2 = cross(b - a, c - a)
    l0 = cross(b - p, c - p) / area2
    l1 = cross(c - p, a - p) / area2
    l2 = 1.0 - l0 - l1
    bad = np.minimum(np.minimum(l0, l1), l2) <= margin
    if np.any(bad):
        raise NonAcutePattern(f"triangle {int(np.flatnonzero(bad)[0])} has its circumcenter outside")


# ---------------------------------------------------------------------------- I/O


def write_mesh(mesh: AdmissibleMesh) -> str:
    """Serialize to the plain text format read by :func:`read_mesh`."""
    out = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells} {mesh.n_faces}"]
    for v in mesh.vertices:
        out.append(" ".join(repr(float(x)) for x in v))
    for c, p in zip(mesh.cells, mesh.cell_points):
        out.append(" ".join([str(len(c))] + [str(v) for v in c] + [repr(float(x)) for x in p]))
    for f, fc in zip(mesh.faces, mesh.face_cells):
        out.append(" ".join([str(len(f))] + [str(v) for v in f] + [str(int(fc[0])), str(int(fc[1]))]))
    return "\n".join(out) + "\n"


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def read_mesh(text: str) -> AdmissibleMesh:
    """Parse the text format ``d nv nc nf`` / vertices / cells / faces.

    Raises ParseError (with the offending line number) on malformed input and
    any build_mesh error on inadmissible geometry.
    """
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("empty mesh file", 1)
    lineno, head = lines[0]
    if len(head) != 4:
        raise ParseError("count line must read 'd nv nc nf'", lineno)
    try:
        d, nv, nc, nf = (int(t) for t in head)
    except ValueError:
        raise ParseError("count line must hold four integers", lineno) from None
    if d not in (2, 3) or min(nv, nc, nf) < 0:
        raise ParseError("invalid counts", lineno)
    if len(lines) < 1 + nv + nc + nf:
        last = lines[-1][0]
        raise ParseError(f"expected {nv + nc + nf} records after the count line, found {len(lines) - 1}", last)
    pos = 1
    vertices = np.empty((nv, d))
    for i in range(nv):
        lineno, tok = lines[pos + i]
        if len(tok) != d:
            raise ParseError(f"vertex record needs {d} coordinates", lineno)
        try:
            vertices[i] = [float(t) for t in tok]
        except ValueError:
            raise ParseError("bad vertex coordinate", lineno) from None
    pos += nv
    cells, points = [], []
    for i in range(nc):
        lineno, tok = lines[pos + i]
        try:
            k = int(tok[0])
            if len(tok) != 1 + k + d:
                raise ParseError(f"cell record needs {1 + k + d} fields", lineno)
            cells.append(tuple(int(t) for t in tok[1:1 + k]))
            points.append([float(t) for t in tok[1 + k:]])
        except ValueError:
            raise ParseError("bad cell record", lineno) from None
        if min(cells[-1]) < 0 or max(cells[-1]) >= nv:
            raise ParseError("cell vertex index out of range", lineno)
    pos += nc
    faces, face_cells = [], []
    for i in range(nf):
        lineno, tok = lines[pos + i]
        try:
            m = int(tok[0])
            if len(tok) != 1 + m + 2:
                raise ParseError(f"face record needs {m + 3} fields", lineno)
            faces.append(tuple(int(t) for t in tok[1:1 + m]))
            c1, c2 = int(tok[1 + m]), int(tok[2 + m])
        except ValueError:
            raise ParseError("bad face record", lineno) from None
        if not (0 <= c1 < nc) or not (-1 <= c2 < nc):
            raise ParseError("face cell index out of range", lineno)
        face_cells.append((c1, c2))
    if len(lines) > 1 + nv + nc + nf:
        raise ParseError("trailing records after the face list", lines[1 + nv + nc + nf][0])
    return build_mesh(vertices, cells, points, faces=faces, face_cells=face_cells)


_FVCA_SECTIONS = {"vertices": 0, "triangles": 3, "quadrangles": 4, "pentagons": 5, "hexagons": 6,
                  "edges": 2, "all edges": 2, "edges of the boundary": 2}


def read_fvca5(text: str) -> AdmissibleMesh:
    """Read a 2D mesh in the FVCA5 benchmark layout.

    Sections are introduced by a keyword line (``vertices``, ``triangles``,
    ``quadrangles``, ``pentagons``, ``hexagons``, ``edges of the boundary``,
    ``all edges``; a bare ``edges`` is read as ``all edges``) followed by a
    count line and that many records; indices are 1-based.  Triangles get their
    circumcenter as cell point; other polygons get their circumcenter when the
    vertices are concyclic and their vertex mean otherwise.  The edge section is
    only checked for its count.
    """
    lines = list(_content_lines(text))
    vertices = None
    cells = []
    n_edges = None
    i = 0
    while i < len(lines):
        lineno, tok = lines[i]
        key = " ".join(tok).lower()
        if key not in _FVCA_SECTIONS:
            raise ParseError(f"unexpected token {tok[0]!r}", lineno)
        if i + 1 >= len(lines):
            raise ParseError("missing count", lineno)
        cl, ct = lines[i + 1]
        try:
            count = int(ct[0])
        except ValueError:
            raise ParseError("bad count", cl) from None
        rows = lines[i + 2:i + 2 + count]
        if len(rows) < count:
            raise ParseError(f"section {key} is truncated", lines[-1][0])
        if key == "vertices":
            try:
                vertices = np.array([[float(t) for t in r[:2]] for _, r in rows])
            except ValueError:
                raise ParseError("bad vertex coordinate", rows[0][0]) from None
        elif key in ("edges", "all edges"):
            n_edges = count
        elif key == "edges of the boundary":
            pass
        else:
            k = _FVCA_SECTIONS[key]
            for ln, r in rows:
                try:
                    cells.append(tuple(int(t) - 1 for t in r[:k]))
                except ValueError:
                    raise ParseError("bad cell record", ln) from None
                if len(r) < k:
                    raise ParseError("short cell record", ln)
        i += 2 + count
    if vertices is None:
        raise ParseError("no vertices section", 1)
    points = []
    for c in cells:
        p = vertices[list(c)]
        cc = circumcenter(p[0], p[1], p[2])
        r = np.linalg.norm(p - cc, axis=1)
        points.append(cc if np.ptp(r) <= 1e-10 * r.max() else p.mean(axis=0))
    mesh = build_mesh(vertices, cells, points)
    if n_edges is not None and n_edges != mesh.n_faces:
        raise NonConformity(f"edge section lists {n_edges} edges, cells define {mesh.n_faces}")
    return mesh
