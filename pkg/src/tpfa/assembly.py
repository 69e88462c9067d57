"""TPFA assembly with face elimination, the SPD cell solve, and the discrete Riesz solver.

Every right-hand side handled here is a linear functional on X_T written as

    l(v) = sum_K a_K v_K + sum_{K,s} b_{K,s} (v_s - v_K).

The scheme uses a_K = |K| f_K and b_{K,s} = -|s| F_{K,s}.  Testing the weak
form with a face indicator gives u_s as an affine function of the two adjacent
cell values, so the face unknowns are eliminated exactly and the remaining cell
system is the classical two-point matrix with transmissibilities
|s| / (d_{K,s} + d_{L,s}) inside and |s| / d_{K,s} on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DataMisalignment, SolverDivergence
from .mesh import AdmissibleMesh
from .space import DiscreteField

CG_RTOL = 1e-12
DIRECT_MAX_CELLS = 2000


@dataclass(frozen=True)
class SteadyProblemData:
    """Cell means of f and cone normal means of F (one value per cone)."""

    f: np.ndarray
    F: np.ndarray


@dataclass(frozen=True)
class LinearFunctional:
    """l(v) = sum a_K v_K + sum b_{K,s} (v_s - v_K)."""

    cell: np.ndarray
    cone: np.ndarray

    def __call__(self, v: DiscreteField) -> float:
        return float(np.dot(self.cell, v.cell) + np.dot(self.cone, v.cone_jumps()))


def scheme_functional(mesh: AdmissibleMesh, data: SteadyProblemData) -> LinearFunctional:
    f = np.asarray(data.f, dtype=float)
    F = np.asarray(data.F, dtype=float)
    if f.shape != (mesh.n_cells,) or F.shape != (mesh.n_cones,):
        raise DataMisalignment(
            f"data shapes {f.shape}/{F.shape} do not match ({mesh.n_cells},)/({mesh.n_cones},)"
        )
    return LinearFunctional(mesh.cell_measure * f, -mesh.face_measure[mesh.cone_face] * F)


@dataclass(frozen=True, eq=False)
class SparseSpdSystem:
    """Cell system plus what is needed to rebuild the interior face values.

    On an interior face s = K|L,
    u_s = wK u_K + wL u_L + c with wK = d_L/(d_K+d_L), wL = d_K/(d_K+d_L).
    """

    mesh: AdmissibleMesh
    matrix: sp.csr_matrix
    rhs: np.ndarray
    face_weight_K: np.ndarray
    face_weight_L: np.ndarray
    face_offset: np.ndarray

    def recover(self, cell_values: np.ndarray) -> DiscreteField:
        m = self.mesh
        inner = m.interior_faces
        K = m.cone_cell[m.face_cones[inner, 0]]
        L = m.cone_cell[m.face_cones[inner, 1]]
        face = self.face_weight_K * cell_values[K] + self.face_weight_L * cell_values[L] + self.face_offset
        return DiscreteField(m, cell_values, face)

    def to_coo_text(self) -> str:
        """Matrix entries as 'row col value' lines."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return "".join(f"{int(coo.row[i])} {int(coo.col[i])} {float(coo.data[i])!r}\n" for i in order)


def stiffness_matrix(mesh: AdmissibleMesh) -> sp.csr_matrix:
    """Eliminated cell matrix of d<G u, G v> (transmissibilities)."""
    inner = mesh.interior_faces
    cK, cL = mesh.face_cones[inner, 0], mesh.face_cones[inner, 1]
    dK, dL = mesh.cone_distance[cK], mesh.cone_distance[cL]
    K, L = mesh.cone_cell[cK], mesh.cone_cell[cL]
    tau = mesh.face_measure[inner] / (dK + dL)
    bnd = mesh.boundary_faces
    cb = mesh.face_cones[bnd, 0]
    tau_b = mesh.face_measure[bnd] / mesh.cone_distance[cb]
    Kb = mesh.cone_cell[cb]
    n = mesh.n_cells
    rows = np.concatenate([K, L, K, L, Kb])
    cols = np.concatenate([K, L, L, K, Kb])
    vals = np.concatenate([tau, tau, -tau, -tau, tau_b])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def reduce_functional(mesh: AdmissibleMesh, functional: LinearFunctional):
    """Cell right-hand side and interior face offsets after eliminating the faces."""
    a = np.asarray(functional.cell, dtype=float)
    b = np.asarray(functional.cone, dtype=float)
    if a.shape != (mesh.n_cells,) or b.shape != (mesh.n_cones,):
        raise DataMisalignment("functional coefficients do not match the mesh")
    inner = mesh.interior_faces
    cK, cL = mesh.face_cones[inner, 0], mesh.face_cones[inner, 1]
    dK, dL = mesh.cone_distance[cK], mesh.cone_distance[cL]
    K, L = mesh.cone_cell[cK], mesh.cone_cell[cL]
    bK, bL = b[cK], b[cL]
    dsum = dK + dL

    rhs = a.copy()
    cb = mesh.face_cones[mesh.boundary_faces, 0]
    np.subtract.at(rhs, mesh.cone_cell[cb], b[cb])
    flux = (dK * bK - dL * bL) / dsum
    np.subtract.at(rhs, K, flux)
    np.add.at(rhs, L, flux)
    offset = dK * dL * (bK + bL) / (mesh.face_measure[inner] * dsum)
    return rhs, offset


def face_weights(mesh: AdmissibleMesh):
    inner = mesh.interior_faces
    dK = mesh.cone_distance[mesh.face_cones[inner, 0]]
    dL = mesh.cone_distance[mesh.face_cones[inner, 1]]
    return dL / (dK + dL), dK / (dK + dL)


def assemble_functional(mesh: AdmissibleMesh, functional: LinearFunctional, cell_shift=None) -> SparseSpdSystem:
    """System for: find w in X_T with d<G w, G v> + sum c_K w_K v_K = l(v) for all v.

    ``cell_shift`` holds the optional c_K >= 0 (a lumped mass term).
    """
    rhs, offset = reduce_functional(mesh, functional)
    matrix = stiffness_matrix(mesh)
    if cell_shift is not None:
        matrix = (matrix + sp.diags(np.asarray(cell_shift, dtype=float))).tocsr()
    wK, wL = face_weights(mesh)
    return SparseSpdSystem(mesh, matrix, rhs, wK, wL, offset)


def assemble_steady(mesh: AdmissibleMesh, data: SteadyProblemData) -> SparseSpdSystem:
    return assemble_functional(mesh, scheme_functional(mesh, data))


class JacobiCG:
    """Conjugate gradients with diagonal preconditioning for SPD sparse matrices."""

    def __init__(self, matrix, rtol=CG_RTOL, max_iter=None):
        self.A = sp.csr_matrix(matrix)
        self.inv_diag = 1.0 / self.A.diagonal()
        self.rtol = rtol
        self.max_iter = max_iter if max_iter is not None else 10 * self.A.shape[0]
        self.iterations = 0

    def solve(self, b, x0=None):
        b = np.asarray(b, dtype=float)
        bnorm = np.linalg.norm(b)
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        if bnorm == 0.0:
            self.iterations = 0
            return np.zeros_like(b)
        r = b - self.A @ x
        z = self.inv_diag * r
        p = z.copy()
        rz = np.dot(r, z)
        for it in range(1, self.max_iter + 1):
            if np.linalg.norm(r) <= self.rtol * bnorm:
                self.iterations = it - 1
                return x
            Ap = self.A @ p
            alpha = rz / np.dot(p, Ap)
            x += alpha * p
            r -= alpha * Ap
            z = self.inv_diag * r
            rz_new = np.dot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        if np.linalg.norm(r) <= self.rtol * bnorm:
            self.iterations = self.max_iter
            return x
        raise SolverDivergence(
            f"CG reached {self.max_iter} iterations with relative residual {np.linalg.norm(r) / bnorm:.3e}"
        )


def solve_cells(matrix, rhs, method="cg", x0=None, rtol=CG_RTOL):
    """Solve the SPD cell system.  ``method`` is 'cg' or 'direct' (dense Cholesky)."""
    n = matrix.shape[0]
    if method == "direct":
        if n > DIRECT_MAX_CELLS:
            raise ValueError(f"direct solve is limited to {DIRECT_MAX_CELLS} cells")
        c = scipy.linalg.cho_factor(matrix.toarray())
        return scipy.linalg.cho_solve(c, rhs)
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    return JacobiCG(matrix, rtol=rtol).solve(rhs, x0=x0)


def solve(system: SparseSpdSystem, method="cg", x0=None) -> DiscreteField:
    """Cell values by PCG to relative residual 1e-12, then face recovery."""
    return system.recover(solve_cells(system.matrix, system.rhs, method=method, x0=x0))


def solve_steady(mesh, data: SteadyProblemData, method="cg") -> DiscreteField:
    return solve(assemble_steady(mesh, data), method=method)


def riesz_solve(mesh: AdmissibleMesh, functional: LinearFunctional, method="cg") -> DiscreteField:
    """w in X_T with d<G w, G v> = l(v) for every v in X_T."""
    return solve(assemble_functional(mesh, functional), method=method)


def l2_functional(mesh: AdmissibleMesh, z: np.ndarray) -> LinearFunctional:
    """v -> <z, v>_{L2} for a cell field z."""
    return LinearFunctional(mesh.cell_measure * np.asarray(z, dtype=float), np.zeros(mesh.n_cones))


# ----------------------------------------------------------- residual checks


def weak_form_residual(u: DiscreteField, data: SteadyProblemData, v: DiscreteField) -> float:
    """d<G u, G v> - (<f, v> - <F, grad_T v>)."""
    from .space import energy_inner

    return energy_inner(u, v) - scheme_functional(u.mesh, data)(v)


def strong_residuals(u: DiscreteField, data: SteadyProblemData):
    """Per-cell balance and per-interior-face conservation residuals."""
    m = u.mesh
    g = u.cone_jumps() / m.cone_distance
    area = m.face_measure[m.cone_face]
    F = np.asarray(data.F, dtype=float)
    lhs = -np.bincount(m.cone_cell, weights=area * g, minlength=m.n_cells)
    rhs = m.cell_measure * data.f + np.bincount(m.cone_cell, weights=area * F, minlength=m.n_cells)
    inner = m.interior_faces
    cK, cL = m.face_cones[inner, 0], m.face_cones[inner, 1]
    cons = (g[cK] + F[cK]) + (g[cL] + F[cL])
    return lhs - rhs, cons


def full_stiffness(mesh: AdmissibleMesh) -> sp.csr_matrix:
    """Matrix of d<G u, G v> on the full X_T vector (cells then interior faces)."""
    nc = mesh.n_cells
    w = mesh.face_measure[mesh.cone_face] / mesh.cone_distance
    K = mesh.cone_cell
    dof = mesh.cone_dof
    has = dof >= 0
    # jump_i = u_{dof} - u_K on each cone; the form is sum w_i jump_i^2
    rows = [K, ]
    cols = [K, ]
    vals = [w, ]
    rows += [K[has], nc + dof[has], nc + dof[has]]
    cols += [nc + dof[has], K[has], nc + dof[has]]
    vals += [-w[has], -w[has], w[has]]
    n = nc + mesh.n_interior
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
