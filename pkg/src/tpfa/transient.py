"""Implicit Euler for the heat equation with a contractive initial/final coupling.

The coupling condition is u(0) - Phi u(T) = xi0, with Phi a scaled identity
(Phi = 0 gives the Cauchy problem, Phi = I the time-periodic one).  Also holds
the space-time error functionals and the discrete energy inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .analysis import conformity_error, sine_product_oracle
from .assembly import (
    JacobiCG,
    LinearFunctional,
    face_weights,
    reduce_functional,
    stiffness_matrix,
)
from .errors import DataMisalignment, FixedPointStall, OracleMissing
from .mesh import AdmissibleMesh
from .quadrature import gauss_legendre, integrate_cells
from .space import (
    DiscreteField,
    ExactSolutionOracle,
    canonical_interpolant,
    cell_l2_norm,
    energy_inner,
    harmonic_face_values,
    mean_normal_gradient,
)

FIXED_POINT_TOL = 1e-11
MAX_SWEEPS = 500
TIME_NODES, TIME_WEIGHTS = gauss_legendre(3)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform steps k = T/N; T is re-stored as N*k so that the product is exact."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 1 or not self.T > 0:
            raise ValueError("need T > 0 and N >= 1")
        object.__setattr__(self, "T", self.N * (self.T / self.N))

    @property
    def k(self) -> float:
        return self.T / self.N

    def times(self) -> np.ndarray:
        return self.k * np.arange(self.N + 1)

    def slab_nodes(self, m: int) -> np.ndarray:
        """3-point Gauss nodes inside ((m-1)k, mk)."""
        return (m - 1 + TIME_NODES) * self.k

    def slab_average(self, func: Callable[[float], np.ndarray], m: int):
        return sum(w * np.asarray(func(t), dtype=float) for t, w in zip(self.slab_nodes(m), TIME_WEIGHTS))


@dataclass(frozen=True)
class CouplingMap:
    """Phi = lam * Id with 0 <= lam <= 1; kinds 'zero', 'identity', 'scaled'."""

    kind: str = "zero"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind == "zero":
            object.__setattr__(self, "lam", 0.0)
        elif self.kind == "identity":
            object.__setattr__(self, "lam", 1.0)
        elif self.kind != "scaled":
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("coupling must be a contraction: 0 <= lam <= 1")

    def __call__(self, cells: np.ndarray) -> np.ndarray:
        return self.lam * cells


@dataclass(frozen=True, eq=False)
class TransientProblemData:
    """Slab averages f (N, ncells) and F (N, ncones), initial cell datum xi0, coupling."""

    f: np.ndarray
    F: np.ndarray
    xi0: np.ndarray
    coupling: CouplingMap = field(default_factory=CouplingMap)

    @property
    def N(self) -> int:
        return self.f.shape[0]


@dataclass(eq=False)
class SpaceTimeField:
    """u^(0..N); u(t) = u^(m) on ((m-1)k, mk] and u(0) = u^(0)."""

    grid: TimeGrid
    fields: List[DiscreteField]
    sweeps: int = 0
    contraction: float = 0.0

    def __post_init__(self):
        if len(self.fields) != self.grid.N + 1:
            raise DataMisalignment("a space-time field needs N + 1 states")
        mesh = self.fields[0].mesh
        if any(f.mesh is not mesh for f in self.fields):
            raise DataMisalignment("all states must live on the same mesh")

    @property
    def mesh(self) -> AdmissibleMesh:
        return self.fields[0].mesh

    def index_at(self, t: float) -> int:
        if t <= 0.0:
            return 0
        return min(int(math.ceil(t / self.grid.k - 1e-12)), self.grid.N)

    def at(self, t: float) -> DiscreteField:
        return self.fields[self.index_at(t)]

    def cell_norms(self) -> np.ndarray:
        return np.array([cell_l2_norm(f) for f in self.fields])

    def to_csv(self) -> str:
        lines = ["step,t,l2"]
        for m, (t, n) in enumerate(zip(self.grid.times(), self.cell_norms())):
            lines.append(f"{m},{float(t)!r},{float(n)!r}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ data


def time_average_data(f, F, grid: TimeGrid, mesh: AdmissibleMesh, xi0, coupling: CouplingMap | None = None):
    """Slab averages of f(t) (cell means) and F(t) (cone normal means), 3-point Gauss in time.

    ``f`` and ``F`` are callables of t returning the spatial reductions; either
    may be None for zero data.
    """
    zf = np.zeros(mesh.n_cells)
    zF = np.zeros(mesh.n_cones)
    fs = np.array([grid.slab_average(f, m) if f is not None else zf for m in range(1, grid.N + 1)])
    Fs = np.array([grid.slab_average(F, m) if F is not None else zF for m in range(1, grid.N + 1)])
    xi0 = np.asarray(xi0, dtype=float)
    if fs.shape != (grid.N, mesh.n_cells) or Fs.shape != (grid.N, mesh.n_cones) or xi0.shape != (mesh.n_cells,):
        raise DataMisalignment("transient data do not match the mesh")
    return TransientProblemData(fs, Fs, xi0, coupling or CouplingMap())


# ------------------------------------------------------------------ stepping


class StepOperator:
    """Shifted system mass/k + stiffness, factorized once for all steps."""

    def __init__(self, mesh: AdmissibleMesh, k: float, method: str = "lu"):
        self.mesh = mesh
        self.k = k
        self.mass = mesh.cell_measure / k
        self.matrix = (stiffness_matrix(mesh) + sp.diags(self.mass)).tocsc()
        self.method = method
        if method == "lu":
            self._lu = spla.splu(self.matrix)
        elif method == "cg":
            self._cg = JacobiCG(self.matrix)
        else:
            raise ValueError(f"unknown method {method!r}")
        self.wK, self.wL = face_weights(mesh)

    def __call__(self, u_prev_cells, f_m, F_m) -> DiscreteField:
        m = self.mesh
        ell = LinearFunctional(m.cell_measure * f_m + self.mass * u_prev_cells,
                               -m.face_measure[m.cone_face] * F_m)
        rhs, offset = reduce_functional(m, ell)
        if self.method == "lu":
            cells = self._lu.solve(rhs)
        else:
            cells = self._cg.solve(rhs, x0=u_prev_cells)
        inner = m.interior_faces
        K = m.cone_cell[m.face_cones[inner, 0]]
        L = m.cone_cell[m.face_cones[inner, 1]]
        return DiscreteField(m, cells, self.wK * cells[K] + self.wL * cells[L] + offset)


def step(u_prev: DiscreteField, f_m, F_m, k: float, mesh: AdmissibleMesh | None = None) -> DiscreteField:
    """One implicit Euler step."""
    mesh = mesh or u_prev.mesh
    return StepOperator(mesh, k)(u_prev.cell, np.asarray(f_m, float), np.asarray(F_m, float))


def initial_state(mesh, cells) -> DiscreteField:
    """u^(0) from its cell values; face values are not fixed by the scheme, we use the harmonic ones."""
    cells = np.asarray(cells, dtype=float)
    return DiscreteField(mesh, cells, harmonic_face_values(mesh, cells))


def _march(op: StepOperator, data: TransientProblemData, u0_cells, grid):
    out = [initial_state(op.mesh, u0_cells)]
    for m in range(grid.N):
        out.append(op(out[-1].cell, data.f[m], data.F[m]))
    return out


def solve_transient(data: TransientProblemData, grid: TimeGrid, mesh: AdmissibleMesh, method="lu",
                    tol=FIXED_POINT_TOL, max_sweeps=MAX_SWEEPS) -> SpaceTimeField:
    """Implicit Euler; for Phi != 0 a fixed-point iteration on u^(0).

    Each sweep marches all N steps from the current u^(0) and resets
    u^(0) <- xi0 + Phi u^(N), until the L2 change drops below ``tol``.
    """
    if data.N != grid.N:
        raise DataMisalignment("data and time grid disagree on N")
    op = StepOperator(mesh, grid.k, method)
    phi = data.coupling
    if phi.lam == 0.0:
        return SpaceTimeField(grid, _march(op, data, data.xi0, grid), sweeps=1)
    u0 = data.xi0.copy()
    changes = []
    for sweep in range(1, max_sweeps + 1):
        states = _march(op, data, u0, grid)
        new = data.xi0 + phi(states[-1].cell)
        change = float(np.sqrt(np.dot(mesh.cell_measure, (new - u0) ** 2)))
        changes.append(change)
        if change < tol:
            rate = changes[-1] / changes[-2] if len(changes) > 1 and changes[-2] > 0 else 0.0
            return SpaceTimeField(grid, states, sweeps=sweep, contraction=rate)
        u0 = new
    raise FixedPointStall(f"no convergence of the initial state after {max_sweeps} sweeps (last change {change:.3e})")


def time_derivative(u: SpaceTimeField) -> List[DiscreteField]:
    """(u^(m) - u^(m-1)) / k for m = 1..N."""
    k = u.grid.k
    return [(u.fields[m] - u.fields[m - 1]) * (1.0 / k) for m in range(1, u.grid.N + 1)]


class RieszOperator:
    """R_T with one factorization: d<G R v, G w> = <v, w> for all w."""

    def __init__(self, mesh: AdmissibleMesh):
        self.mesh = mesh
        self._lu = spla.splu(stiffness_matrix(mesh).tocsc())
        self.wK, self.wL = face_weights(mesh)

    def __call__(self, v: DiscreteField) -> DiscreteField:
        m = self.mesh
        rhs, offset = reduce_functional(m, LinearFunctional(m.cell_measure * v.cell, np.zeros(m.n_cones)))
        cells = self._lu.solve(rhs)
        inner = m.interior_faces
        K = m.cone_cell[m.face_cones[inner, 0]]
        L = m.cone_cell[m.face_cones[inner, 1]]
        return DiscreteField(m, cells, self.wK * cells[K] + self.wL * cells[L] + offset)


def discrete_riesz(v: DiscreteField, mesh: AdmissibleMesh | None = None) -> DiscreteField:
    return RieszOperator(mesh or v.mesh)(v)


# ------------------------------------------------------------ error functionals


class SeparableHeatSolution:
    """u(t, x) = g(t) s(x) with -laplacian(s) = lam s and s = 0 on the boundary.

    Then R u' = g'(t) s / lam, f = (g' + lam g) s, F = 0, and the flux
    grad R u' + grad u has divergence -f.
    """

    def __init__(self, space: ExactSolutionOracle, eigenvalue: float, g: Callable, dg: Callable):
        self.space = space
        self.eigenvalue = eigenvalue
        self.g = g
        self.dg = dg
        self._cache = []

    def reductions(self, mesh):
        for owner, red in self._cache:
            if owner is mesh:
                return red
        moments = integrate_cells(mesh, lambda x: np.stack([self.space.value(x), self.space.value(x) ** 2], -1))
        means = mean_normal_gradient(self.space, mesh).values
        red = (moments[:, 0], moments[:, 1], means)
        self._cache.append((mesh, red))
        return red

    def state(self, t) -> ExactSolutionOracle:
        g = self.g(t)
        s = self.space
        return ExactSolutionOracle(value=lambda x: g * s.value(x), gradient=lambda x: g * s.gradient(x),
                                   name=f"{s.name}@t")

    def source_means(self, mesh, t):
        i1, _, _ = self.reductions(mesh)
        return (self.dg(t) + self.eigenvalue * self.g(t)) * i1 / mesh.cell_measure

    def initial_cells(self, mesh, coupling: CouplingMap, T: float):
        """Cell means of xi0 = u(0) - Phi u(T)."""
        i1, _, _ = self.reductions(mesh)
        return (self.g(0.0) - coupling.lam * self.g(T)) * i1 / mesh.cell_measure

    def normal_means(self, mesh, t):
        return self.g(t) * self.reductions(mesh)[2]

    def riesz_normal_means(self, mesh, t):
        return self.dg(t) / self.eigenvalue * self.reductions(mesh)[2]

    def flux_normal_means(self, mesh, t):
        return self.riesz_normal_means(mesh, t) + self.normal_means(mesh, t)

    def l2_error(self, cells, mesh, t) -> float:
        i1, i2, _ = self.reductions(mesh)
        g = self.g(t)
        sq = g * g * i2 - 2.0 * g * cells * i1 + mesh.cell_measure * cells ** 2
        return float(np.sqrt(max(np.sum(sq), 0.0)))

    def problem_data(self, mesh, grid: TimeGrid, coupling: CouplingMap | None = None) -> TransientProblemData:
        coupling = coupling or CouplingMap()
        return time_average_data(lambda t: self.source_means(mesh, t), None, grid, mesh,
                                 self.initial_cells(mesh, coupling, grid.T), coupling)

    def interpolant(self, mesh, grid: TimeGrid) -> SpaceTimeField:
        base = canonical_interpolant(self.space, mesh)
        return SpaceTimeField(grid, [base * self.g(t) for t in grid.times()])


def heat_manufactured() -> SeparableHeatSolution:
    """e^{-t} sin(pi x) sin(pi y) on the unit square."""
    return SeparableHeatSolution(sine_product_oracle(), 2.0 * math.pi ** 2,
                                 lambda t: math.exp(-t), lambda t: -math.exp(-t))


@dataclass(frozen=True)
class TimeDelta:
    total: float
    riesz_term: float
    grad_term: float
    max_term: float


def _cone_sq(mesh, x):
    return float(np.dot(mesh.cone_measure, x * x))


def delta_time(bundle, u: SpaceTimeField, riesz: RieszOperator | None = None) -> TimeDelta:
    """d||G R u' - G_T R_T du|| + d||G u - G_T u|| (L2 in space-time) + max_t ||u(t) - u_h(t)||.

    Time integrals use 3-point Gauss per slab; the max is sampled at t = 0, both
    ends of every slab (the left end as a limit from inside) and the 3 nodes.
    """
    if getattr(bundle, "riesz_normal_means", None) is None:
        raise OracleMissing("the bundle provides no closed-form Riesz image of the time derivative")
    mesh = u.mesh
    grid = u.grid
    k = grid.k
    d = mesh.dim
    riesz = riesz or RieszOperator(mesh)
    rd = [riesz(w) for w in time_derivative(u)]
    r_sq = 0.0
    g_sq = 0.0
    worst = bundle.l2_error(u.fields[0].cell, mesh, 0.0)
    for m in range(1, grid.N + 1):
        um = u.fields[m]
        G_u = um.cone_jumps() / mesh.cone_distance
        G_r = rd[m - 1].cone_jumps() / mesh.cone_distance
        for t, w in zip(grid.slab_nodes(m), TIME_WEIGHTS):
            r_sq += k * w * _cone_sq(mesh, bundle.riesz_normal_means(mesh, t) - G_r)
            g_sq += k * w * _cone_sq(mesh, bundle.normal_means(mesh, t) - G_u)
        for t in [(m - 1) * k, *grid.slab_nodes(m), m * k]:
            worst = max(worst, bundle.l2_error(um.cell, mesh, t))
    rt = d * math.sqrt(r_sq)
    gt = d * math.sqrt(g_sq)
    return TimeDelta(rt + gt + worst, rt, gt, worst)


def zeta_time(cone_means, div_integrals, grid: TimeGrid, mesh: AdmissibleMesh) -> float:
    """Space-time conformity error from per-slab averages.

    Test functions are constant on slabs, so the supremum splits across slabs:
    zeta = sqrt(d) (sum_m k zeta_m^2)^(1/2) with zeta_m the steady dual norm.
    """
    cone_means = np.asarray(cone_means, dtype=float)
    div_integrals = np.asarray(div_integrals, dtype=float)
    z = np.array([conformity_error(mesh, cone_means[m], div_integrals[m]) for m in range(grid.N)])
    return math.sqrt(mesh.dim) * math.sqrt(grid.k * np.sum(z * z))


def manufactured_zeta(bundle: SeparableHeatSolution, grid: TimeGrid, mesh, data: TransientProblemData) -> float:
    """zeta of v = grad R u' + grad u + F, using div v = -f slab by slab."""
    means = np.array([grid.slab_average(lambda t: bundle.flux_normal_means(mesh, t), m)
                      for m in range(1, grid.N + 1)])
    return zeta_time(means, -mesh.cell_measure * data.f, grid, mesh)


# ------------------------------------------------------------ energy inequalities


@dataclass(frozen=True)
class EnergyCheck:
    max_ok: bool
    energy_ok: bool
    final_ok: bool
    max_margin: float
    energy_margin: float
    final_margin: float

    @property
    def ok(self) -> bool:
        return self.max_ok and self.energy_ok and self.final_ok


def energy_checks(w: SpaceTimeField, riesz: RieszOperator | None = None, slack=1e-12) -> EnergyCheck:
    """The three discrete energy inequalities for an arbitrary space-time field.

    A = ||d G R dw||, B = ||d G w|| in L2(0,T; L2):
      max_t ||w(t)|| <= A + B + ||w(0)||
      sum_m k <G R dw, d G w> >= (||w(T)||^2 - ||w(0)||^2) / 2
      A^2 + (1 + diam^2 / T) B^2 >= ||w(T)||^2
    """
    mesh = w.mesh
    grid = w.grid
    k = grid.k
    d = mesh.dim
    riesz = riesz or RieszOperator(mesh)
    rd = [riesz(x) for x in time_derivative(w)]
    # d^2 ||G v||^2 = d * energy_inner(v, v)
    A2 = k * d * sum(energy_inner(r, r) for r in rd)
    B2 = k * d * sum(energy_inner(x, x) for x in w.fields[1:])
    cross = k * sum(energy_inner(r, x) for r, x in zip(rd, w.fields[1:]))
    norms = w.cell_norms()
    n0, nT = norms[0], norms[-1]
    scale = max(1.0, float(norms.max()) ** 2)
    m1 = math.sqrt(A2) + math.sqrt(B2) + n0 - float(norms.max())
    m2 = cross - 0.5 * (nT * nT - n0 * n0)
    m3 = A2 + (1.0 + mesh.domain_diameter ** 2 / grid.T) * B2 - nT * nT
    tol = slack * scale
    return EnergyCheck(m1 >= -tol, m2 >= -tol, m3 >= -tol, m1, m2, m3)


def random_space_time_field(mesh, grid: TimeGrid, rng) -> SpaceTimeField:
    return SpaceTimeField(grid, [DiscreteField.random(mesh, rng) for _ in range(grid.N + 1)])


# ------------------------------------------------------------ manufactured run


@dataclass(frozen=True)
class TransientRun:
    h: float
    k: float
    delta: TimeDelta
    zeta: float
    interp_delta: TimeDelta
    solution: SpaceTimeField

    CSV_HEADER = "h,k,delta,riesz_term,grad_term,max_term,zeta,interp_delta"

    def csv_row(self) -> str:
        vals = (self.h, self.k, self.delta.total, self.delta.riesz_term, self.delta.grad_term,
                self.delta.max_term, self.zeta, self.interp_delta.total)
        return ",".join(repr(float(v)) for v in vals)

    @property
    def ratio(self) -> float:
        """delta / (zeta + delta of the interpolant); bounded under refinement."""
        return self.delta.total / (self.zeta + self.interp_delta.total)


def run_manufactured(mesh, grid: TimeGrid, coupling: CouplingMap | None = None,
                     bundle: SeparableHeatSolution | None = None, method="lu") -> TransientRun:
    bundle = bundle or heat_manufactured()
    data = bundle.problem_data(mesh, grid, coupling)
    u = solve_transient(data, grid, mesh, method=method)
    riesz = RieszOperator(mesh)
    dl = delta_time(bundle, u, riesz)
    z = manufactured_zeta(bundle, grid, mesh, data)
    di = delta_time(bundle, bundle.interpolant(mesh, grid), riesz)
    return TransientRun(mesh.quality().h, grid.k, dl, z, di, u)
