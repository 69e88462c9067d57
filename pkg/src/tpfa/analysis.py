"""Error functionals for the steady scheme and numerical checks of the error bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .assembly import LinearFunctional, SteadyProblemData, riesz_solve, solve_steady
from .errors import BoundViolation
from .mesh import AdmissibleMesh, MeshQuality
from .quadrature import integrate_cells
from .space import (
    DiscreteField,
    ExactSolutionOracle,
    canonical_interpolant,
    cell_moments,
    centered_square_integrals,
    consistent_gradient,
    discrete_norm,
    mean_normal_gradient,
    normal_derivative,
    oscillation,
)

ZETA_FLOOR = 1e-9


def unit_ball_measure(d: int) -> float:
    """C_d, the measure of the unit ball in R^d."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


# ------------------------------------------------------------------ error terms


def l2_error(phi: ExactSolutionOracle, u: DiscreteField, levels=3) -> float:
    """||phi - u||_{L2} with u piecewise constant on cells."""
    m = u.mesh
    if phi.cell_moments is not None:
        i1, i2 = phi.cell_moments(m)
        sq = i2 - 2.0 * u.cell * i1 + m.cell_measure * u.cell ** 2
        return float(np.sqrt(max(np.sum(sq), 0.0)))
    sq = centered_square_integrals(m, phi.value, u.cell, phi.singular_point, levels)
    return float(np.sqrt(np.sum(sq)))


def normal_grad_error(phi: ExactSolutionOracle, u: DiscreteField, means=None) -> float:
    """||mean normal gradient of phi - G_T u||_{L2} over the cones."""
    g = mean_normal_gradient(phi, u.mesh) if means is None else means
    return (g - normal_derivative(u)).l2_norm()


def delta(phi: ExactSolutionOracle, u: DiscreteField, means=None):
    """delta_T(phi, u) = ||phi - u|| / diam + sqrt(d) ||G phi - G_T u||.

    Returns (delta, l2 term, normal gradient term).
    """
    m = u.mesh
    l2 = l2_error(phi, u)
    ng = normal_grad_error(phi, u, means)
    return l2 / m.domain_diameter + math.sqrt(m.dim) * ng, l2, ng


def conformity_error(mesh: AdmissibleMesh, cone_means, div_integrals, method="cg") -> float:
    """Dual norm of v -> sum_K (int_K div phi) v_K + sum |s| phi_n (v_s - v_K) over X_T.

    ``cone_means`` are the cone means of phi . n_{K,s}; ``div_integrals`` are
    int_K div phi.  Values below the solver noise floor are reported as 0.
    """
    cone_means = np.asarray(cone_means, dtype=float)
    div_integrals = np.asarray(div_integrals, dtype=float)
    if not (np.any(cone_means) or np.any(div_integrals)):
        return 0.0
    ell = LinearFunctional(div_integrals, mesh.face_measure[mesh.cone_face] * cone_means)
    w = riesz_solve(mesh, ell, method=method)
    z = discrete_norm(w)
    return 0.0 if z < ZETA_FLOOR else z


def scheme_conformity(mesh, means, data: SteadyProblemData, method="cg") -> float:
    """zeta_T(grad u + F) for the steady problem, using -div(grad u + F) = f."""
    return conformity_error(mesh, means + data.F, -mesh.cell_measure * data.f, method=method)


def consistent_gradient_error(phi: ExactSolutionOracle, u: DiscreteField, means=None, theta_osc=None,
                              levels=3, check=True):
    """||consistent gradient of u - grad phi||_{L2} and its a-priori bound.

    The bound is (d/theta_T)(||G_T u - G phi|| + Theta_T(grad phi)).  Raises
    BoundViolation when the value exceeds it and ``check`` is set.
    """
    m = u.mesh
    rec = consistent_gradient(u).values
    if phi.gradient_moments is not None:
        first, second = phi.gradient_moments(m)
        sq = second - 2.0 * np.sum(rec * first, axis=1) + m.cell_measure * np.sum(rec ** 2, axis=1)
        value = float(np.sqrt(max(np.sum(sq), 0.0)))
    else:
        sq = centered_square_integrals(m, phi.gradient, rec, phi.singular_point, levels)
        value = float(np.sqrt(np.sum(sq)))
    ng = normal_grad_error(phi, u, means)
    osc = oscillation(phi, m) if theta_osc is None else theta_osc
    bound = m.dim / m.quality().theta * (ng + osc)
    if check and value > bound * (1.0 + 1e-12):
        raise BoundViolation(f"consistent gradient error {value!r} exceeds its bound {bound!r}")
    return value, bound


# ------------------------------------------------------------------ the report


@dataclass(frozen=True)
class ErrorReport:
    h: float
    theta: float
    l2_error: float
    normal_grad_error: float
    delta: float
    consistent_grad_error: float
    conformity: float
    interp_upper: float
    theta_osc: float

    CSV_HEADER = "h,theta,l2,ngrad,delta,cgrad,zeta,interp_ub,theta_osc"

    def csv_row(self) -> str:
        return ",".join(repr(float(getattr(self, f.name))) for f in fields(self))

    @property
    def quality(self) -> MeshQuality:
        return MeshQuality(self.h, self.theta)


@dataclass(frozen=True)
class SandwichResult:
    lower_ok: bool
    upper_ok: bool
    lower_margin: float
    upper_margin: float

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def sandwich_check(report: ErrorReport, slack=1e-9) -> SandwichResult:
    """zeta <= delta and delta <= 3 (zeta + delta(phi, interpolant))."""
    lower = report.delta - report.conformity
    upper = 3.0 * (report.conformity + report.interp_upper) - report.delta
    return SandwichResult(lower >= -slack, upper >= -slack, lower, upper)


def error_report(phi: ExactSolutionOracle, u: DiscreteField, data: SteadyProblemData, method="cg",
                 interpolant=None) -> ErrorReport:
    """Every steady error functional for one solve."""
    m = u.mesh
    q = m.quality()
    means = mean_normal_gradient(phi, m)
    d_u, l2, ng = delta(phi, u, means)
    osc = oscillation(phi, m)
    cg, _ = consistent_gradient_error(phi, u, means, osc)
    zeta = scheme_conformity(m, means.values, data, method=method)
    ut = canonical_interpolant(phi, m) if interpolant is None else interpolant
    d_t, _, _ = delta(phi, ut, means)
    return ErrorReport(q.h, q.theta, l2, ng, d_u, cg, zeta, d_t, osc)


# ------------------------------------------------------------- singular table


@dataclass(frozen=True)
class BenchmarkRow:
    """One level of the singular benchmark table.

    e1 = ||interpolant - u||, e2 = ||u_exact - u||, e3 = ||G u_exact - G_T u||,
    e4 = delta(u_exact, u), e5 = delta(u_exact, interpolant).
    """

    h: float
    e1: float
    e2: float
    e3: float
    e4: float
    e5: float
    report: ErrorReport

    CSV_HEADER = "h,e1,e2,e3,e4,e5"

    def csv_row(self) -> str:
        return ",".join(repr(float(v)) for v in (self.h, self.e1, self.e2, self.e3, self.e4, self.e5))


def benchmark_level(mesh, phi: ExactSolutionOracle, data: SteadyProblemData, method="cg") -> BenchmarkRow:
    u = solve_steady(mesh, data, method=method)
    ut = canonical_interpolant(phi, mesh)
    rep = error_report(phi, u, data, method=method, interpolant=ut)
    e1 = float(np.sqrt(np.dot(mesh.cell_measure, (ut.cell - u.cell) ** 2)))
    return BenchmarkRow(rep.h, e1, rep.l2_error, rep.normal_grad_error, rep.delta, rep.interp_upper, rep)


# ------------------------------------------------------------ H2 convergence


def observed_orders(h, e):
    """p_i = log(e_i / e_{i+1}) / log(h_i / h_{i+1})."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def sine_product_oracle() -> ExactSolutionOracle:
    """u = sin(pi x) sin(pi y) on the unit square; its full H2 norm is in ``h2_norm``."""
    pi = math.pi

    def value(x):
        return np.sin(pi * x[..., 0]) * np.sin(pi * x[..., 1])

    def gradient(x):
        sx, sy = np.sin(pi * x[..., 0]), np.sin(pi * x[..., 1])
        cx, cy = np.cos(pi * x[..., 0]), np.cos(pi * x[..., 1])
        return np.stack([pi * cx * sy, pi * sx * cy], axis=-1)

    def laplacian(x):
        return -2.0 * pi * pi * value(x)

    return ExactSolutionOracle(
        value=value,
        gradient=gradient,
        laplacian=laplacian,
        h2_norm=math.sqrt(0.25 + pi ** 2 / 2.0 + pi ** 4),
        name="sine-product",
    )


def source_means(phi: ExactSolutionOracle, mesh) -> np.ndarray:
    """Cell means of f = -laplacian(phi)."""
    return -integrate_cells(mesh, phi.laplacian) / mesh.cell_measure


@dataclass(frozen=True)
class RateRow:
    report: ErrorReport
    theta_bound: float

    @property
    def theta_ok(self) -> bool:
        return self.report.theta_osc <= self.theta_bound * 1.01


def h2_rate_study(meshes, phi: ExactSolutionOracle, method="cg"):
    """Solve with F = 0 on each mesh; return per-level rows and the L2 / gradient orders."""
    rows = []
    for mesh in meshes:
        data = SteadyProblemData(source_means(phi, mesh), np.zeros(mesh.n_cones))
        u = solve_steady(mesh, data, method=method)
        rep = error_report(phi, u, data, method=method)
        q = mesh.quality()
        rows.append(RateRow(rep, q.h / q.theta ** (mesh.dim / 2.0) * phi.h2_norm))
    h = [r.report.h for r in rows]
    l2_orders = observed_orders(h, [r.report.l2_error for r in rows])
    grad_orders = observed_orders(h, [r.report.consistent_grad_error for r in rows])
    return rows, l2_orders, grad_orders


# -------------------------------------------------------- mean-value estimate


def mean_value_ratios(phi: ExactSolutionOracle, mesh) -> np.ndarray:
    """Per cell: int_K (mean - phi)^2 divided by h_K^2 (C_d h_K^d / |K|) int_K |grad phi|^2.

    Values <= 1 confirm the mean-value estimate on convex cells.
    """
    i1, _ = cell_moments(phi, mesh)
    mean = i1 / mesh.cell_measure
    lhs = centered_square_integrals(mesh, phi.value, mean, phi.singular_point, 3)
    g2 = integrate_cells(mesh, lambda x: np.sum(phi.gradient(x) ** 2, axis=-1), phi.singular_point)
    hk = mesh.cell_diameter
    rhs = hk ** 2 * unit_ball_measure(mesh.dim) * hk ** mesh.dim / mesh.cell_measure * g2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rhs > 0, lhs / rhs, 0.0)
