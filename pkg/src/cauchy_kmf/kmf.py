"""Alternating Dirichlet/Neumann iteration for elliptic Cauchy problems.

Given Cauchy data (f, g) on the data segment, one step maps a Neumann trace
phi on the reconstruction segment to the next one:

    w solves P w = 0,  w = f on the data segment,  flux(w) = phi on the
      reconstruction segment;            psi = w on the reconstruction segment
    v solves P v = 0,  flux(v) = g on the data segment,  v = psi on the
      reconstruction segment;            phi_next = flux(v) there.

The map phi -> phi_next is affine, ``T(phi) = T_l(phi) + z``. Its linear part
is self-adjoint and non-expansive in the energy ("star") inner product
``<phi, chi>_* = u_phi' K u_chi``, where ``u_phi`` solves the homogeneous
w-problem with flux ``phi``.

Discrete Neumann traces are nodal vectors on the reconstruction segment.
Entries at nodes that the w-problem constrains (junctions with Dirichlet
segments) are not degrees of freedom and are kept at zero; ``dofs`` in
:class:`OperatorAudit` maps operator indices to segment positions.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg as la

from .errors import InsufficientData, InvalidArgument, Unsupported
from .fem import (
    EllipticCoefficients,
    MixedBVP,
    MixedSolver,
    TraceField,
    assemble,
    neumann_trace,
    solve_mixed,
    trace_values,
)

__all__ = [
    "CauchyProblem",
    "StepResult",
    "StepRecord",
    "IterationState",
    "OperatorAudit",
    "ConvergenceAudit",
    "kmf_step",
    "kmf_run",
    "affine_offset",
    "assemble_Tl",
    "star_inner",
    "star_equivalence",
    "audit_convergence_theory",
    "write_history_csv",
    "write_audit_json",
    "manufactured_problem",
]


def _as_values(x):
    return np.asarray(x.values if isinstance(x, TraceField) else x, dtype=float)


@dataclass(eq=False)
class CauchyProblem:
    """Cauchy data on ``cauchy_segment``; the trace on ``reconstruction_segment`` is sought.

    ``extra`` maps every remaining segment to ``("dirichlet" | "neumann",
    data)``; these conditions are added to both half-steps. ``f`` and ``g``
    accept anything :func:`fem.trace_values` accepts.
    """

    mesh: object
    cauchy_segment: str
    reconstruction_segment: str
    f: object = 0.0
    g: object = 0.0
    extra: dict = field(default_factory=dict)
    coefficients: EllipticCoefficients = field(default_factory=EllipticCoefficients)
    source: object = None
    picard_tol: float = 1e-8
    picard_max_iter: int = 50

    def __post_init__(self):
        tags = set(self.mesh.segments)
        g1, g2 = self.cauchy_segment, self.reconstruction_segment
        if g1 == g2 or g1 not in tags or g2 not in tags:
            raise InvalidArgument("need two distinct existing segments for data and reconstruction")
        if {g1, g2} & set(self.extra):
            raise InvalidArgument("extra conditions may not reference the data or reconstruction segment")
        missing = tags - {g1, g2} - set(self.extra)
        if missing:
            raise InvalidArgument(f"segments {sorted(missing)} have no condition")
        for tag, (kind, _) in self.extra.items():
            if kind not in ("dirichlet", "neumann"):
                raise InvalidArgument(f"unknown condition kind {kind!r} on {tag!r}")
        self.f = trace_values(self.mesh, g1, self.f)
        self.g = trace_values(self.mesh, g1, self.g)

    @property
    def is_linear(self):
        return self.coefficients.semilinear is None

    def segment_roles(self):
        roles = {t: "auxiliary" for t in self.extra}
        roles[self.cauchy_segment] = "cauchy-data"
        roles[self.reconstruction_segment] = "reconstruction"
        return roles

    def with_data(self, f, g, extra_values=None):
        """Same geometry and operator with new Cauchy data (and optionally new extra data)."""
        extra = self.extra
        if extra_values is not None:
            extra = {t: (k, extra_values.get(t, d)) for t, (k, d) in self.extra.items()}
        return CauchyProblem(
            self.mesh, self.cauchy_segment, self.reconstruction_segment, f, g, extra,
            self.coefficients, self.source, self.picard_tol, self.picard_max_iter,
        )

    def homogeneous(self):
        return self.with_data(0.0, 0.0, {t: 0.0 for t in self.extra})

    @cached_property
    def ops(self):
        return _Discretization(self)


class _Discretization:
    """Factorized half-step solvers and fixed loads of one Cauchy problem."""

    def __init__(self, problem):
        mesh = problem.mesh
        self.problem = problem
        self.mesh = mesh
        self.assembly = assemble(mesh, problem.coefficients)
        g1, g2 = problem.cauchy_segment, problem.reconstruction_segment
        extra_d = [t for t, (k, _) in problem.extra.items() if k == "dirichlet"]
        extra_n = {t: d for t, (k, d) in problem.extra.items() if k == "neumann"}
        self.w_solver = MixedSolver(mesh, problem.coefficients, [g1] + extra_d, self.assembly)
        self.v_solver = MixedSolver(mesh, problem.coefficients, [g2] + extra_d, self.assembly)
        self.seg2 = mesh.segments[g2]
        self.weights2 = self.assembly.boundary_weights[g2]
        self.dof_mask = ~self.w_solver.constrained[self.seg2.nodes]
        self.dofs = np.flatnonzero(self.dof_mask)

        sl = problem.coefficients.semilinear
        self.nonlinear = sl.N if sl is not None else None
        source = _source_values(problem)
        extra_dv = {t: problem.extra[t][1] for t in extra_d}
        self.w_dirichlet = {g1: problem.f, **extra_dv}
        self.v_dirichlet_base = self.v_solver.dirichlet_vector(extra_dv)
        self.b_w = self.w_solver.load(extra_n, source)
        self.b_v = self.v_solver.load({g1: problem.g, **extra_n}, source)

    def w_load(self, phi):
        b = self.b_w.copy()
        b[self.seg2.nodes] += self.weights2 * np.where(self.dof_mask, phi, 0.0)
        return b

    def v_dirichlet(self, psi):
        u_d = self.v_dirichlet_base.copy()
        u_d[self.seg2.nodes] = psi
        # auxiliary Dirichlet segments win at shared nodes
        for tag in self.v_solver.dirichlet_tags[1:]:
            nodes = self.mesh.segments[tag].nodes
            u_d[nodes] = self.v_dirichlet_base[nodes]
        return u_d

    def _half(self, solver, dirichlet, b, u0):
        if self.nonlinear is None:
            return solver.solve(dirichlet, b)
        if isinstance(dirichlet, np.ndarray):
            dirichlet = {
                t: dirichlet[self.mesh.segments[t].nodes] for t in solver.dirichlet_tags
            }
        p = self.problem
        u, _ = solver.picard(dirichlet, b, self.nonlinear, u0, p.picard_tol, p.picard_max_iter)
        return u

    def v_half(self, psi, v0=None):
        v = self._half(self.v_solver, self.v_dirichlet(psi), self.b_v, v0)
        flux = self.v_solver.flux(v, self.seg2.tag, self.b_v, self.nonlinear)
        return v, np.where(self.dof_mask, flux, 0.0)

    def step(self, phi, w0=None, v0=None):
        phi = np.where(self.dof_mask, phi, 0.0)
        w = self._half(self.w_solver, self.w_dirichlet, self.w_load(phi), w0)
        psi = w[self.seg2.nodes]
        v, phi_next = self.v_half(psi, v0)
        return StepResult(psi, phi_next, w, v)

    def lift(self, Phi):
        """Homogeneous w-solutions for the columns of ``Phi`` (degrees of freedom only)."""
        n = self.mesh.num_nodes
        B = np.zeros((n, Phi.shape[1]))
        nodes = self.seg2.nodes[self.dofs]
        B[nodes] = self.weights2[self.dofs, None] * Phi
        return self.w_solver.solve(np.zeros(n), B)

    def linear_part(self, Phi):
        """Apply the linear part of the step map to the columns of ``Phi``."""
        W = self.lift(Phi)
        U_d = np.zeros_like(W)
        U_d[self.seg2.nodes] = W[self.seg2.nodes]
        V = self.v_solver.solve(U_d, np.zeros_like(W))
        R = self.assembly.K @ V
        return R[self.seg2.nodes[self.dofs]] / self.weights2[self.dofs, None], W

    def embed(self, x):
        full = np.zeros(len(self.seg2))
        full[self.dofs] = x
        return full


def _source_values(problem):
    mesh = problem.mesh
    parts = []
    for F in (problem.source, problem.coefficients.semilinear and problem.coefficients.semilinear.F):
        if F is None:
            continue
        if callable(F):
            F = F(mesh.nodes[:, 0], mesh.nodes[:, 1])
        parts.append(np.asarray(F, dtype=float) * np.ones(mesh.num_nodes))
    return sum(parts) if parts else None


class StepResult(NamedTuple):
    psi: np.ndarray
    phi_next: np.ndarray
    w: np.ndarray
    v: np.ndarray


def kmf_step(problem, phi, w0=None, v0=None):
    """One sweep of the alternating iteration starting from the Neumann trace ``phi``.

    ``w0``/``v0`` are initial guesses for the nonlinear half-steps and are
    ignored for linear problems.
    """
    return problem.ops.step(_as_values(phi), w0, v0)


def affine_offset(problem):
    """``z = T(0)``, the data-dependent part of the step map."""
    return kmf_step(problem, np.zeros(len(problem.ops.seg2))).phi_next


@dataclass(frozen=True)
class StepRecord:
    k: int
    dpsi: float
    dphi: float
    error: float
    gap: float
    w_norm: float


@dataclass(eq=False)
class IterationState:
    """Result of :func:`kmf_run`.

    Record ``k`` (1-based) compares the k-th sweep with the previous one:
    ``dpsi = |psi_k - psi_{k-1}|_inf``, ``dphi = |phi_k - phi_{k-1}|_inf``,
    ``error`` is the relative L2 error of ``psi_k`` against the reference
    (nan without one) and ``gap`` the H1 norm of ``w_k - v_k``.
    """

    k: int
    phi: np.ndarray
    psi: np.ndarray
    phi_next: np.ndarray
    w_field: np.ndarray
    v_field: np.ndarray
    history: list
    converged: bool
    tol: float
    phi_iterates: list | None = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.history])


def _rel_l2(weights, x, ref):
    num = np.sqrt(np.sum(weights * (x - ref) ** 2))
    den = np.sqrt(np.sum(weights * ref**2))
    return float(num / den) if den > 0 else float(num)


def kmf_run(
    problem,
    phi0=None,
    tol=1e-3,
    max_iter=500,
    reference=None,
    store_iterates=False,
    early_stop=True,
    psi0=None,
):
    """Iterate until ``|psi_k - psi_{k-1}|_inf <= tol`` or ``max_iter`` sweeps.

    Hitting ``max_iter`` is not an error; the state is returned with
    ``converged=False``. ``reference`` is a Dirichlet trace on the
    reconstruction segment used for error tracking. Passing ``psi0``
    instead of ``phi0`` starts from a Dirichlet guess: ``phi0`` is then the
    flux of the v half-step with ``v = psi0``.
    """
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    if phi0 is not None and psi0 is not None:
        raise InvalidArgument("give phi0 or psi0, not both")
    ops = problem.ops
    K, M = ops.assembly.K, ops.assembly.M
    ref = None if reference is None else trace_values(problem.mesh, ops.seg2.tag, reference)
    if psi0 is not None:
        _, phi = ops.v_half(trace_values(problem.mesh, ops.seg2.tag, psi0))
    elif phi0 is None:
        phi = np.zeros(len(ops.seg2))
    else:
        phi = np.where(ops.dof_mask, _as_values(phi0), 0.0)

    res = ops.step(phi)
    iterates = [phi, res.phi_next] if store_iterates else None
    history = []
    converged = False
    for k in range(1, max_iter + 1):
        phi_prev, psi_prev = phi, res.psi
        phi = res.phi_next
        res = ops.step(phi, res.w, res.v)
        d = res.w - res.v
        history.append(
            StepRecord(
                k,
                float(np.max(np.abs(res.psi - psi_prev))),
                float(np.max(np.abs(phi - phi_prev))),
                _rel_l2(ops.weights2, res.psi, ref) if ref is not None else float("nan"),
                float(np.sqrt(d @ (K @ d) + d @ (M @ d))),
                float(np.sqrt(res.w @ (K @ res.w) + res.w @ (M @ res.w))),
            )
        )
        if store_iterates:
            iterates.append(res.phi_next)
        if history[-1].dpsi <= tol:
            converged = True
            if early_stop:
                break
    if history and not early_stop:
        converged = history[-1].dpsi <= tol
    return IterationState(
        len(history), phi, res.psi, res.phi_next, res.w, res.v, history, converged, tol, iterates
    )


@dataclass(eq=False)
class OperatorAudit:
    """Dense linear part of the step map on the reconstruction degrees of freedom.

    ``eigenvalues`` are those of ``Tl_matrix`` in the star inner product,
    i.e. of the pencil ``(sym(G Tl), G)``.
    """

    Tl_matrix: np.ndarray
    star_gram: np.ndarray
    offset: np.ndarray
    dofs: np.ndarray
    eigenvalues: np.ndarray
    symmetry_defect: float
    eigenvectors: np.ndarray | None = None

    @property
    def min_eigenvalue(self):
        return float(self.eigenvalues[0])

    @property
    def max_eigenvalue(self):
        return float(self.eigenvalues[-1])

    @property
    def relative_symmetry_defect(self):
        return self.symmetry_defect / float(np.max(np.abs(self.star_gram @ self.Tl_matrix)))

    def restrict(self, phi):
        return _as_values(phi)[self.dofs]

    def star_norm(self, phi):
        x = self.restrict(phi)
        return float(np.sqrt(max(x @ self.star_gram @ x, 0.0)))

    def apply(self, phi, k=1):
        x = self.restrict(phi)
        for _ in range(k):
            x = self.Tl_matrix @ x
        out = np.zeros(len(_as_values(phi)))
        out[self.dofs] = x
        return out

    def fixed_point(self, n_segment, rcond=1e-10):
        """Discrete solution of ``phi = Tl phi + z``, embedded in the segment.

        Solved in the star-orthonormal eigenbasis. Modes with
        ``1 - mu < rcond`` cannot be resolved in floating point (the
        spectrum accumulates at 1) and are left at zero.
        """
        V = self.eigenvectors
        coeff = V.T @ (self.star_gram @ self.offset[self.dofs])
        gap = 1.0 - self.eigenvalues
        keep = gap > rcond
        coeff = np.where(keep, coeff / np.where(keep, gap, 1.0), 0.0)
        out = np.zeros(n_segment)
        out[self.dofs] = V @ coeff
        return out

    def to_dict(self):
        return {
            "dofs": self.dofs.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "min_eigenvalue": self.min_eigenvalue,
            "max_eigenvalue": self.max_eigenvalue,
            "symmetry_defect": self.symmetry_defect,
            "relative_symmetry_defect": self.relative_symmetry_defect,
        }


def assemble_Tl(problem):
    """Assemble the linear part column by column and its star Gram matrix.

    Column j is ``T(e_j) - T(0)``, evaluated as the homogeneous-data step
    applied to ``e_j`` (identical in exact arithmetic, free of cancellation
    against a large offset). One batched pair of solves covers all columns.
    """
    if not problem.is_linear:
        raise Unsupported("the operator audit needs a linear problem")
    ops = problem.ops
    n = len(ops.dofs)
    Tl, W = ops.linear_part(np.eye(n))
    G = W.T @ (ops.assembly.K @ W)
    G = 0.5 * (G + G.T)
    GT = G @ Tl
    defect = float(np.max(np.abs(GT - GT.T)))
    eig, vecs = la.eigh(0.5 * (GT + GT.T), G)
    return OperatorAudit(Tl, G, affine_offset(problem), ops.dofs, eig, defect, vecs)


def star_inner(problem, phi, chi):
    """Energy inner product of the homogeneous w-liftings of two Neumann traces."""
    ops = problem.ops
    X = np.column_stack([_as_values(phi)[ops.dofs], _as_values(chi)[ops.dofs]])
    W = ops.lift(X)
    return float(W[:, 0] @ (ops.assembly.K @ W[:, 1]))


def star_equivalence(problem, audit=None):
    """Constants ``c1, c2`` with ``c1 |phi|_disc <= |phi|_* <= c2 |phi|_disc``.

    ``|phi|_disc`` is the boundary-mass weighted Euclidean norm on the
    reconstruction degrees of freedom.
    """
    audit = audit or assemble_Tl(problem)
    ops = problem.ops
    Mb = problem.ops.assembly.boundary_mass[ops.seg2.tag][np.ix_(ops.dofs, ops.dofs)]
    ev = la.eigh(audit.star_gram, Mb, eigvals_only=True)
    return float(np.sqrt(ev[0])), float(np.sqrt(ev[-1]))


@dataclass(frozen=True)
class ConvergenceAudit:
    """Monotonicity checks along a run; margins are relative to the first value."""

    error_norms: np.ndarray
    step_norms: np.ndarray
    error_margin: float
    regularity_margin: float
    bound_margin: float
    tolerance: float

    @property
    def passed(self):
        return min(self.error_margin, self.regularity_margin, self.bound_margin) >= -self.tolerance

    def to_dict(self):
        return {
            "passed": self.passed,
            "error_margin": self.error_margin,
            "regularity_margin": self.regularity_margin,
            "bound_margin": self.bound_margin,
            "tolerance": self.tolerance,
        }


def audit_convergence_theory(audit, run, phi_bar=None, tolerance=1e-8):
    """Check the non-expansiveness consequences along a stored run.

    (a) the star norm of ``phi_k - phi_bar`` does not increase;
    (b) the star norm of ``phi_{k+1} - phi_k`` does not increase;
    (c) ``|phi_{k+1} - phi_k|_*^2 <= 2 (|e_k|_*^2 - |e_{k+1}|_*^2)``.
    ``phi_bar`` defaults to the discrete fixed point of the audited operator.
    """
    its = run.phi_iterates
    if its is None or run.k < 3:
        raise InsufficientData("need a run with stored iterates and at least 3 steps")
    if phi_bar is None:
        phi_bar = audit.fixed_point(len(its[0]))
    e = np.array([audit.star_norm(p - phi_bar) for p in its])
    d = np.array([audit.star_norm(b - a) for a, b in zip(its, its[1:])])
    e0 = e[0] if e[0] > 0 else 1.0
    d0 = d[0] if d[0] > 0 else 1.0
    err_margin = float(np.min(e[:-1] - e[1:]) / e0)
    reg_margin = float(np.min(d[:-1] - d[1:]) / d0)
    bound = 2 * (e[:-1] ** 2 - e[1:] ** 2) - d**2
    bound_margin = float(np.min(bound) / e0**2)
    return ConvergenceAudit(e, d, err_margin, reg_margin, bound_margin, tolerance)


def write_history_csv(state, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["k", "dpsi_inf", "dphi_inf", "error_l2", "h1_gap", "w_h1"])
        for r in state.history:
            out.writerow([r.k, repr(r.dpsi), repr(r.dphi), repr(r.error), repr(r.gap), repr(r.w_norm)])


def write_audit_json(audit, path, extra=None):
    payload = audit.to_dict()
    payload.update(extra or {})
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def manufactured_problem(mesh, cauchy_segment, reconstruction_segment, boundary_values, coefficients=None):
    """Discretely consistent Cauchy problem and its exact discrete fixed point.

    ``u_h`` solves the all-Dirichlet problem with ``boundary_values(x, y)``
    on every segment. The Cauchy data are ``u_h`` and its recovered flux on
    the data segment, the remaining segments keep their Dirichlet values and
    ``phi_bar`` is the recovered flux of ``u_h`` on the reconstruction
    segment. Returns ``(problem, phi_bar, u_h)``.
    """
    coefficients = coefficients or EllipticCoefficients()
    if coefficients.semilinear is not None:
        raise Unsupported("manufactured problems are linear")
    tags = list(mesh.segments)
    bvp = MixedBVP(mesh, coefficients, {t: boundary_values for t in tags})
    assembly = assemble(mesh, coefficients)
    u = solve_mixed(bvp, assembly)
    g1, g2 = cauchy_segment, reconstruction_segment
    f = u[mesh.segments[g1].nodes]
    g = neumann_trace(bvp, u, g1, assembly).values
    extra = {t: ("dirichlet", u[mesh.segments[t].nodes]) for t in tags if t not in (g1, g2)}
    problem = CauchyProblem(mesh, g1, g2, f, g, extra, coefficients)
    phi_bar = np.where(problem.ops.dof_mask, neumann_trace(bvp, u, g2, assembly).values, 0.0)
    return problem, phi_bar, u
