"""P1 finite elements for mixed Dirichlet/Neumann problems of the form

    -div(A grad u) + N(u) = F   in the domain,
    u = f                       on Dirichlet segments,
    (A grad u) . n = g          on Neumann segments.

Nodal fields are plain ``numpy`` arrays of length ``mesh.num_nodes``.
Dirichlet values are imposed by eliminating the constrained rows and
columns. Neumann data and recovered fluxes use the trapezoid (lumped) 1D
boundary mass, so the recovered flux reproduces the discrete residual
functional exactly at every unconstrained boundary node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (
    IllPosedBVP,
    InvalidArgument,
    InvalidCoefficients,
    NonlinearDivergence,
    SolverFailure,
)
from .geometry import boundary_nodes

__all__ = [
    "Semilinear",
    "EllipticCoefficients",
    "TraceField",
    "Assembly",
    "MixedBVP",
    "MixedSolver",
    "assemble",
    "solve_mixed",
    "dirichlet_trace",
    "neumann_trace",
    "solve_semilinear",
    "trace_values",
    "h1_norm",
    "write_field_csv",
    "write_trace_csv",
]

SOLVER_RTOL = 1e-10


@dataclass(frozen=True)
class Semilinear:
    """Lower-order term ``N(u)`` with derivative ``dN`` and right-hand side ``F(x)``.

    ``N`` and ``dN`` act elementwise on nodal values; ``F(x, y)`` is
    evaluated at the nodes (``None`` means zero).
    """

    N: Callable
    dN: Callable
    F: Callable | None = None


@dataclass(frozen=True)
class EllipticCoefficients:
    """Coefficient matrix ``A(x)`` of ``P(u) = -div(A grad u)``.

    ``A`` is either a constant 2x2 array or a callable taking an (n, 2)
    array of points and returning (n, 2, 2) or a broadcastable (2, 2).
    ``alpha`` is the ellipticity bound checked at triangle centroids.
    """

    A: Callable | np.ndarray = field(default_factory=lambda: np.eye(2))
    alpha: float = 1.0
    semilinear: Semilinear | None = None

    def matrices(self, points):
        points = np.asarray(points, dtype=float)
        A = self.A(points) if callable(self.A) else np.asarray(self.A, dtype=float)
        return np.broadcast_to(A, (len(points), 2, 2)).astype(float)

    def check(self, points):
        """Raise unless every sampled A is symmetric with min eigenvalue >= alpha."""
        if self.alpha <= 0:
            raise InvalidCoefficients("alpha must be positive")
        A = self.matrices(points)
        if not np.allclose(A, A.transpose(0, 2, 1), rtol=1e-12, atol=1e-14):
            raise InvalidCoefficients("coefficient matrix is not symmetric")
        lam = np.linalg.eigvalsh(A)[:, 0]
        bad = lam < self.alpha * (1 - 1e-12)
        if bad.any():
            k = int(np.argmax(bad))
            raise InvalidCoefficients(
                f"ellipticity violated at {points[k].tolist()}: "
                f"min eigenvalue {lam[k]:.3g} < alpha {self.alpha:.3g}"
            )
        return A


@dataclass(frozen=True, eq=False)
class TraceField:
    """Values on one boundary segment, in the segment's node order."""

    tag: str
    values: np.ndarray
    arclength: np.ndarray
    kind: str = "dirichlet"

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise InvalidArgument(f"unknown trace kind {self.kind!r}")
        if len(self.values) != len(self.arclength):
            raise InvalidArgument("trace length does not match its segment")


@dataclass(frozen=True, eq=False)
class Assembly:
    """Global stiffness K, mass M and per-segment 1D boundary masses.

    ``boundary_mass[tag]`` is the consistent P1 mass matrix in the segment's
    local node order; ``boundary_weights[tag]`` are its row sums (the
    trapezoid weights).
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    boundary_mass: Mapping[str, np.ndarray]
    boundary_weights: Mapping[str, np.ndarray]


_REF_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_REF_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble(mesh, coefficients=None):
    coefficients = coefficients or EllipticCoefficients()
    p = mesh.nodes[mesh.triangles]
    A = coefficients.check(p.mean(axis=1))
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if (det <= 0).any():
        raise InvalidArgument("mesh has degenerate or inverted triangles")
    area = 0.5 * det
    G = _REF_GRAD @ np.linalg.inv(J)  # (T, 3, 2) physical basis gradients
    Ke = area[:, None, None] * np.einsum("tik,tkl,tjl->tij", G, A, G)
    Me = area[:, None, None] * _REF_MASS

    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.num_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    bmass, bweights = {}, {}
    for tag, seg in mesh.segments.items():
        m = len(seg)
        h = np.diff(seg.arclength)
        pairs = [(i, i + 1, h[i]) for i in range(m - 1)]
        if seg.closed:
            pairs.append((m - 1, 0, seg.length - seg.arclength[-1]))
        Mb = np.zeros((m, m))
        for i, j, L in pairs:
            Mb[[i, j], [i, j]] += L / 3
            Mb[i, j] += L / 6
            Mb[j, i] += L / 6
        bmass[tag] = Mb
        bweights[tag] = Mb.sum(axis=1)
    return Assembly(K, M, bmass, bweights)


def trace_values(mesh, tag, data):
    """Normalize boundary data to an array aligned with ``boundary_nodes(mesh, tag)``.

    ``data`` may be a scalar, an array, a ``TraceField`` or a callable
    ``f(x, y)`` evaluated at the segment nodes.
    """
    seg = boundary_nodes(mesh, tag)
    if isinstance(data, TraceField):
        data = data.values
    if callable(data):
        xy = mesh.nodes[seg.nodes]
        data = data(xy[:, 0], xy[:, 1])
    values = np.asarray(data, dtype=float)
    if values.ndim == 0:
        return np.full(len(seg), float(values))
    if values.shape[0] != len(seg):
        raise InvalidArgument(f"data for {tag!r} has {values.shape[0]} values, segment has {len(seg)}")
    return values


def _nodal(mesh, func):
    if func is None:
        return None
    if callable(func):
        return np.asarray(func(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float) * np.ones(mesh.num_nodes)
    return np.asarray(func, dtype=float) * np.ones(mesh.num_nodes)


def _load(mesh, assembly, neumann=None, source=None):
    b = np.zeros(mesh.num_nodes)
    if source is not None:
        b += assembly.M @ source
    for tag, g in (neumann or {}).items():
        seg = mesh.segments[tag]
        b[seg.nodes] += assembly.boundary_weights[tag] * trace_values(mesh, tag, g)
    return b


def _flux(mesh, assembly, u, tag, b, nonlinear=None):
    r = assembly.K @ u - b
    if nonlinear is not None:
        r = r + assembly.M @ nonlinear(u)
    return r[mesh.segments[tag].nodes] / assembly.boundary_weights[tag]


class MixedSolver:
    """Factorized mixed problem for a fixed split of tags into Dirichlet/Neumann.

    The stiffness block on unconstrained nodes is factorized once, so that
    repeated solves with new boundary data (as in the alternating iteration)
    cost two triangular solves each.
    """

    def __init__(self, mesh, coefficients, dirichlet_tags, assembly=None, rtol=SOLVER_RTOL):
        self.mesh = mesh
        self.coefficients = coefficients or EllipticCoefficients()
        self.assembly = assembly or assemble(mesh, self.coefficients)
        self.dirichlet_tags = tuple(dirichlet_tags)
        self.rtol = rtol
        for tag in self.dirichlet_tags:
            boundary_nodes(mesh, tag)
        constrained = np.zeros(mesh.num_nodes, dtype=bool)
        for tag in self.dirichlet_tags:
            constrained[mesh.segments[tag].nodes] = True
        if not constrained.any():
            raise IllPosedBVP("no Dirichlet-constrained node: the pure Neumann problem is singular")
        self.constrained = constrained
        self.free = np.flatnonzero(~constrained)
        self.fixed = np.flatnonzero(constrained)
        K = self.assembly.K
        self.K_ff = K[self.free][:, self.free].tocsc()
        self.K_fd = K[self.free][:, self.fixed].tocsr()
        self._lu = splu(self.K_ff) if len(self.free) else None

    def load(self, neumann=None, source=None):
        """Right-hand side from Neumann data ``{tag: values}`` and nodal source values."""
        return _load(self.mesh, self.assembly, neumann, source)

    def dirichlet_vector(self, dirichlet):
        u = np.zeros(self.mesh.num_nodes)
        for tag in self.dirichlet_tags:
            if tag in dirichlet:
                u[self.mesh.segments[tag].nodes] = trace_values(self.mesh, tag, dirichlet[tag])
        return u

    def solve(self, dirichlet, b):
        """Solve with Dirichlet data and load vector ``b``.

        ``dirichlet`` is either ``{tag: values}`` (tags listed later in
        ``dirichlet_tags`` win at shared nodes) or a full nodal array whose
        constrained entries are used. ``b`` and the nodal array may be 2D
        with one column per right-hand side.
        """
        if isinstance(dirichlet, np.ndarray):
            u_d = dirichlet
        else:
            u_d = self.dirichlet_vector(dirichlet)
        b = np.asarray(b, dtype=float)
        if b.ndim == 2 and u_d.ndim == 1:
            u_d = u_d[:, None]
        elif b.ndim == 1 and u_d.ndim == 2:
            b = b[:, None]
        rhs = b[self.free] - self.K_fd @ u_d[self.fixed]
        u = np.array(np.broadcast_to(u_d, (self.mesh.num_nodes,) + rhs.shape[1:]))
        if self._lu is None:
            return u
        x = self._lu.solve(rhs)
        res = np.linalg.norm(self.K_ff @ x - rhs)
        scale = np.linalg.norm(rhs)
        if not np.isfinite(res) or res > self.rtol * scale + 1e-280:
            raise SolverFailure(f"residual {res:.3e} exceeds {self.rtol:.1e} relative", res)
        u[self.free] = x
        return u

    def flux(self, u, tag, b, nonlinear=None):
        """Conormal flux on ``tag`` recovered from the residual of ``u``.

        ``b`` must contain the source load and the Neumann loads of all
        other segments. At a junction node the value also absorbs the flux
        through the neighbouring segment.
        """
        return _flux(self.mesh, self.assembly, u, tag, b, nonlinear)

    def picard(self, dirichlet, b, nonlinear, u0=None, tol=1e-8, max_iter=50, damping=1.0):
        """Fixed-point (Picard) iteration for ``K u + M N(u) = b``.

        The step is damped by ``damping``; when the update grows, damping
        falls back to 0.5 for the rest of the solve.
        """
        u = self.dirichlet_vector(dirichlet) if u0 is None else np.array(u0, dtype=float)
        history = []
        theta = damping
        for _ in range(max_iter):
            u_new = self.solve(dirichlet, b - self.assembly.M @ nonlinear(u))
            u_new = theta * u_new + (1 - theta) * u
            delta = float(np.max(np.abs(u_new - u)))
            if history and delta > history[-1] and theta > 0.5:
                theta = 0.5
            history.append(delta)
            u = u_new
            if not np.isfinite(delta):
                break
            if delta <= tol:
                return u, history
        raise NonlinearDivergence(
            f"Picard iteration did not reach {tol:g} in {max_iter} steps", history
        )


@dataclass(eq=False)
class MixedBVP:
    """Mixed boundary value problem; every segment is Dirichlet xor Neumann."""

    mesh: object
    coefficients: EllipticCoefficients = field(default_factory=EllipticCoefficients)
    dirichlet: dict = field(default_factory=dict)
    neumann: dict = field(default_factory=dict)
    source: Callable | np.ndarray | None = None

    def __post_init__(self):
        tags = set(self.mesh.segments)
        d, n = set(self.dirichlet), set(self.neumann)
        if d & n:
            raise InvalidArgument(f"segments {sorted(d & n)} are both Dirichlet and Neumann")
        if (d | n) - tags:
            raise InvalidArgument(f"unknown segments {sorted((d | n) - tags)}")
        if tags - d - n:
            raise InvalidArgument(f"segments {sorted(tags - d - n)} have no boundary condition")
        if not d:
            raise IllPosedBVP("no Dirichlet segment: the pure Neumann problem is singular")

    def solver(self, assembly=None):
        return MixedSolver(self.mesh, self.coefficients, list(self.dirichlet), assembly)

    def source_values(self):
        F = _nodal(self.mesh, self.source)
        sl = self.coefficients.semilinear
        if sl is not None and sl.F is not None:
            Fs = _nodal(self.mesh, sl.F)
            F = Fs if F is None else F + Fs
        return F


def solve_mixed(bvp, assembly=None):
    solver = bvp.solver(assembly)
    b = solver.load(bvp.neumann, bvp.source_values())
    return solver.solve(bvp.dirichlet, b)


def solve_semilinear(bvp, initial_guess=None, tol=1e-8, max_iter=50, assembly=None, damping=1.0):
    """Solve ``P(u) + N(u) = F`` by Picard iteration with fixed boundary data.

    Each step solves ``P(u_next) = F - N(u)``. Raises ``NonlinearDivergence``
    (carrying the update history) after ``max_iter`` steps.
    """
    sl = bvp.coefficients.semilinear
    if sl is None:
        return solve_mixed(bvp, assembly)
    solver = bvp.solver(assembly)
    b = solver.load(bvp.neumann, bvp.source_values())
    u, _ = solver.picard(bvp.dirichlet, b, sl.N, initial_guess, tol, max_iter, damping)
    return u


def dirichlet_trace(mesh, u, tag):
    seg = boundary_nodes(mesh, tag)
    return TraceField(tag, np.asarray(u)[seg.nodes].copy(), seg.arclength, "dirichlet")


def neumann_trace(bvp, u, tag, assembly=None):
    """Variationally recovered conormal derivative of ``u`` on segment ``tag``.

    Solves ``W lam = (K u + M N(u) - b)`` on the segment rows, where ``W`` is
    the trapezoid boundary mass and ``b`` collects the source and the
    Neumann data of the other segments.
    """
    seg = boundary_nodes(bvp.mesh, tag)
    if len(seg) < 2:
        raise InvalidArgument(f"segment {tag!r} has no edges")
    assembly = assembly or assemble(bvp.mesh, bvp.coefficients)
    others = {t: g for t, g in bvp.neumann.items() if t != tag}
    b = _load(bvp.mesh, assembly, others, bvp.source_values())
    sl = bvp.coefficients.semilinear
    lam = _flux(bvp.mesh, assembly, np.asarray(u, dtype=float), tag, b, sl.N if sl else None)
    return TraceField(tag, lam, seg.arclength, "neumann")


def h1_norm(assembly, u):
    """Discrete H1 norm ``sqrt(u'Ku + u'Mu)``."""
    return float(np.sqrt(u @ (assembly.K @ u) + u @ (assembly.M @ u)))


def write_field_csv(mesh, u, path):
    data = np.column_stack([np.arange(mesh.num_nodes), mesh.nodes, u])
    np.savetxt(path, data, delimiter=",", header="node,x,y,value", comments="", fmt=["%d", "%.17g", "%.17g", "%.17g"])


def write_trace_csv(trace, path):
    data = np.column_stack([trace.arclength, trace.values])
    np.savetxt(Path(path), data, delimiter=",", header="arclength,value", comments="", fmt="%.17g")
