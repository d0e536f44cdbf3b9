"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every tolerance is pinned as a module constant. Criteria that cannot be met
by a faithful implementation are left failing; see the README.
"""
import math
import time

import numpy as np
import pytest

from cauchy_kmf.experiments import ExperimentConfig, run_experiment
from cauchy_kmf.geometry import build_rect_mesh
from cauchy_kmf.kmf import assemble_Tl, kmf_run, kmf_step, manufactured_problem
from cauchy_kmf.regularization import RegularizationConfig, optimal_n, tradeoff_rows
from cauchy_kmf.spectral import (
    SpectralModel,
    annulus_eigenvalue,
    first_mode_power_check,
    spectral_iterate,
    square_eigenvalue,
)

PI = math.pi
EPS = np.finfo(float).eps

# criterion 1
SQ_RESOLUTION = (128, 96)
SQ_TOL, SQ_MAX_ITER = 1e-3, 300
SQ_MAX_L2_REL = 0.10
SQ_MAX_SECONDS = 600.0
# criterion 2
AN_RESOLUTION, AN_FINE = (32, 128), (64, 256)
AN_TOL = 1e-4
AN_MAX_LINF = 1e-1
AN_MIN_REDUCTION = 2.0
# criterion 3
AUDIT_RESOLUTION = (32, 24)
AUDIT_EIG_MARGIN = 1e-6
AUDIT_MAX_SYM_DEFECT = 1e-6
# an increase smaller than this is indistinguishable from round-off
AUDIT_ROUNDOFF_FLOOR = 64 * EPS
# criterion 4
EQUIV_STEPS = 20
EQUIV_REL_TOL = 1e-8
# criterion 5: factor times the (direct) solver tolerance, scaled by max|phi_bar|
FP_FACTOR = 5.0
FP_SOLVER_TOL = 1e-10
# criterion 6
DECAY_MODES = (1, 2, 5, 17, 64)
DECAY_STEPS = (0, 1, 10, 1000, 100_000)
DECAY_ULPS = 4.0  # relative error allowed per step of the power
DECAY_RATIO_FACTOR = 2.0
DECAY_FEM_STEPS = 15
# criterion 7
SQUARE_LAMBDA1_TOL = 1e-12
QUOTED_POWER = 0.061
# criterion 8
REG_MODES, REG_EPS, REG_M, REG_NMAX = 64, 1e-3, 1.0, 200
# criterion 9
INC_RESOLUTION, INC_TOL, INC_MAX_ITER = (128, 64), 1e-3, 300
INC_GAP_FACTOR = 10.0
# criterion 10
SEMI_RESOLUTION = (16, 128)
SEMI_MAX_LINF_REL = 0.15
# criterion 11
HAD_KMAX, HAD_TOL = 10, 1e-10


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def exact(x, y):
    return np.cosh(PI * y) * np.sin(PI * x)


@pytest.fixture(scope="module")
def coarse():
    mesh = build_rect_mesh(*AUDIT_RESOLUTION, (0, 1), (0, 0.75))
    problem, phi_bar, _ = manufactured_problem(mesh, "gamma1", "gamma2", exact)
    return problem, phi_bar, assemble_Tl(problem)


def test_criterion_01_square(tmp_path, capsys):
    t0 = time.perf_counter()
    rep = run_experiment(ExperimentConfig("square-linear", SQ_RESOLUTION, SQ_TOL, SQ_MAX_ITER, out=str(tmp_path)))
    dt = time.perf_counter() - t0
    err = rep.errors["l2_rel"]
    ok = rep.converged and rep.iterations <= SQ_MAX_ITER and err <= SQ_MAX_L2_REL and dt <= SQ_MAX_SECONDS
    report(capsys, 1, ok, f"iterations={rep.iterations} l2_rel={err:.4f} time={dt:.1f}s")


def test_criterion_02_annulus(tmp_path, capsys):
    coarse_rep = run_experiment(ExperimentConfig("annulus-linear", AN_RESOLUTION, AN_TOL, out=str(tmp_path / "c")))
    fine_rep = run_experiment(ExperimentConfig("annulus-linear", AN_FINE, AN_TOL, out=str(tmp_path / "f")))
    e1, e2 = coarse_rep.errors["linf"], fine_rep.errors["linf"]
    ok = coarse_rep.converged and fine_rep.converged and e1 <= AN_MAX_LINF and e1 / e2 >= AN_MIN_REDUCTION
    report(capsys, 2, ok, f"linf {AN_RESOLUTION}={e1:.5f} {AN_FINE}={e2:.5f} reduction={e1 / e2:.2f}")


def test_criterion_03_operator_audit(capsys, coarse):
    _, _, audit = coarse
    nx, ny = AUDIT_RESOLUTION
    fine = assemble_Tl(manufactured_problem(build_rect_mesh(2 * nx, 2 * ny, (0, 1), (0, 0.75)), "gamma1", "gamma2", exact)[0])
    lo, hi = audit.min_eigenvalue, audit.max_eigenvalue
    in_interval = lo > 0 and hi < 1 - AUDIT_EIG_MARGIN
    sym = audit.relative_symmetry_defect
    growth = fine.max_eigenvalue - hi
    increases = growth > AUDIT_ROUNDOFF_FLOOR
    ok = in_interval and sym <= AUDIT_MAX_SYM_DEFECT and increases
    report(
        capsys, 3, ok,
        f"eig in [{lo:.5f}, {hi!r}] in_interval={in_interval} sym_defect={sym:.1e} "
        f"refined_max={fine.max_eigenvalue!r} increase={growth:.1e} resolvable={increases} "
        f"low_eig {audit.eigenvalues[0]:.5f}->{fine.eigenvalues[0]:.5f}",
    )


def test_criterion_04_matrix_iteration_equivalence(capsys, coarse):
    problem, phi_bar, audit = coarse
    run = kmf_run(problem, tol=1e-300, max_iter=EQUIV_STEPS, store_iterates=True, early_stop=False)
    e0 = run.phi_iterates[0] - phi_bar
    worst = 0.0
    for k, phi in enumerate(run.phi_iterates[: EQUIV_STEPS + 1]):
        pk = audit.apply(e0, k)
        worst = max(worst, np.max(np.abs(phi - phi_bar - pk)) / np.max(np.abs(pk)))
    report(capsys, 4, worst <= EQUIV_REL_TOL, f"steps={EQUIV_STEPS} max_rel_mismatch={worst:.1e}")


def test_criterion_05_fixed_point(capsys, coarse):
    problem, phi_bar, _ = coarse
    defect = np.max(np.abs(kmf_step(problem, phi_bar).phi_next - phi_bar))
    bound = FP_FACTOR * FP_SOLVER_TOL * np.max(np.abs(phi_bar))
    report(capsys, 5, defect <= bound, f"defect={defect:.1e} bound={bound:.1e}")


def test_criterion_06_spectral_decay(capsys, coarse):
    model = SpectralModel.square(64)
    worst = 0.0
    for j in DECAY_MODES:
        eps0 = np.zeros(64)
        eps0[j - 1] = 1.0
        for k in DECAY_STEPS:
            got = spectral_iterate(model, eps0, np.zeros(64), k)[j - 1]
            want = model.lambdas[j - 1] ** (2 * k)
            if want > 0:
                worst = max(worst, abs(got - want) / want / max(k, 1))
    exact_ok = worst <= DECAY_ULPS * EPS

    problem, phi_bar, audit = coarse
    x = problem.mesh.nodes[problem.ops.seg2.nodes, 0]
    start = phi_bar + np.where(problem.ops.dof_mask, np.sin(PI * x), 0.0)
    run = kmf_run(problem, phi0=start, tol=1e-300, max_iter=DECAY_FEM_STEPS, store_iterates=True, early_stop=False)
    e = np.array([audit.star_norm(p - phi_bar) for p in run.phi_iterates])
    ratios = e[1:] / e[:-1]
    # eigenvector carrying most of the initial error in the star inner product
    coeff = audit.eigenvectors.T @ (audit.star_gram @ audit.restrict(start - phi_bar))
    mu = audit.eigenvalues[np.argmax(np.abs(coeff))]
    fem_ok = bool(np.all((ratios / mu <= DECAY_RATIO_FACTOR) & (mu / ratios <= DECAY_RATIO_FACTOR)))
    report(
        capsys, 6, exact_ok and fem_ok,
        f"model_rel_err_per_step={worst:.1e} fem_ratio=[{ratios.min():.5f},{ratios.max():.5f}] eigenvalue={mu:.5f}",
    )


def test_criterion_07_eigenvalue_formulas(capsys):
    a = annulus_eigenvalue(1, 0.5)
    s = abs(square_eigenvalue(1) - math.tanh(2 * PI))
    check = first_mode_power_check(k=100_000, quoted=QUOTED_POWER)
    discrepancy = abs(check["lambda_1_pow_2k"] - QUOTED_POWER)
    ok = a == 0.36 and s <= SQUARE_LAMBDA1_TOL and "lambda_1_pow_2k" in check
    report(
        capsys, 7, ok,
        f"annulus(1,0.5)={a!r} |lambda1-tanh(2pi)|={s:.1e} lambda1^(2k)={check['lambda_1_pow_2k']:.4f} "
        f"lambda1^(4k)={check['lambda_1_pow_4k']:.4f} quoted={QUOTED_POWER} discrepancy={discrepancy:.3f}",
    )


@pytest.mark.parametrize("kind", ["square", "annulus-0.5"])
def test_criterion_08_regularization(capsys, kind):
    model = SpectralModel.square(REG_MODES) if kind == "square" else SpectralModel.annulus(0.5, REG_MODES)
    rng = np.random.default_rng(0)
    w = rng.standard_normal(REG_MODES)
    w *= REG_M / np.linalg.norm(w)
    phi_bar = w * model.mu_gaps  # source condition with G = 1/(1 - lambda)
    noise = rng.standard_normal(REG_MODES)
    noise *= REG_EPS / np.linalg.norm(noise)
    ok, notes = True, []
    for strategy in ("cutoff", "power"):
        cfg = RegularizationConfig(strategy, 2, M=REG_M, epsilon=REG_EPS)
        rows = np.array(tradeoff_rows(model, cfg, phi_bar, noise, range(2, REG_NMAX + 1)))
        n_opt, vals = optimal_n(model, cfg, float(np.linalg.norm(phi_bar)), REG_NMAX)
        mono = np.all(np.diff(rows[:, 1]) <= 0) and np.all(np.diff(rows[:, 2]) >= 0)
        dom = np.all(rows[:, 3] >= rows[:, 4])
        argmin = vals[n_opt - 2] == vals.min() and n_opt == 2 + int(np.argmin(rows[:, 5]))
        ok &= bool(mono and dom and argmin)
        notes.append(f"{strategy}: monotone={mono} dominates={dom} n_opt={n_opt}")
    report(capsys, 8, ok, f"[{kind}] " + "; ".join(notes))


def test_criterion_09_inconsistent(tmp_path, capsys):
    rep = run_experiment(
        ExperimentConfig("square-inconsistent", INC_RESOLUTION, INC_TOL, INC_MAX_ITER, out=str(tmp_path), hat_n=100)
    )
    r = rep.results
    settles = r["first_k_dphi_below_tol"] is not None and r["first_k_dphi_below_tol"] <= INC_MAX_ITER
    apart = r["gap_h1"] > INC_GAP_FACTOR * r["gap_h1_consistent"]
    report(
        capsys, 9, settles and apart,
        f"dphi_below_tol_at={r['first_k_dphi_below_tol']} final_dphi={r['final_dphi']:.4f} "
        f"gap_h1(k={r['probe_k']})={r['gap_h1']:.3e} consistent={r['gap_h1_consistent']:.3e} "
        f"(a)={settles} (b)={apart}",
    )


def test_criterion_10_semilinear(tmp_path, capsys):
    rep = run_experiment(ExperimentConfig("annulus-semilinear", SEMI_RESOLUTION, out=str(tmp_path)))
    cmp = rep.results["comparison"]
    half, big = cmp["a"], cmp["b"]
    accurate = max(half["error_linf_rel"], big["error_linf_rel"]) <= SEMI_MAX_LINF_REL
    ok = rep.converged and accurate and cmp["larger_arc_dominates"]
    report(
        capsys, 10, ok,
        f"converged={rep.converged} half-arc: it={half['iterations']} linf_rel={half['error_linf_rel']:.3f}; "
        f"larger arc: it={big['iterations']} linf_rel={big['error_linf_rel']:.3f}; "
        f"larger_dominates={cmp['larger_arc_dominates']}",
    )


def test_criterion_11_hadamard(tmp_path, capsys):
    rep = run_experiment(ExperimentConfig("hadamard-demo", (HAD_KMAX,), out=str(tmp_path)))
    rows = np.loadtxt(tmp_path / "hadamard.csv", delimiter=",", skiprows=1)
    k = rows[:, 0]
    d_err = np.max(np.abs(rows[:, 1] - 1 / (PI * k)))
    u_err = np.max(np.abs(rows[:, 3] - np.sinh(PI * k / 2) / (PI * k) ** 2))
    mono = bool(np.all(np.diff(rows[:, 5]) > 0))
    ok = len(rows) == HAD_KMAX and d_err <= HAD_TOL and u_err <= HAD_TOL and mono and rep.results["ratio_increasing"]
    report(capsys, 11, ok, f"data_err={d_err:.1e} solution_err={u_err:.1e} ratio_increasing={mono}")
