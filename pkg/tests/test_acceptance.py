"""End-to-end acceptance checks, one test per shipped guarantee.

Each test exercises a frozen scenario (fixed seeds, fixed sizes) and
records a single PASS/FAIL line with the measured value next to its
threshold; the table is printed after the run by the conftest hook.
Scenario constants are calibrated once and then frozen — do not tune
them to make a failing criterion pass.
"""

import math
import time
from functools import lru_cache

import numpy as np

import pitomo as pt
from pitomo import design
from pitomo.povm import Setting, moment_coefficients
from pitomo.reconstruct import barrier_value_grad_hess, build_fit_model
from pitomo.spin_blocks import maximally_mixed_ensemble

import oracles

RESULTS: dict[int, tuple[str, bool, str]] = {}


def _record(num: int, label: str, ok: bool, detail: str) -> None:
    RESULTS[num] = (label, bool(ok), detail)
    line = f"[{'PASS' if ok else 'FAIL'}] acceptance {num:02d} {label}: {detail}"
    print(line)
    assert ok, line


def _top_block_distance(a, b, two_j):
    d = a.blocks[two_j] - b.blocks[two_j]
    eig = np.linalg.eigvalsh(0.5 * (d + d.conj().T))
    return 0.5 * float(np.sum(np.abs(eig)))


# ---------------------------------------------------------------------------
# Shared frozen reconstruction scenarios
# ---------------------------------------------------------------------------

ALGORITHM_SIZES = {8: 110, 12: 364}  # qubits -> number of random settings


@lru_cache(maxsize=None)
def _algorithm_case(n: int):
    """Exact-data reconstruction of a boundary-rank state, all principles."""
    layout = pt.sector_layout(n)
    settings = pt.random_settings(ALGORITHM_SIZES[n], seed=2 * n)
    truth = pt.random_pi_state(layout, "haar-pure", dirichlet_alpha=0.5,
                               seed=2 * n + 1)
    dataset = pt.exact_dataset(truth, settings)
    results = {}
    start = time.perf_counter()
    for principle in ("ml", "ls", "freels"):
        results[principle] = pt.reconstruct(dataset, pt.FitSpec(principle))
    wall = time.perf_counter() - start
    return {"layout": layout, "truth": truth, "dataset": dataset,
            "results": results, "wall": wall}


@lru_cache(maxsize=None)
def _sampled_case():
    """Finite-statistics ML scenario shared by the solver-comparison check."""
    layout = pt.sector_layout(8)
    settings = pt.random_settings(55, seed=11)
    truth = pt.random_pi_state(layout, "haar-pure", dirichlet_alpha=0.5, seed=12)
    dataset = pt.sample_dataset(truth, settings, 1000, seed=13)
    return {"layout": layout, "truth": truth, "dataset": dataset}


# ---------------------------------------------------------------------------
# 1. Compressed probabilities match the full 2^N-space POVM
# ---------------------------------------------------------------------------


def test_a01_block_structure_exactness():
    rng = np.random.default_rng(100)
    start = time.perf_counter()
    worst = 0.0
    for i in range(50):
        n = int(rng.integers(1, 7))
        layout = pt.sector_layout(n)
        mode = "haar-pure" if i % 2 else "hs-mixed"
        state = pt.random_pi_state(layout, mode, seed=rng)
        axis = oracles.random_unit_vector(rng)
        p = pt.probabilities(state, pt.rotated_blocks(n, Setting(axis)))
        rho = pt.expand_full(state)
        full = oracles.full_povm(n, axis)
        p_full = np.array([float(np.trace(rho @ m).real) for m in full])
        worst = max(worst, float(np.max(np.abs(p - p_full))))
    wall = time.perf_counter() - start
    ok = worst <= 1e-9 and wall < 60.0
    _record(1, "block-structure exactness", ok,
            f"max|dp|={worst:.2e} (tol 1e-9), {wall:.1f}s (limit 60s), "
            f"50 pairs N<=6")


# ---------------------------------------------------------------------------
# 2. Sector dimension identities in exact integer arithmetic
# ---------------------------------------------------------------------------


def test_a02_dimension_identities():
    ok = True
    for n in range(1, 31):
        layout = pt.sector_layout(n)
        total = sum((t + 1) * layout.multiplicity(t)
                    for t in layout.two_j_values)
        ok = ok and total == 2**n
        # closed form of sum_j (2j+1): ((N+2)^2 - (N mod 2)) / 4
        ok = ok and layout.compressed_dim == ((n + 2) ** 2 - (n % 2)) // 4
        ok = ok and all(layout.multiplicity(t) > 0 for t in layout.two_j_values)
    _record(2, "dimension identities", ok,
            "sum_j (2j+1)*mult(j) == 2^N and compressed_dim closed form, "
            "exact ints, N=1..30")


# ---------------------------------------------------------------------------
# 3. All three principles recover a boundary-rank state from exact data
# ---------------------------------------------------------------------------


def test_a03_algorithm_convergence():
    worst_dist = 0.0
    worst_iters = 0
    converged = True
    for n in ALGORITHM_SIZES:
        case = _algorithm_case(n)
        for principle, res in case["results"].items():
            worst_dist = max(worst_dist,
                             pt.trace_distance(res.estimate, case["truth"]))
            worst_iters = max(worst_iters, res.total_iterations)
            converged = converged and res.converged
            converged = converged and res.trace[-1].t <= 1e-10
    wall12 = _algorithm_case(12)["wall"]
    ok = (worst_dist <= 1e-5 and worst_iters <= 300 and converged
          and wall12 < 300.0)
    _record(3, "algorithm convergence", ok,
            f"N=8/12 x ml/ls/freels: max dist={worst_dist:.2e} (tol 1e-5), "
            f"max iters={worst_iters} (limit 300), N=12 wall={wall12:.1f}s "
            f"(limit 300s)")


# ---------------------------------------------------------------------------
# 4. Certified optimality gap on least squares with zero optimum
# ---------------------------------------------------------------------------


def test_a04_certified_gap():
    case = _algorithm_case(8)
    dim = case["layout"].compressed_dim
    # frequencies equal probabilities, so the LS optimum is exactly 0 and
    # every stage value is itself the gap
    worst = -np.inf
    for stage in case["results"]["ls"].trace:
        worst = max(worst, stage.fit_value - stage.t * dim)
    ok = worst <= 1e-9
    _record(4, "certified gap", ok,
            f"max(F - t*dim) over stages = {worst:.2e} (tol 1e-9)")


# ---------------------------------------------------------------------------
# 5. KKT stationarity certificate at termination
# ---------------------------------------------------------------------------


def test_a05_kkt_certificate():
    case = _algorithm_case(8)
    worst_ratio = 0.0
    for principle, res in case["results"].items():
        model = build_fit_model(case["dataset"], pt.FitSpec(principle))
        param = model.parametrization
        x = param.coordinates(res.estimate)
        grad = model.gradient(x)
        t = res.trace[-1].t
        affine = param.affine
        rhs = np.zeros(param.dimension)
        for D, idx, block in zip(affine.dir_stacks, affine.dir_indices,
                                 affine.blocks(x)):
            lam = t * np.linalg.inv(0.5 * (block + block.conj().T))
            np.add.at(rhs, idx, np.einsum("qmn,nm->q", D, lam).real)
        resid = float(np.max(np.abs(grad - rhs)))
        tol = 1e-6 * (1.0 + float(np.max(np.abs(grad))))
        worst_ratio = max(worst_ratio, resid / tol)
    ok = worst_ratio <= 1.0
    _record(5, "KKT certificate", ok,
            f"max resid/tol = {worst_ratio:.3f} over ml/ls/freels at N=8, "
            f"tol = 1e-6*(1+|grad|_inf)")


# ---------------------------------------------------------------------------
# 6. Analytic derivatives against central finite differences
# ---------------------------------------------------------------------------


def test_a06_derivative_correctness():
    rng = np.random.default_rng(600)
    principles = ("ml", "ls", "freels")
    worst_fit = 0.0
    worst_barrier = 0.0
    for i in range(20):
        n = 1 + i % 6
        layout = pt.sector_layout(n)
        truth = pt.random_pi_state(layout, "hs-mixed", seed=rng)
        settings = pt.random_settings(pt.determined_setting_count(n), seed=rng)
        dataset = pt.sample_dataset(truth, settings, 400, seed=rng)
        model = build_fit_model(dataset, pt.FitSpec(principles[i % 3]))
        param = model.parametrization
        # halfway between the center and a random state: strictly interior
        x = 0.5 * param.coordinates(pt.random_pi_state(layout, "hs-mixed",
                                                       seed=rng))
        grad = model.gradient(x)
        fd = oracles.fd_gradient(model.value, x)
        worst_fit = max(worst_fit, float(
            np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), 1e-12)))
        _, bgrad, _ = barrier_value_grad_hess(param, x, 1.0)
        fdb = oracles.fd_gradient(
            lambda y: barrier_value_grad_hess(param, y, 1.0)[0], x)
        worst_barrier = max(worst_barrier, float(
            np.linalg.norm(bgrad - fdb) / max(np.linalg.norm(bgrad), 1e-12)))

    # least-squares Hessian does not depend on the point: bit-identical
    layout = pt.sector_layout(3)
    truth = pt.random_pi_state(layout, "hs-mixed", seed=rng)
    dataset = pt.sample_dataset(truth, pt.random_settings(10, seed=rng),
                                400, seed=rng)
    model = build_fit_model(dataset, pt.FitSpec("ls"))
    param = model.parametrization
    x1 = 0.3 * param.coordinates(pt.random_pi_state(layout, "hs-mixed", seed=rng))
    x2 = 0.6 * param.coordinates(pt.random_pi_state(layout, "hs-mixed", seed=rng))
    _, h1 = model.gradient_hessian(x1)
    _, h2 = model.gradient_hessian(x2)
    identical = bool(np.array_equal(h1, h2)) and not np.array_equal(x1, x2)

    ok = worst_fit <= 1e-6 and worst_barrier <= 1e-6 and identical
    _record(6, "derivative correctness", ok,
            f"20 interior points N<=6: fit rel={worst_fit:.2e}, "
            f"barrier rel={worst_barrier:.2e} (tol 1e-6); "
            f"LS Hessian bit-identical={identical}")


# ---------------------------------------------------------------------------
# 7. Fixed-point iteration agrees with the convex solver on ML
# ---------------------------------------------------------------------------


def test_a07_fixed_point_vs_convex():
    case = _sampled_case()
    convex = pt.reconstruct(case["dataset"], pt.FitSpec("ml"))
    fixed = pt.fixed_point_reconstruct(case["dataset"], iterations=3000)
    dist = pt.trace_distance(convex.estimate, fixed.estimate)
    r_convex = pt.likelihood_residual(case["dataset"], convex.estimate)
    r_fixed = pt.likelihood_residual(case["dataset"], fixed.estimate)
    ok = (dist <= 1e-3 and fixed.iterations <= 3000 and r_convex < r_fixed)
    _record(7, "fixed-point vs convex", ok,
            f"estimate dist={dist:.2e} (tol 1e-3) after {fixed.iterations} "
            f"iterations; stationarity residual {r_convex:.1e} (convex) < "
            f"{r_fixed:.1e} (fixed-point)")


# ---------------------------------------------------------------------------
# 8. Noisy rotated Dicke-mixture scenario at finite statistics
# ---------------------------------------------------------------------------


def test_a08_dicke_scenario():
    # Threshold calibrated once over 20 seeds (5000..5019) with data drawn
    # from full 2^N-space probabilities at N=8, 120 random settings,
    # N_R=200: top-block distance min 0.074 / median 0.082 / max 0.116.
    # Minimal 45-setting designs straddle the threshold (median 0.132,
    # max 0.181), hence the overcomplete set. Frozen seed below is one
    # library-pipeline draw from the same scenario.
    n = 8
    truth = pt.dicke_mixture_state(n, p_asym=0.6, theta=0.2, noise_weight=0.4,
                                   seed=301)
    settings = pt.random_settings(120, seed=302)
    dataset = pt.sample_dataset(truth, settings, 200, seed=303)
    res = pt.reconstruct(dataset, pt.FitSpec("ml"))
    dist = _top_block_distance(res.estimate, truth, n)
    ok = dist <= 0.15
    _record(8, "Dicke scenario", ok,
            f"top-block (j=N/2) distance = {dist:.4f} (tol 0.15), "
            f"N=8, 120 settings, 200 repetitions")


# ---------------------------------------------------------------------------
# 9. Pretest witness: feasibility, exact-data bound, statistical coverage
# ---------------------------------------------------------------------------


def test_a09_pretest():
    target = pt.dicke_ensemble(4, 2)
    witness = pt.optimize_witness(target)

    # (a) operator inequalities hold: the witness sum stays below the
    # symmetric-sector identity and below zero on every other sector
    layout = pt.sector_layout(4)
    max_eig = -np.inf
    block_sets = [pt.rotated_blocks(4, s) for s in witness.settings]
    for b, two_j in enumerate(layout.two_j_values):
        dim = two_j + 1
        acc = -np.eye(dim, dtype=complex) if two_j == 4 else np.zeros(
            (dim, dim), dtype=complex)
        for a, bs in enumerate(block_sets):
            stack = bs.sector_stacks[two_j]
            off = bs.k_offset(two_j)
            for r in range(dim):
                acc += witness.coefficients[a, off + r] * stack[r]
        max_eig = max(max_eig, float(np.linalg.eigvalsh(
            0.5 * (acc + acc.conj().T)).max()))
    feasible = max_eig <= 1e-8

    # (b) exact data from the target itself certifies fidelity ~1
    exact = pt.exact_dataset(target, list(witness.settings))
    bound_exact = pt.fidelity_bound(witness, exact)

    # (c) coverage: the bound may only exceed the true PI fidelity (=1 for
    # the PI truth) with probability at most 1 - confidence
    n_rep, n_runs = 500, 2000
    epsilon = float(np.sqrt(-witness.c_z_squared * np.log(0.1) / (2 * n_rep)))
    hits = 0
    confidence = None
    for s in range(n_runs):
        ds = pt.sample_dataset(target, witness.settings, n_rep, seed=s)
        stat = pt.statistical_bound(witness, ds, epsilon=epsilon)
        confidence = stat.confidence
        if stat.bound <= 1.0 + 1e-12:
            hits += 1
    fraction = hits / n_runs

    ok = feasible and bound_exact >= 0.99 and fraction >= confidence
    _record(9, "pretest witness", ok,
            f"max slack eig={max_eig:.1e} (tol 1e-8); exact-data bound="
            f"{bound_exact:.6f} (>=0.99); coverage {fraction:.4f} >= "
            f"confidence {confidence:.4f} over {n_runs} runs")


# ---------------------------------------------------------------------------
# 10. Measurement-design optimizer
# ---------------------------------------------------------------------------


def test_a10_design_optimizer():
    layout = pt.sector_layout(2)
    target = maximally_mixed_ensemble(layout)
    initial = tuple(pt.random_settings(6, seed=60))
    problem = pt.DesignProblem(2, target, initial)
    result = pt.optimize_settings(problem, seed=61)

    monotone = bool(np.all(np.diff(result.error_trace) <= 0))
    optimized = pt.total_error(problem, result.settings)
    randoms = [pt.total_error(problem, pt.random_settings(6, seed=1000 + i))
               for i in range(50)]
    median = float(np.median(randoms))
    full_rank = design.first_deficient_weight(result.settings, 2) is None

    ok = monotone and optimized <= median and full_rank
    _record(10, "design optimizer", ok,
            f"monotone={monotone}; optimized error {optimized:.3f} <= "
            f"median-of-50-random {median:.3f}; all weight systems "
            f"full-rank={full_rank}")


# ---------------------------------------------------------------------------
# 11. Outcome-moment coefficients against full-space expectations
# ---------------------------------------------------------------------------


def test_a11_moment_coefficients():
    rng = np.random.default_rng(110)
    worst = 0.0
    for i in range(20):
        n = 1 + i % 5
        w = int(rng.integers(0, n + 1))
        layout = pt.sector_layout(n)
        state = pt.random_pi_state(layout, "hs-mixed", seed=rng)
        axis = oracles.random_unit_vector(rng)
        p = pt.probabilities(state, pt.rotated_blocks(n, Setting(axis)))
        lhs = float(moment_coefficients(n, w) @ p)
        rho = pt.expand_full(state)
        rhs = float(np.trace(rho @ oracles.sym_axis_power(n, axis, w)).real)
        worst = max(worst, abs(lhs - rhs))
    ok = worst <= 1e-10
    _record(11, "moment coefficients", ok,
            f"max |sum_k K p_k - full-space moment| = {worst:.2e} "
            f"(tol 1e-10), 20 cases N<=5")
