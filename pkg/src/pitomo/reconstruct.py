"""State reconstruction from coarse-grained PI measurement data.

The estimate lives in the affine space of unit-trace block-Hermitian
matrices, written as

    rho(x) = base + sum_i x_i B_i,

with ``base`` the compressed maximally mixed state and {B_i} an
orthonormal (Frobenius) basis of traceless directions: per-sector
generalized Gell-Mann matrices plus ``num_sectors - 1`` diagonal
inter-sector trace shifts.  Outcome probabilities are affine in x,
p = p0 + G x, with the overlap table G[row, i] = tr(B_i M_k^a) assembled
once per (layout, settings).

Three convex fit principles are supported, plus a hedged variant:

    ml      F = -sum f log p           (maximum likelihood)
    ls      F = sum w (f - p)^2        (weighted least squares)
    freels  F = sum (f - p)^2 / p      (probability-weighted LS)
    hedged  F = ml - beta log det rho  (barrier run stopped at t = beta)

FreeLS derivatives, per outcome with phi(p) = (f-p)^2/p = f^2/p - 2f + p:
phi' = 1 - f^2/p^2 and phi'' = 2 f^2/p^3 >= 0, so the exact Hessian
G^T diag(2 f^2/p^3) G is PSD on the interior - no approximation needed.

The optimum is found by an interior-point outer loop: minimize
F(x) - t sum_j log det rho_j(x) by damped Newton (Cholesky feasibility +
Armijo backtracking), warm-starting while t shrinks from t0 to t_min.
Standard barrier duality gives F(x_t) - F(x*) <= t * compressed_dim with
certificate Lambda = t rho(x_t)^{-1}, which is what ``gap_bound``
reports.  The same engine runs the pretest's linear-objective LMI by
swapping in a different affine block map, so it is written generically.

``fixed_point_reconstruct`` provides the non-convex iteration
rho_j <- R_j rho_j R_j / norm with R_j = sum (f/p) M_{k,j}, mainly as a
cross-check; it stalls near the boundary where the Newton path does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .povm import rotated_blocks
from .spin_blocks import (
    SpinEnsemble,
    SpinSectorLayout,
    maximally_mixed_ensemble,
    sector_layout,
)

__all__ = [
    "FitSpec",
    "SolverConfig",
    "Parametrization",
    "AffineBlockMap",
    "FitModel",
    "LinearFit",
    "StageResult",
    "StageTrace",
    "ReconstructionResult",
    "FixedPointResult",
    "NonConvergenceError",
    "fit_value",
    "resolve_least_squares_weights",
    "barrier_value_grad_hess",
    "newton_stage",
    "t_schedule",
    "build_fit_model",
    "reconstruct",
    "fixed_point_reconstruct",
    "likelihood_residual",
]

PRINCIPLES = ("ml", "ls", "freels", "hedged")


class NonConvergenceError(RuntimeError):
    """A Newton stage failed to reach the gradient tolerance."""


@dataclass(frozen=True)
class FitSpec:
    """Choice of fit principle with its parameters.

    ``weights`` (LS only) is a flat per-outcome array aligned with the
    dataset rows; None defers to the default rule
    w = 1/max(f, 1/(10*repetitions)) resolved at reconstruction time.
    ``beta`` (hedged only) is the strength of the log-det hedging term.
    """

    principle: str
    weights: np.ndarray | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.principle not in PRINCIPLES:
            raise ValueError(f"unknown principle {self.principle!r}")
        if self.weights is not None:
            if self.principle != "ls":
                raise ValueError("weights are only meaningful for least squares")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w <= 0):
                raise ValueError("least-squares weights must be positive")
            object.__setattr__(self, "weights", w)
        if self.principle == "hedged":
            if self.beta is None or not self.beta > 0:
                raise ValueError("hedged fit requires beta > 0")
        elif self.beta is not None:
            raise ValueError("beta is only meaningful for the hedged principle")

    @classmethod
    def max_lik(cls) -> "FitSpec":
        return cls(principle="ml")

    @classmethod
    def least_squares(cls, weights=None) -> "FitSpec":
        return cls(principle="ls", weights=weights)

    @classmethod
    def free_least_squares(cls) -> "FitSpec":
        return cls(principle="freels")

    @classmethod
    def hedged(cls, beta: float) -> "FitSpec":
        return cls(principle="hedged", beta=beta)


@dataclass(frozen=True)
class SolverConfig:
    t0: float = 1.0
    t_reduce: float = 10.0
    t_min: float = 1e-10
    grad_tol: float = 1e-8
    ls_alpha: float = 0.01
    ls_shrink: float = 0.5
    max_newton_iters: int = 200
    strict: bool = False

    def __post_init__(self):
        if self.t0 <= 0 or self.t_min <= 0:
            raise ValueError("t0 and t_min must be positive")
        if self.t_reduce <= 1:
            raise ValueError("t_reduce must exceed 1")
        if not 0 < self.ls_alpha < 0.5:
            raise ValueError("ls_alpha must lie in (0, 0.5)")
        if not 0 < self.ls_shrink < 1:
            raise ValueError("ls_shrink must lie in (0, 1)")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")


# ---------------------------------------------------------------------------
# Affine block maps and the log-det barrier
# ---------------------------------------------------------------------------


class AffineBlockMap:
    """x -> [C_b + sum_i x[idx_b[i]] * D_b[i]]_b over Hermitian blocks.

    ``dir_stacks[b]`` has shape (q_b, n_b, n_b); ``dir_indices[b]`` maps
    the local direction axis into the global coordinate vector.
    """

    def __init__(self, constants, dir_stacks, dir_indices, dim):
        self.constants = [np.ascontiguousarray(c, dtype=complex) for c in constants]
        self.dir_stacks = [np.ascontiguousarray(d, dtype=complex) for d in dir_stacks]
        self.dir_indices = [np.asarray(i, dtype=np.intp) for i in dir_indices]
        self.dim = int(dim)
        self.block_dims = [c.shape[0] for c in self.constants]
        self.total_block_dim = sum(self.block_dims)

    def blocks(self, x: np.ndarray) -> list[np.ndarray]:
        out = []
        for C, D, idx in zip(self.constants, self.dir_stacks, self.dir_indices):
            if D.shape[0]:
                out.append(C + np.tensordot(x[idx], D, axes=(0, 0)))
            else:
                out.append(C.copy())
        return out

    def cholesky_list(self, blocks) -> list[np.ndarray] | None:
        """Lower-triangular factors, or None if any block is not PD."""
        chols = []
        for blk in blocks:
            try:
                chols.append(np.linalg.cholesky(blk))
            except np.linalg.LinAlgError:
                return None
        return chols

    @staticmethod
    def barrier_value(chols) -> float:
        """-sum_b log det(block_b) from the Cholesky factors."""
        return -2.0 * sum(
            float(np.sum(np.log(np.diag(L).real))) for L in chols
        )

    def barrier_grad_hess(self, chols):
        """(value, gradient, Hessian) of -sum_b log det(block_b).

        grad_i = -sum_b tr(block^-1 D_i), hess_il = sum_b tr(block^-1 D_i
        block^-1 D_l); computed per block as the Gram matrix of
        T_i = L^-1 D_i L^-dagger.
        """
        value = 0.0
        grad = np.zeros(self.dim)
        hess = np.zeros((self.dim, self.dim))
        for L, D, idx in zip(chols, self.dir_stacks, self.dir_indices):
            n = L.shape[0]
            value -= 2.0 * float(np.sum(np.log(np.diag(L).real)))
            q = D.shape[0]
            if q == 0:
                continue
            A = self._left_solve(L, D)  # A_i = L^-1 D_i
            T = self._left_solve(L, A.conj().transpose(0, 2, 1))
            T = T.conj().transpose(0, 2, 1)  # T_i = L^-1 D_i L^-dagger
            np.subtract.at(grad, idx, np.einsum("qii->q", T).real)
            flat = T.reshape(q, n * n)
            local = (flat @ flat.conj().T).real
            hess[np.ix_(idx, idx)] += local
        return value, grad, hess

    def barrier_grad(self, chols):
        """(value, gradient) of the barrier without the Hessian.

        Uses tr(block^-1 D_i) = <L^-T L^-1 conj(), D_i> so the inverse is
        formed once per block instead of solving per direction.
        """
        value = 0.0
        grad = np.zeros(self.dim)
        for L, D, idx in zip(chols, self.dir_stacks, self.dir_indices):
            n = L.shape[0]
            value -= 2.0 * float(np.sum(np.log(np.diag(L).real)))
            if D.shape[0] == 0:
                continue
            inv_l = solve_triangular(
                L, np.eye(n, dtype=complex), lower=True, check_finite=False
            )
            inv = inv_l.conj().T @ inv_l
            np.subtract.at(grad, idx, np.einsum("mn,qnm->q", inv, D).real)
        return value, grad

    @staticmethod
    def _left_solve(L, stack):
        """L^-1 @ stack[i] for every slab of a (q, n, n) stack."""
        q, n, _ = stack.shape
        flat = stack.transpose(1, 0, 2).reshape(n, q * n)
        solved = solve_triangular(L, flat, lower=True, check_finite=False)
        return solved.reshape(n, q, n).transpose(1, 0, 2)


def _gell_mann_stack(n: int) -> np.ndarray:
    """Orthonormal traceless Hermitian basis of an n x n block."""
    mats = []
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for r in range(n):
        for c in range(r + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[r, c] = m[c, r] = inv_sqrt2
            mats.append(m)
            m = np.zeros((n, n), dtype=complex)
            m[r, c] = -1j * inv_sqrt2
            m[c, r] = 1j * inv_sqrt2
            mats.append(m)
    for l in range(1, n):
        m = np.zeros((n, n), dtype=complex)
        scale = 1.0 / math.sqrt(l * (l + 1))
        for i in range(l):
            m[i, i] = scale
        m[l, l] = -l * scale
        mats.append(m)
    if mats:
        return np.array(mats)
    return np.zeros((0, n, n), dtype=complex)


class Parametrization:
    """Orthonormal affine coordinates on unit-trace PI states.

    d = sum_j (2j+1)^2 - 1 real coordinates; x = 0 is the compressed
    maximally mixed state.
    """

    def __init__(self, layout: SpinSectorLayout):
        self.layout = layout
        dims = [t + 1 for t in layout.two_j_values]
        n_sectors = len(dims)
        gg_counts = [d * d - 1 for d in dims]
        gg_offsets = np.concatenate([[0], np.cumsum(gg_counts)])
        self.dimension = int(gg_offsets[-1]) + (n_sectors - 1)
        shift_ids = np.arange(int(gg_offsets[-1]), self.dimension)

        # trace-shift directions: diagonal c_{s,b} * I_{n_b} blocks,
        # orthonormal under Frobenius and orthogonal to the global trace
        if n_sectors > 1:
            sqrtn = np.sqrt(np.asarray(dims, dtype=float))
            u = sqrtn / np.linalg.norm(sqrtn)
            Q, _ = np.linalg.qr(np.column_stack([u, np.eye(n_sectors)]))
            shift_coeff = Q[:, 1:n_sectors] / sqrtn[:, None]  # (sector, shift)
        else:
            shift_coeff = np.zeros((1, 0))

        base = maximally_mixed_ensemble(layout)
        constants, stacks, indices = [], [], []
        for b, (two_j, n) in enumerate(zip(layout.two_j_values, dims)):
            gg = _gell_mann_stack(n)
            shifts = shift_coeff[b][:, None, None] * np.eye(n)[None, :, :]
            stacks.append(np.concatenate([gg, shifts.astype(complex)], axis=0))
            indices.append(
                np.concatenate(
                    [np.arange(gg_offsets[b], gg_offsets[b + 1]), shift_ids]
                ).astype(np.intp)
            )
            constants.append(base.blocks[two_j])
        self.affine = AffineBlockMap(constants, stacks, indices, self.dimension)

    def blocks(self, x: np.ndarray) -> dict[int, np.ndarray]:
        mats = self.affine.blocks(x)
        return dict(zip(self.layout.two_j_values, mats))

    def ensemble(self, x: np.ndarray) -> SpinEnsemble:
        return SpinEnsemble(layout=self.layout, blocks=self.blocks(x))

    def coordinates(self, ensemble: SpinEnsemble) -> np.ndarray:
        """Coordinates of an ensemble: x_i = tr((rho - base) B_i)."""
        if ensemble.layout != self.layout:
            raise ValueError("ensemble layout does not match parametrization")
        x = np.zeros(self.dimension)
        for two_j, C, D, idx in zip(
            self.layout.two_j_values,
            self.affine.constants,
            self.affine.dir_stacks,
            self.affine.dir_indices,
        ):
            delta = ensemble.blocks[two_j] - C
            contrib = np.einsum("qmn,mn->q", D.conj(), delta).real
            np.add.at(x, idx, contrib)
        return x

    def basis_element(self, i: int) -> dict[int, np.ndarray]:
        """Materialize basis direction B_i as a block dictionary."""
        if not 0 <= i < self.dimension:
            raise IndexError(f"basis index {i} outside 0..{self.dimension - 1}")
        out = {}
        for two_j, D, idx in zip(
            self.layout.two_j_values, self.affine.dir_stacks, self.affine.dir_indices
        ):
            n = two_j + 1
            pos = np.flatnonzero(idx == i)
            out[two_j] = D[pos[0]].copy() if pos.size else np.zeros((n, n), complex)
        return out


# ---------------------------------------------------------------------------
# Fit functions
# ---------------------------------------------------------------------------


def fit_value(spec: FitSpec, frequencies, probabilities) -> float:
    """Evaluate a fit principle on flat frequency/probability arrays.

    For the hedged principle this is the likelihood part only (the
    log-det term needs a state, not just a distribution).  Raises on
    non-interior input: p <= 0 where the principle needs 1/p or log p.
    """
    f = np.asarray(frequencies, dtype=float).ravel()
    p = np.asarray(probabilities, dtype=float).ravel()
    if f.shape != p.shape:
        raise ValueError("frequencies and probabilities differ in length")
    kind = spec.principle
    if kind in ("ml", "hedged"):
        mask = f > 0
        if np.any(p[mask] <= 0):
            raise ValueError("non-interior evaluation: p_k <= 0 where f_k > 0")
        return float(-np.sum(f[mask] * np.log(p[mask])))
    if kind == "ls":
        if spec.weights is None:
            raise ValueError("least-squares weights unresolved; pass them explicitly")
        w = spec.weights
        if w.shape != f.shape:
            raise ValueError("weights length does not match frequencies")
        return float(np.sum(w * (f - p) ** 2))
    # freels
    if np.any(p <= 0):
        raise ValueError("non-interior evaluation: p_k <= 0")
    return float(np.sum((f - p) ** 2 / p))


def resolve_least_squares_weights(frequencies, repetitions) -> np.ndarray:
    """Default LS weights 1/max(f, 1/(10*repetitions)) per outcome."""
    f = np.asarray(frequencies, dtype=float)
    floor = 1.0 / (10.0 * float(repetitions))
    return 1.0 / np.maximum(f, floor)


class FitModel:
    """A fit principle evaluated over parametrization coordinates.

    Precomputes p0 and the overlap table G with p(x) = p0 + G x; rows run
    over (setting, outcome) in dataset order.
    """

    def __init__(self, spec: FitSpec, parametrization: Parametrization,
                 blocksets, frequencies):
        if spec.principle == "ls" and spec.weights is None:
            raise ValueError("least-squares weights unresolved; pass them explicitly")
        self.spec = spec
        self.parametrization = parametrization
        layout = parametrization.layout
        n = layout.n_qubits
        self.frequencies = np.concatenate(
            [np.asarray(fr, dtype=float).ravel() for fr in frequencies]
        )
        rows = len(blocksets) * (n + 1)
        if self.frequencies.size != rows:
            raise ValueError(
                f"{self.frequencies.size} frequencies for {rows} outcome rows"
            )
        affine = parametrization.affine
        G = np.zeros((rows, parametrization.dimension))
        p0 = np.zeros(rows)
        for r, bs in enumerate(blocksets):
            if bs.n_qubits != n:
                raise ValueError("block set qubit number does not match layout")
            row0 = r * (n + 1)
            for b, two_j in enumerate(layout.two_j_values):
                stack = bs.sector_stacks[two_j]
                D = affine.dir_stacks[b]
                idx = affine.dir_indices[b]
                off = row0 + bs.k_offset(two_j)
                rows_b = np.arange(off, off + two_j + 1)
                G[np.ix_(rows_b, idx)] += np.einsum(
                    "qmn,rnm->rq", D, stack
                ).real
                p0[rows_b] += np.einsum(
                    "mn,rnm->r", affine.constants[b], stack
                ).real
        self.G = G
        self.p0 = p0
        self._mask = self.frequencies > 0
        self._ls_hessian = None
        if spec.principle == "ls":
            w = spec.weights
            if w.shape != self.frequencies.shape:
                raise ValueError("weights length does not match dataset rows")
            self._ls_hessian = 2.0 * (G * w[:, None]).T @ G

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        return self.p0 + self.G @ x

    def value(self, x: np.ndarray) -> float:
        return fit_value(self.spec, self.frequencies, self.probabilities(x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        p = self.probabilities(x)
        f = self.frequencies
        kind = self.spec.principle
        if kind in ("ml", "hedged"):
            mask = self._mask
            if np.any(p[mask] <= 0):
                raise ValueError("non-interior evaluation: p_k <= 0 where f_k > 0")
            ratio = np.zeros_like(p)
            ratio[mask] = f[mask] / p[mask]
            return -(self.G.T @ ratio)
        if kind == "ls":
            return 2.0 * (self.G.T @ (self.spec.weights * (p - f)))
        if np.any(p <= 0):
            raise ValueError("non-interior evaluation: p_k <= 0")
        return self.G.T @ (1.0 - f**2 / p**2)

    def gradient_hessian(self, x: np.ndarray):
        p = self.probabilities(x)
        f = self.frequencies
        kind = self.spec.principle
        if kind in ("ml", "hedged"):
            mask = self._mask
            if np.any(p[mask] <= 0):
                raise ValueError("non-interior evaluation: p_k <= 0 where f_k > 0")
            ratio = np.zeros_like(p)
            ratio[mask] = f[mask] / p[mask]
            grad = -(self.G.T @ ratio)
            curv = np.zeros_like(p)
            curv[mask] = f[mask] / p[mask] ** 2
            hess = (self.G * curv[:, None]).T @ self.G
        elif kind == "ls":
            w = self.spec.weights
            grad = 2.0 * (self.G.T @ (w * (p - f)))
            return grad, self._ls_hessian.copy()
        else:  # freels
            if np.any(p <= 0):
                raise ValueError("non-interior evaluation: p_k <= 0")
            grad = self.G.T @ (1.0 - f**2 / p**2)
            hess = (self.G * (2.0 * f**2 / p**3)[:, None]).T @ self.G
        return grad, 0.5 * (hess + hess.T)


class LinearFit:
    """Linear objective c^T x (used by the pretest LMI)."""

    def __init__(self, coefficients):
        self.c = np.asarray(coefficients, dtype=float).ravel()

    def value(self, x):
        return float(self.c @ x)

    def gradient(self, x):
        return self.c.copy()

    def gradient_hessian(self, x):
        return self.c.copy(), np.zeros((self.c.size, self.c.size))


def barrier_value_grad_hess(parametrization, x, t: float):
    """(value, grad, Hessian) of -t sum_j log det rho_j(x).

    Accepts a Parametrization or a bare AffineBlockMap; raises on
    non-interior x.
    """
    affine = getattr(parametrization, "affine", parametrization)
    chols = affine.cholesky_list(affine.blocks(np.asarray(x, dtype=float)))
    if chols is None:
        raise ValueError("non-interior point: a block is not positive definite")
    value, grad, hess = affine.barrier_grad_hess(chols)
    return t * value, t * grad, t * hess


# ---------------------------------------------------------------------------
# Newton engine
# ---------------------------------------------------------------------------


@dataclass
class StageResult:
    x: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool
    objective: float
    fit_value: float


def _newton_direction(H, g):
    """Solve H delta = -g by Cholesky, adding an escalating ridge on
    factorization failure or loss of descent (lambda = 1e-12 (1 + max
    diag), then x10, at most three escalations)."""
    max_diag = float(np.max(H.diagonal())) if H.size else 0.0
    ridge = 0.0
    for _ in range(4):
        Hw = H + ridge * np.eye(H.shape[0]) if ridge else H
        try:
            factor = cho_factor(Hw, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            ridge = 1e-12 * (1.0 + max_diag) if ridge == 0.0 else ridge * 10.0
            continue
        delta = cho_solve(factor, -g, check_finite=False)
        slope = float(g @ delta)
        if slope < 0.0 and np.all(np.isfinite(delta)):
            return delta, slope
        ridge = 1e-12 * (1.0 + max_diag) if ridge == 0.0 else ridge * 10.0
    raise NonConvergenceError("Newton system unsolvable even with ridge repair")


def newton_stage(fit, parametrization, t: float, x_start: np.ndarray,
                 config: SolverConfig | None = None) -> StageResult:
    """Minimize fit(x) - t sum log det over the interior from x_start.

    Backtracking first restores feasibility (every block must pass
    Cholesky), then enforces Armijo sufficient decrease.  Starting at an
    optimum costs zero iterations.
    """
    cfg = config or SolverConfig()
    affine = getattr(parametrization, "affine", parametrization)
    x = np.asarray(x_start, dtype=float).copy()
    chols = affine.cholesky_list(affine.blocks(x))
    if chols is None:
        raise ValueError("newton_stage requires a strictly feasible start")
    fit_v = fit.value(x)
    obj = fit_v + t * affine.barrier_value(chols)

    iterations = 0
    grad_norm = math.inf
    converged = False
    eps = float(np.finfo(float).eps)
    for _ in range(cfg.max_newton_iters):
        g_fit, H_fit = fit.gradient_hessian(x)
        _, bg, bH = affine.barrier_grad_hess(chols)
        g = g_fit + t * bg
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= cfg.grad_tol:
            converged = True
            break
        H = H_fit + t * bH
        delta, slope = _newton_direction(H, g)
        # Affine-invariant centrality: the squared Newton decrement
        # g^T H^-1 g is what self-concordance bounds the remaining
        # decrease by.  In badly scaled geometry (barrier curvature
        # ~1/lambda^2 near the cone boundary) the plain gradient norm
        # can sit far above grad_tol while the iterate is already
        # central to machine precision; the decrement is not fooled.
        if -slope <= cfg.grad_tol**2:
            converged = True
            break

        if -slope > 64.0 * eps * abs(obj):
            # ordinary phase: feasibility, then Armijo sufficient decrease
            step = 1.0
            accepted = False
            while step >= 1e-16:
                x_new = x + step * delta
                chols_new = affine.cholesky_list(affine.blocks(x_new))
                if chols_new is not None:
                    fit_new = fit.value(x_new)
                    obj_new = fit_new + t * affine.barrier_value(chols_new)
                    if obj_new <= obj + cfg.ls_alpha * step * slope:
                        accepted = True
                        break
                step *= cfg.ls_shrink
            if not accepted:
                converged = grad_norm <= cfg.grad_tol * (1.0 + abs(obj))
                break
        else:
            # endgame: the predicted decrease is beneath the objective's
            # roundoff, so Armijo cannot certify progress.  Take the full
            # (feasibility-damped) Newton step as long as it strictly
            # shrinks the gradient norm; quadratic convergence still has
            # several orders of gradient reduction left here.
            step = 1.0
            chols_new = None
            while step >= 1e-16:
                x_new = x + step * delta
                chols_new = affine.cholesky_list(affine.blocks(x_new))
                if chols_new is not None:
                    break
                step *= cfg.ls_shrink
            if chols_new is None:
                converged = grad_norm <= cfg.grad_tol * (1.0 + abs(obj))
                break
            _, bg_new = affine.barrier_grad(chols_new)
            g_new = fit.gradient(x_new) + t * bg_new
            if float(np.linalg.norm(g_new)) >= grad_norm:
                converged = grad_norm <= cfg.grad_tol * (1.0 + abs(obj))
                break
            fit_new = fit.value(x_new)
            obj_new = fit_new + t * affine.barrier_value(chols_new)
        x, chols, obj, fit_v = x_new, chols_new, obj_new, fit_new
        iterations += 1
    else:
        # iteration budget exhausted; check the final gradient once more
        _, bg = affine.barrier_grad(chols)
        grad_norm = float(np.linalg.norm(fit.gradient(x) + t * bg))
        converged = grad_norm <= cfg.grad_tol

    return StageResult(
        x=x,
        iterations=iterations,
        grad_norm=grad_norm,
        converged=converged,
        objective=obj,
        fit_value=fit_v,
    )


def t_schedule(config: SolverConfig, floor: float | None = None) -> list[float]:
    """Barrier weights t0, t0/r, ... down to the floor (t_min or beta)."""
    stop = config.t_min if floor is None else floor
    if stop >= config.t0:
        return [stop]
    count = math.ceil(
        math.log(config.t0 / stop) / math.log(config.t_reduce) - 1e-9
    )
    ts = [config.t0 / config.t_reduce**i for i in range(count)]
    ts.append(stop)
    return ts


# ---------------------------------------------------------------------------
# Reconstruction drivers
# ---------------------------------------------------------------------------


@dataclass
class StageTrace:
    t: float
    iterations: int
    fit_value: float
    grad_norm: float
    estimate: SpinEnsemble


@dataclass
class ReconstructionResult:
    estimate: SpinEnsemble
    fit_value: float
    gap_bound: float
    trace: list[StageTrace]
    converged: bool

    @property
    def total_iterations(self) -> int:
        return sum(s.iterations for s in self.trace)


def _dataset_frequencies(dataset):
    """Validate counts against repetitions and return per-record frequencies."""
    freqs = []
    for rec in dataset.records:
        counts = np.asarray(rec.counts, dtype=float)
        if counts.size != dataset.n_qubits + 1:
            raise ValueError(
                f"record has {counts.size} counts, expected {dataset.n_qubits + 1}"
            )
        if np.any(counts < 0):
            raise ValueError("negative counts in dataset")
        reps = float(rec.repetitions)
        if reps <= 0:
            raise ValueError("repetitions must be positive")
        total = float(counts.sum())
        if abs(total - reps) > 1e-6 * max(1.0, reps):
            raise ValueError(
                f"counts sum to {total}, inconsistent with repetitions {reps}"
            )
        freqs.append(counts / reps)
    return freqs


def _resolve_spec(spec: FitSpec, dataset, freqs) -> FitSpec:
    if spec.principle == "ls" and spec.weights is None:
        w = np.concatenate(
            [
                resolve_least_squares_weights(f, rec.repetitions)
                for f, rec in zip(freqs, dataset.records)
            ]
        )
        return FitSpec(principle="ls", weights=w)
    return spec


def build_fit_model(dataset, spec: FitSpec,
                    parametrization: Parametrization | None = None) -> FitModel:
    """Assemble the FitModel (overlap table, frequencies) for a dataset."""
    freqs = _dataset_frequencies(dataset)
    layout = sector_layout(dataset.n_qubits)
    param = parametrization or Parametrization(layout)
    blocksets = [rotated_blocks(dataset.n_qubits, rec.setting) for rec in dataset.records]
    resolved = _resolve_spec(spec, dataset, freqs)
    return FitModel(resolved, param, blocksets, freqs)


def reconstruct(dataset, spec: FitSpec,
                config: SolverConfig | None = None) -> ReconstructionResult:
    """Interior-point reconstruction of a PI state from count data.

    Runs the barrier Newton outer loop over the t schedule (stopping at
    t = beta for the hedged principle) with warm starts, and returns the
    final estimate with its optimality-gap certificate
    gap_bound = t_final * compressed_dim.
    """
    cfg = config or SolverConfig()
    model = build_fit_model(dataset, spec)
    param = model.parametrization
    hedged = spec.principle == "hedged"
    schedule = t_schedule(cfg, spec.beta if hedged else None)

    x = np.zeros(param.dimension)
    trace = []
    all_converged = True
    for t in schedule:
        stage = newton_stage(model, param, t, x, cfg)
        x = stage.x
        if not stage.converged:
            all_converged = False
            if cfg.strict:
                raise NonConvergenceError(
                    f"stage t={t:g} stopped at gradient norm {stage.grad_norm:.3e}"
                )
        trace.append(
            StageTrace(
                t=t,
                iterations=stage.iterations,
                fit_value=stage.fit_value,
                grad_norm=stage.grad_norm,
                estimate=param.ensemble(x),
            )
        )

    final_fit = trace[-1].fit_value
    if hedged:
        chols = param.affine.cholesky_list(param.affine.blocks(x))
        final_fit += spec.beta * param.affine.barrier_value(chols)
    return ReconstructionResult(
        estimate=trace[-1].estimate,
        fit_value=final_fit,
        gap_bound=schedule[-1] * param.layout.compressed_dim,
        trace=trace,
        converged=all_converged,
    )


@dataclass
class FixedPointResult:
    estimate: SpinEnsemble
    fit_trace: np.ndarray
    iterations: int


def _stack_sectors(layout, blocksets, n):
    """Per-sector POVM blocks of all records stacked, with the flat
    (record, outcome) row index each slab belongs to."""
    sector_rows = {}
    sector_stacks = {}
    for two_j in layout.two_j_values:
        rows = []
        mats = []
        for r, bs in enumerate(blocksets):
            off = bs.k_offset(two_j)
            rows.extend(range(r * (n + 1) + off, r * (n + 1) + off + two_j + 1))
            mats.append(bs.sector_stacks[two_j])
        sector_rows[two_j] = np.asarray(rows, dtype=np.intp)
        sector_stacks[two_j] = np.concatenate(mats, axis=0)
    return sector_rows, sector_stacks


def likelihood_residual(dataset, ensemble: SpinEnsemble) -> float:
    """Stationarity residual ||R(rho) rho - S rho||_F of the ML problem.

    R(rho) = sum_{a,k} (f_k^a / p_k^a) M_{k,j}^a and S is the number of
    settings; the residual vanishes exactly at a maximum-likelihood
    state (on its support), for boundary and interior optima alike, so
    it compares solver accuracy without needing interior iterates.
    """
    freqs = _dataset_frequencies(dataset)
    n = dataset.n_qubits
    layout = ensemble.layout
    if layout.n_qubits != n:
        raise ValueError("ensemble does not match dataset qubit number")
    blocksets = [rotated_blocks(n, rec.setting) for rec in dataset.records]
    sector_rows, sector_stacks = _stack_sectors(layout, blocksets, n)
    f = np.concatenate(freqs)
    n_settings = len(dataset.records)

    p = np.zeros(f.size)
    for two_j in layout.two_j_values:
        p[sector_rows[two_j]] += np.einsum(
            "mn,rnm->r", ensemble.blocks[two_j], sector_stacks[two_j]
        ).real
    ratio = np.zeros_like(p)
    pos = f > 0
    ratio[pos] = f[pos] / np.maximum(p[pos], 1e-300)

    total = 0.0
    for two_j in layout.two_j_values:
        R = np.tensordot(ratio[sector_rows[two_j]], sector_stacks[two_j], axes=(0, 0))
        diff = R @ ensemble.blocks[two_j] - n_settings * ensemble.blocks[two_j]
        total += float(np.linalg.norm(diff)) ** 2
    return math.sqrt(total)


def fixed_point_reconstruct(dataset, iterations: int = 3000,
                            start: SpinEnsemble | None = None) -> FixedPointResult:
    """Multiplicative fixed-point ML iteration (cross-check algorithm).

    rho_j <- R_j rho_j R_j / norm with R_j = sum_{a,k} (f_k^a/p_k^a)
    M_{k,j}^a, starting from the maximally mixed state.  Records the ML
    fit value at every iterate.  Exact block data f = p(start) is a
    fixed point because R_j collapses to (number of settings) * identity.
    """
    freqs = _dataset_frequencies(dataset)
    n = dataset.n_qubits
    layout = sector_layout(n)
    blocksets = [rotated_blocks(n, rec.setting) for rec in dataset.records]
    f = np.concatenate(freqs)

    state = start or maximally_mixed_ensemble(layout)
    blocks = {t: state.blocks[t].copy() for t in layout.two_j_values}

    sector_rows, sector_stacks = _stack_sectors(layout, blocksets, n)

    ml_spec = FitSpec.max_lik()
    values = np.empty(iterations + 1)
    for it in range(iterations + 1):
        p = np.zeros(f.size)
        for two_j in layout.two_j_values:
            p[sector_rows[two_j]] += np.einsum(
                "mn,rnm->r", blocks[two_j], sector_stacks[two_j]
            ).real
        values[it] = fit_value(ml_spec, f, np.maximum(p, 1e-300))
        if it == iterations:
            break
        ratio = np.zeros_like(p)
        pos = f > 0
        ratio[pos] = f[pos] / np.maximum(p[pos], 1e-300)
        new_blocks = {}
        norm = 0.0
        for two_j in layout.two_j_values:
            R = np.tensordot(ratio[sector_rows[two_j]], sector_stacks[two_j], axes=(0, 0))
            updated = R @ blocks[two_j] @ R.conj().T
            updated = 0.5 * (updated + updated.conj().T)
            new_blocks[two_j] = updated
            norm += float(np.trace(updated).real)
        if norm <= 0.0:
            raise ValueError("fixed-point normalization vanished (degenerate data)")
        blocks = {t: m / norm for t, m in new_blocks.items()}

    estimate = SpinEnsemble(layout=layout, blocks=blocks)
    return FixedPointResult(estimate=estimate, fit_trace=values, iterations=iterations)
