"""Coarse-grained collective measurements in the spin-block representation.

Every qubit is measured along the same unit vector a, and only the count
k of "+1" results is recorded (k = 0..N).  The resulting POVM commutes
with qubit permutations, so each element splits over the spin sectors:

    M_k^a = (+)_j  M_{k,j}^a (x) 1_{K_j}.

Along the z axis the block elements are rank-1 projectors onto the basis
state with magnetic quantum number m = k - N/2 (k up-spins out of N),
present only when |m| <= j.  A general axis follows by the collective
rotation taking e_z to a:

    M_{k,j}^a = W_j M_{k,j}^{e_z} W_j^dagger,
    W_j = exp(-i theta n.S_j),   n = (e_z x a)/|e_z x a|,
    theta = arccos(a_z),

with n = e_x when a is (anti)parallel to e_z.  Sector probabilities of a
PI state then reduce to block traces, p_k = sum_j tr(rho_j M_{k,j}^a).

The module also provides the moment coefficients K(k,w,N) that convert
outcome distributions into expectation values of symmetrized w-fold
tensor powers of a.sigma: since the POVM is the eigen-decomposition of
the collective measurement, [(a.sigma)^{(x)w} (x) 1]_PI = sum_k K M_k^a
holds as an operator identity, so second moments use K^2 with the same
probabilities.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .spin_blocks import (
    SpinEnsemble,
    SpinSectorLayout,
    hermitian_expm,
    sector_layout,
    spin_operators,
)

__all__ = [
    "Setting",
    "E1",
    "E2",
    "E3",
    "MeasurementBlockSet",
    "rotation_params",
    "standard_blocks",
    "rotated_blocks",
    "probabilities",
    "moment_coefficients",
    "load_settings",
    "save_settings",
]

UNIT_NORM_TOL = 1e-12
LOAD_NORM_WARN = 1e-6


@dataclass(frozen=True)
class Setting:
    """A measurement direction: unit 3-vector (tolerance 1e-12)."""

    axis: np.ndarray

    def __post_init__(self):
        ax = np.asarray(self.axis, dtype=float).reshape(3)
        norm = float(np.linalg.norm(ax))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"setting axis norm {norm!r} deviates from 1")
        ax = ax.copy()
        ax.setflags(write=False)
        object.__setattr__(self, "axis", ax)

    @classmethod
    def from_vector(cls, vec, warn_tol: float = LOAD_NORM_WARN) -> "Setting":
        """Normalize an arbitrary non-zero 3-vector into a Setting."""
        v = np.asarray(vec, dtype=float).reshape(3)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("setting axis must be non-zero")
        if abs(norm - 1.0) > warn_tol:
            warnings.warn(
                f"setting axis norm {norm:.8f} deviates from 1 by more than "
                f"{warn_tol:g}; normalizing",
                stacklevel=2,
            )
        return cls(axis=v / norm)


E1 = Setting(axis=np.array([1.0, 0.0, 0.0]))
E2 = Setting(axis=np.array([0.0, 1.0, 0.0]))
E3 = Setting(axis=np.array([0.0, 0.0, 1.0]))


def rotation_params(setting: Setting) -> tuple[np.ndarray, float]:
    """Rotation axis and angle taking e_z onto the measurement direction.

    Returns (n, theta) with n a unit vector orthogonal to e_z.  For
    settings (anti)parallel to e_z the axis degenerates; e_x is returned
    with theta = 0 or pi.
    """
    a = setting.axis
    cross = np.array([-a[1], a[0], 0.0])  # e_z x a
    norm = float(np.linalg.norm(cross))
    theta = float(math.acos(max(-1.0, min(1.0, a[2]))))
    if norm < 1e-12:
        return np.array([1.0, 0.0, 0.0]), theta
    return cross / norm, theta


@dataclass(frozen=True)
class MeasurementBlockSet:
    """Block-diagonal POVM for one setting.

    ``sector_stacks[two_j]`` has shape (two_j+1, two_j+1, two_j+1): entry
    r is the block of outcome k = k_offset(two_j) + r.  Outcomes outside
    that range have no support in the sector (structural zeros).
    """

    n_qubits: int
    setting: Setting
    sector_stacks: dict[int, np.ndarray]

    def k_offset(self, two_j: int) -> int:
        return (self.n_qubits - two_j) // 2

    def outcome_range(self, two_j: int) -> range:
        off = self.k_offset(two_j)
        return range(off, off + two_j + 1)

    def block(self, k: int, two_j: int) -> np.ndarray | None:
        """Block of outcome k in sector two_j, or None if structurally zero."""
        if not 0 <= k <= self.n_qubits:
            raise KeyError(f"outcome k={k} outside 0..{self.n_qubits}")
        off = self.k_offset(two_j)
        if k < off or k > off + two_j:
            return None
        return self.sector_stacks[two_j][k - off]


def standard_blocks(n_qubits: int) -> MeasurementBlockSet:
    """Block POVM for the z axis: projectors onto m = k - N/2."""
    layout = sector_layout(n_qubits)
    stacks = {}
    for two_j in layout.two_j_values:
        dim = two_j + 1
        stack = np.zeros((dim, dim, dim), dtype=complex)
        for r in range(dim):
            # outcome k = k_offset + r sits at m = k - N/2, basis index
            # i = j - m = two_j - r (basis is ordered m descending)
            stack[r, two_j - r, two_j - r] = 1.0
        stack.setflags(write=False)
        stacks[two_j] = stack
    return MeasurementBlockSet(n_qubits=n_qubits, setting=E3, sector_stacks=stacks)


def rotated_blocks(n_qubits: int, setting: Setting) -> MeasurementBlockSet:
    """Block POVM for an arbitrary setting, by collective rotation."""
    layout = sector_layout(n_qubits)
    axis, theta = rotation_params(setting)
    stacks = {}
    for two_j in layout.two_j_values:
        dim = two_j + 1
        ops = spin_operators(two_j)
        gen = axis[0] * ops.s_x + axis[1] * ops.s_y + axis[2] * ops.s_z
        W = hermitian_expm(gen, theta)
        # W e_i is column i; outcome r projects onto column two_j - r
        cols = W[:, ::-1]  # column r of this view is W[:, two_j - r]
        stack = np.einsum("mr,nr->rmn", cols, cols.conj())
        stack.setflags(write=False)
        stacks[two_j] = stack
    return MeasurementBlockSet(n_qubits=n_qubits, setting=setting, sector_stacks=stacks)


def probabilities(state: SpinEnsemble, blocks: MeasurementBlockSet) -> np.ndarray:
    """Outcome distribution p_k = sum_j tr(rho_j M_{k,j}), k = 0..N.

    Tiny negative values from roundoff are clamped to zero.
    """
    if state.layout.n_qubits != blocks.n_qubits:
        raise ValueError(
            f"state has N={state.layout.n_qubits}, POVM has N={blocks.n_qubits}"
        )
    n = blocks.n_qubits
    p = np.zeros(n + 1)
    for two_j in state.layout.two_j_values:
        rho = state.blocks[two_j]
        stack = blocks.sector_stacks[two_j]
        vals = np.einsum("mn,rnm->r", rho, stack).real
        off = blocks.k_offset(two_j)
        p[off : off + two_j + 1] += vals
    return np.where(p < 0.0, 0.0, p)


def moment_coefficients(n_qubits: int, weight: int) -> np.ndarray:
    """Coefficients K(k,w,N) with sum_k K p_k = <[(a.sigma)^{(x)w} (x) 1]_PI>.

    Outcome k fixes k spins at +1 and N-k at -1 along the measured axis;
    averaging the sign product over all w-subsets of qubits gives

        K(k,w,N) = [sum_l (-1)^l C(N-k,l) C(k,w-l)] / C(N,w),

    evaluated in exact integer arithmetic before the single division.
    """
    n = int(n_qubits)
    w = int(weight)
    if not 0 <= w <= n:
        raise ValueError(f"weight w={w} outside 0..{n}")
    denom = math.comb(n, w)
    out = np.empty(n + 1)
    for k in range(n + 1):
        acc = 0
        for l in range(max(0, w - k), min(w, n - k) + 1):
            acc += (-1) ** l * math.comb(n - k, l) * math.comb(k, w - l)
        out[k] = acc / denom
    return out


def load_settings(path) -> list[Setting]:
    """Read a JSON array of 3-vectors; normalizes, warning beyond 1e-6."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list) or not data:
        raise ValueError(f"settings file {path} must hold a non-empty JSON array")
    return [Setting.from_vector(entry) for entry in data]


def save_settings(settings, path) -> None:
    data = [[float(c) for c in s.axis] for s in settings]
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")
