"""Input-space equivalence transforms for nonsquare plants.

A plant with m inputs and p < m outputs cannot satisfy the input-side
contraction rho(I - Xi(k)D(k)) < 1 (the product has rank at most p), yet
the output-side condition rho(I - D(k)Xi(k)) < 1 is achievable.  The
resolution is a nonsingular per-step transform of the input space that
splits the input into p actively updated channels and m - p frozen ones,
leaving an equivalent square p-by-p loop.

Two variants share the same block algebra: one couples through the
feedthrough D(k) with gain Xi(k); the other, for feedthrough-free plants,
couples through C(k+1)B(k) with gain Gamma(k) and lives on k in 0..N-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConditionViolatedError,
    DimensionMismatchError,
    ModelMismatchError,
    RankDeficientError,
)
from .matrix_core import Mat, block2x2, inf_norm, invert, spectral_radius
from .plant import RealizedIteration
from .schedule_lang import MatrixSchedule

RANK_RTOL = 1e-10        # relative pivot tolerance for row-rank detection
PERM_DET_RTOL = 1e-10    # relative |det| floor for reusing the k=0 permutation
COUPLING_RESIDUAL_TOL = 1e-9


def select_nonsingular_block(M: Mat, rel_tol: float = RANK_RTOL):
    """Pick p independent columns of a p x m matrix by greedy elimination.

    Returns (perm, M1, M2) where perm lists the chosen columns first (the
    rest keep their original order), M1 = M[:, perm[:p]] is nonsingular,
    and M2 holds the remaining columns.  Rows are processed in order; each
    row takes the remaining column with the largest (eliminated) entry, so
    |det(M1)| grows greedily.  A vanishing pivot means the current row is a
    combination of the rows above it: the row rank is below p.
    """
    M = np.asarray(M, dtype=np.float64)
    p, m = M.shape
    if p > m:
        raise RankDeficientError(f"more rows than columns: {M.shape}")
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    threshold = rel_tol * max(scale, np.finfo(np.float64).tiny)
    work = M.copy()
    remaining = list(range(m))
    chosen: list[int] = []
    for row in range(p):
        col_off = int(np.argmax(np.abs(work[row, remaining])))
        col = remaining[col_off]
        pivot = abs(work[row, col])
        if pivot <= threshold:
            raise RankDeficientError(
                f"row rank {row} < {p} (pivot {pivot:.3e} in row {row})")
        remaining.pop(col_off)
        chosen.append(col)
        for r in range(row + 1, p):
            work[r] -= (work[r, col] / work[row, col]) * work[row]
    perm = np.array(chosen + remaining, dtype=np.intp)
    return perm, M[:, perm[:p]], M[:, perm[p:]]


def _fixed_perm_is_valid(coupling: Sequence[Mat], perm: np.ndarray, p: int) -> bool:
    for M in coupling:
        M1 = M[:, perm[:p]]
        scale = max(inf_norm(M1) ** p, np.finfo(np.float64).tiny)
        if abs(np.linalg.det(M1)) < PERM_DET_RTOL * scale:
            return False
    return True


class InputTransform:
    """Per-step forward/inverse block pairs shared by both transform kinds.

    For each defined k the forward matrix is

        [[t11, t12], [t21, t22]]  =  [[M1, M2], [-G2 G^-1 M1, I - G2 G^-1 M2]]

    where M = coupling (p x m, columns permuted so M1 is nonsingular),
    G = M(k) gain(k) (permutation-invariant), and G2 is the lower block of
    the permuted gain.  The inverse comes in closed form with ti22 = I
    exactly.  Applied to the permuted input, the forward transform sends
    the gain to [G; 0]: updates touch only the first p channels.
    """

    kind = "generic"

    def __init__(self, coupling, gain, perms, label: str):
        self.steps = len(coupling)
        self.p, self.m = coupling[0].shape
        self.label = label
        self.coupling = tuple(coupling)
        self.gain = tuple(gain)
        self.col_perm = tuple(perms)
        t11 = []; t12 = []; t21 = []; t22 = []
        ti11 = []; ti12 = []; ti21 = []; ti22 = []
        gains = []
        p, m = self.p, self.m
        eye_rest = np.eye(m - p)
        for k in range(self.steps):
            M, Xi, perm = self.coupling[k], self.gain[k], self.col_perm[k]
            M1, M2 = M[:, perm[:p]], M[:, perm[p:]]
            Xi1, Xi2 = Xi[perm[:p], :], Xi[perm[p:], :]
            G = M @ Xi
            rho = spectral_radius(np.eye(p) - G)
            if rho >= 1.0:
                raise ConditionViolatedError(
                    f"{label} contraction precondition fails", k=k, value=rho)
            Ginv = invert(G)
            X2G = Xi2 @ Ginv
            t11.append(M1)
            t12.append(M2)
            t21.append(-X2G @ M1)
            t22.append(eye_rest - X2G @ M2)
            ti11.append(Xi1 @ Ginv)
            ti12.append(-invert(M1) @ M2)
            ti21.append(X2G)
            ti22.append(eye_rest)
            gains.append(G)
        self.t11, self.t12, self.t21, self.t22 = map(tuple, (t11, t12, t21, t22))
        self.ti11, self.ti12, self.ti21, self.ti22 = map(tuple, (ti11, ti12, ti21, ti22))
        self.gain_products = tuple(gains)

    def matrix(self, k: int) -> Mat:
        """The assembled m x m forward transform at step k."""
        return block2x2(self.t11[k], self.t12[k], self.t21[k], self.t22[k])

    def inverse(self, k: int) -> Mat:
        """The assembled closed-form inverse at step k."""
        return block2x2(self.ti11[k], self.ti12[k], self.ti21[k], self.ti22[k])

    def frozen_mix(self, k: int) -> Mat:
        """The m x m matrix routing the initial input into the frozen channels.

        Built exactly as printed: the 2x2 grid of inverse-block-by-forward-
        block products acting on the (permuted) initial input.
        """
        return block2x2(
            self.ti12[k] @ self.t21[k], self.ti12[k] @ self.t22[k],
            self.ti22[k] @ self.t21[k], self.ti22[k] @ self.t22[k],
        )

    def active_columns(self, k: int) -> Mat:
        """The first p columns of the inverse, stacked: what u1* drives."""
        return np.vstack([self.ti11[k], self.ti21[k]])


class QTransform(InputTransform):
    """Feedthrough-coupled transform: coupling D(k), gain Xi(k), k in 0..N."""

    kind = "xi"


class PTransform(InputTransform):
    """First-Markov-parameter transform: coupling C(k+1)B(k), gain Gamma(k),
    defined on k in 0..N-1.  Keeps the nominal B/C caches so the repetitive
    precondition can be enforced when transforming a realization.
    """

    kind = "gamma"

    def __init__(self, coupling, gain, perms, b_cache, c_cache):
        super().__init__(coupling, gain, perms, label="coupling-gain")
        self.b_cache = tuple(b_cache)
        self.c_cache = tuple(c_cache)


def _build(coupling, gains, label: str):
    p, m = coupling[0].shape
    for k, (M, Xi) in enumerate(zip(coupling, gains)):
        rho = spectral_radius(np.eye(p) - M @ Xi)
        if rho >= 1.0:
            raise ConditionViolatedError(f"{label} contraction precondition fails",
                                         k=k, value=rho)
    perm0, _, _ = select_nonsingular_block(coupling[0])
    if _fixed_perm_is_valid(coupling, perm0, p):
        perms = [perm0] * len(coupling)
    else:
        perms = [select_nonsingular_block(M)[0] for M in coupling]
    return perms


def build_q_transform(D: MatrixSchedule, Xi: MatrixSchedule) -> QTransform:
    """Construct the feedthrough-coupled transform for k in 0..N.

    Requires rho(I - D(k)Xi(k)) < 1 at every step; a single column
    permutation fixed at k = 0 is reused whenever it stays nonsingular
    over the whole horizon.
    """
    if D.cols != Xi.rows or D.rows != Xi.cols or D.N != Xi.N:
        raise DimensionMismatchError(
            f"D {D.shape} and gain {Xi.shape} do not conform")
    coupling = [D.at(k) for k in range(D.N + 1)]
    gains = [Xi.at(k) for k in range(D.N + 1)]
    perms = _build(coupling, gains, "feedthrough-gain")
    return QTransform(coupling, gains, perms, label="feedthrough-gain")


def build_p_transform(B: MatrixSchedule, C: MatrixSchedule,
                      Gamma: MatrixSchedule) -> PTransform:
    """Construct the C(k+1)B(k)-coupled transform for k in 0..N-1."""
    if B.rows != C.cols or B.cols != Gamma.rows or C.rows != Gamma.cols:
        raise DimensionMismatchError(
            f"B {B.shape}, C {C.shape}, gain {Gamma.shape} do not conform")
    if not (B.N == C.N == Gamma.N):
        raise DimensionMismatchError("schedule horizons differ")
    coupling = [C.at(k + 1) @ B.at(k) for k in range(B.N)]
    gains = [Gamma.at(k) for k in range(B.N)]
    perms = _build(coupling, gains, "coupling-gain")
    return PTransform(coupling, gains, perms,
                      b_cache=[B.at(k) for k in range(B.N + 1)],
                      c_cache=[C.at(k) for k in range(C.N + 1)])


@dataclass(frozen=True)
class TransformedSystem:
    """The equivalent square system driven only by the p updated channels."""

    kind: str            # "xi" or "gamma"
    Bstar: tuple         # per-k n x p
    Dstar: Optional[tuple]  # per-k p x p, absent for the feedthrough-free case
    wstar: tuple
    vstar: tuple
    gain_star: tuple     # per-k p x p updated-channel gain


def _initial_input_correction(transform: InputTransform, u0, k: int) -> Mat:
    perm = transform.col_perm[k]
    return transform.frozen_mix(k) @ u0[k][perm, :]


def apply_q_transform(realized: RealizedIteration, q: QTransform,
                       u0: Sequence[Mat]) -> TransformedSystem:
    """Square the feedthrough-coupled plant for one realized iteration.

    The realized B/D matrices are pushed through the inverse's active
    columns; the disturbance and noise pick up the frozen-channel share of
    the initial input.
    """
    if q.steps != realized.N + 1:
        raise DimensionMismatchError(
            f"transform defined on {q.steps} steps, plant horizon {realized.N}")
    if realized.D[0].shape != (q.p, q.m):
        raise DimensionMismatchError(
            f"plant D shape {realized.D[0].shape} vs transform {(q.p, q.m)}")
    if len(u0) != realized.N + 1:
        raise DimensionMismatchError("initial input length mismatch")
    Bstar = []; Dstar = []; wstar = []; vstar = []
    for k in range(realized.N + 1):
        perm = q.col_perm[k]
        active = q.active_columns(k)
        Bk = realized.B[k][:, perm]
        Dk = realized.D[k][:, perm]
        correction = _initial_input_correction(q, u0, k)
        Bstar.append(Bk @ active)
        Dstar.append(Dk @ active)
        wstar.append(realized.w[k] + Bk @ correction)
        vstar.append(realized.v[k] + Dk @ correction)
    return TransformedSystem(kind="xi", Bstar=tuple(Bstar), Dstar=tuple(Dstar),
                             wstar=tuple(wstar), vstar=tuple(vstar),
                             gain_star=q.gain_products)


def apply_p_transform(realized: RealizedIteration, p: PTransform,
                       u0: Sequence[Mat]) -> TransformedSystem:
    """Square the feedthrough-free plant for one realized iteration.

    Requires the realization to match the transform's nominal B and C
    exactly (repetitive input/output maps) and to have zero feedthrough.
    The resulting coupling satisfies C(k+1) Bstar(k) = I.
    """
    if p.steps != realized.N:
        raise DimensionMismatchError(
            f"transform defined on {p.steps} steps, expected {realized.N}")
    if len(u0) != realized.N + 1:
        raise DimensionMismatchError("initial input length mismatch")
    for k in range(realized.N + 1):
        if inf_norm(realized.D[k]) != 0.0:
            raise ModelMismatchError(f"feedthrough must be zero, nonzero at k={k}")
        if not np.array_equal(realized.B[k], p.b_cache[k]):
            raise ModelMismatchError(f"B is nonrepetitive at k={k}")
        if not np.array_equal(realized.C[k], p.c_cache[k]):
            raise ModelMismatchError(f"C is nonrepetitive at k={k}")
    Bstar = []; wstar = []
    for k in range(realized.N):
        perm = p.col_perm[k]
        Bk = p.b_cache[k][:, perm]
        Bstar_k = Bk @ p.active_columns(k)
        residual = inf_norm(p.c_cache[k + 1] @ Bstar_k - np.eye(p.p))
        if residual > COUPLING_RESIDUAL_TOL:
            raise ModelMismatchError(
                f"coupling inverse residual {residual:.3e} at k={k}")
        Bstar.append(Bstar_k)
        wstar.append(realized.w[k] + Bk @ _initial_input_correction(p, u0, k))
    return TransformedSystem(kind="gamma", Bstar=tuple(Bstar), Dstar=None,
                             wstar=tuple(wstar), vstar=realized.v,
                             gain_star=p.gain_products)


def split_input(transform: InputTransform, u: Mat, k: int):
    """Map one input vector through the forward transform and split it."""
    if u.shape != (transform.m, 1):
        raise DimensionMismatchError(f"input shape {u.shape}, expected {(transform.m, 1)}")
    star = transform.matrix(k) @ u[transform.col_perm[k], :]
    return star[:transform.p, :], star[transform.p:, :]


def assemble_input(transform: InputTransform, u1star: Mat, u2star: Mat, k: int) -> Mat:
    """Invert split_input: recover the original-coordinate input vector."""
    if u1star.shape != (transform.p, 1) or u2star.shape != (transform.m - transform.p, 1):
        raise DimensionMismatchError(
            f"split shapes {u1star.shape}, {u2star.shape} do not match "
            f"p={transform.p}, m={transform.m}")
    permuted = transform.inverse(k) @ np.vstack([u1star, u2star])
    u = np.empty((transform.m, 1))
    u[transform.col_perm[k], :] = permuted
    return u
