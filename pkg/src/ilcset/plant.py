"""Uncertain discrete LTV plant: realization sampling and trial simulation.

A trial applies the state/output recursion

    x(k+1) = A_l(k) x(k) + B_l(k) u(k) + w_l(k)
    y(k)   = C_l(k) x(k) + D_l(k) u(k) + v_l(k)

over k in 0..N, where every quantity splits into a repetitive nominal part
plus a bounded nonrepetitive perturbation resampled each iteration l.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError
from .matrix_core import Mat, spectral_norm
from .schedule_lang import MatrixSchedule

_MASK64 = (1 << 64) - 1

# Stable stream tags: each perturbed quantity owns one substream per iteration.
_TAG = {"A": 0, "B": 1, "C": 2, "D": 3, "w": 4, "v": 5, "r": 6, "x0": 7, "sigma": 8}


@dataclass(frozen=True)
class NominalSystem:
    """Repetitive (iteration-independent) part of the plant and task."""

    n: int
    m: int
    p: int
    N: int
    A: MatrixSchedule
    B: MatrixSchedule
    C: MatrixSchedule
    D: MatrixSchedule
    w: MatrixSchedule
    v: MatrixSchedule
    r: MatrixSchedule
    x0: Mat

    def __post_init__(self):
        n, m, p = self.n, self.m, self.p
        expected = {
            "A": (n, n), "B": (n, m), "C": (p, n), "D": (p, m),
            "w": (n, 1), "v": (p, 1), "r": (p, 1),
        }
        for name, shape in expected.items():
            sched = getattr(self, name)
            if sched.shape != shape:
                raise DimensionMismatchError(
                    f"{name} schedule has shape {sched.shape}, expected {shape}")
            if sched.N != self.N:
                raise DimensionMismatchError(
                    f"{name} schedule horizon {sched.N} != {self.N}")
        if self.x0.shape != (n, 1):
            raise DimensionMismatchError(
                f"x0 has shape {self.x0.shape}, expected {(n, 1)}")

    @classmethod
    def from_parts(cls, A, B, C, D, w, v, r, x0) -> "NominalSystem":
        """Infer dimensions and horizon from the schedules themselves."""
        return cls(
            n=A.rows, m=B.cols, p=C.rows, N=A.N,
            A=A, B=B, C=C, D=D, w=w, v=v, r=r,
            x0=np.asarray(x0, dtype=np.float64).reshape(-1, 1),
        )


@dataclass(frozen=True)
class StructuredD:
    """Norm-bounded structure delta_D = E(k) Sigma_l(k) F(k), Sigma^T Sigma <= I."""

    E: MatrixSchedule  # p x s
    F: MatrixSchedule  # s x m
    s: int


@dataclass(frozen=True)
class UncertaintySpec:
    """Per-entry uniform amplitudes (the bounds of the boundedness assumption)."""

    amp_A: float = 0.0
    amp_B: float = 0.0
    amp_C: float = 0.0
    amp_D: float = 0.0
    amp_w: float = 0.0
    amp_v: float = 0.0
    amp_r: float = 0.0
    amp_x0: float = 0.0
    structured_D: Optional[StructuredD] = None
    seed: int = 0

    def __post_init__(self):
        for name in ("amp_A", "amp_B", "amp_C", "amp_D",
                     "amp_w", "amp_v", "amp_r", "amp_x0"):
            if getattr(self, name) < 0:
                raise DimensionMismatchError(f"{name} must be nonnegative")

    @classmethod
    def none(cls, seed: int = 0) -> "UncertaintySpec":
        return cls(seed=seed)

    @classmethod
    def uniform(cls, amp: float, seed: int) -> "UncertaintySpec":
        """Same amplitude for every perturbed quantity."""
        return cls(amp_A=amp, amp_B=amp, amp_C=amp, amp_D=amp,
                   amp_w=amp, amp_v=amp, amp_r=amp, amp_x0=amp, seed=seed)


@dataclass(frozen=True)
class RealizedIteration:
    """One iteration's fully sampled plant: nominal + perturbation at every k."""

    l: int
    N: int
    A: tuple
    B: tuple
    C: tuple
    D: tuple
    w: tuple
    v: tuple
    r: tuple
    x0: Mat


@dataclass(frozen=True)
class Trajectory:
    x: tuple  # N+1 states, (n,1)
    y: tuple  # N+1 outputs, (p,1)
    e: tuple  # N+1 tracking errors, (p,1)


def _stream(seed: int, l: int, tag: str) -> np.random.Generator:
    key = np.array([seed & _MASK64, ((l << 8) | _TAG[tag]) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _unit_noise(seed: int, l: int, tag: str, count: int, shape: tuple) -> np.ndarray:
    """Uniform [-1, 1] block, deterministic in (seed, l, tag) and call-order free."""
    return _stream(seed, l, tag).uniform(-1.0, 1.0, size=(count, *shape))


def sample_iteration(sys: NominalSystem, unc: UncertaintySpec, l: int) -> RealizedIteration:
    """Draw one iteration's perturbations and attach them to the nominal plant.

    Every delta entry is i.i.d. uniform on [-amp, amp] from a counter-based
    stream keyed by (seed, l, quantity); the same (seed, l) always reproduces
    the same realization regardless of sampling order.  The initial-state
    shift varies with l only.  With a structured perturbation on D, the
    contraction matrix is rescaled to keep its largest singular value <= 1.
    """
    n, m, p, N = sys.n, sys.m, sys.p, sys.N
    steps = N + 1
    seed = unc.seed

    def perturbed(tag: str, sched: MatrixSchedule, amp: float) -> tuple:
        if amp == 0.0:
            return tuple(sched.at(k) for k in range(steps))
        noise = amp * _unit_noise(seed, l, tag, steps, sched.shape)
        return tuple(sched.at(k) + noise[k] for k in range(steps))

    A = perturbed("A", sys.A, unc.amp_A)
    B = perturbed("B", sys.B, unc.amp_B)
    C = perturbed("C", sys.C, unc.amp_C)
    w = perturbed("w", sys.w, unc.amp_w)
    v = perturbed("v", sys.v, unc.amp_v)
    r = perturbed("r", sys.r, unc.amp_r)

    if unc.structured_D is not None:
        sd = unc.structured_D
        if sd.E.shape != (p, sd.s) or sd.F.shape != (sd.s, m):
            raise DimensionMismatchError(
                f"structured D blocks E{sd.E.shape}, F{sd.F.shape} "
                f"do not match p={p}, s={sd.s}, m={m}")
        sigmas = _unit_noise(seed, l, "sigma", steps, (sd.s, sd.s))
        D = []
        for k in range(steps):
            sigma = sigmas[k] / max(1.0, spectral_norm(sigmas[k]))
            D.append(sys.D.at(k) + sd.E.at(k) @ sigma @ sd.F.at(k))
        D = tuple(D)
    else:
        D = perturbed("D", sys.D, unc.amp_D)

    if unc.amp_x0 == 0.0:
        x0 = sys.x0
    else:
        x0 = sys.x0 + unc.amp_x0 * _unit_noise(seed, l, "x0", 1, (n, 1))[0]

    return RealizedIteration(l=l, N=N, A=A, B=B, C=C, D=D, w=w, v=v, r=r, x0=x0)


def sampled_sigma(sys: NominalSystem, unc: UncertaintySpec, l: int, k: int) -> Mat:
    """The contraction matrix used for the structured D perturbation at (l, k)."""
    if unc.structured_D is None:
        raise DimensionMismatchError("no structured D perturbation configured")
    s = unc.structured_D.s
    raw = _unit_noise(unc.seed, l, "sigma", sys.N + 1, (s, s))[k]
    return raw / max(1.0, spectral_norm(raw))


def simulate(realized: RealizedIteration, u: Sequence[Mat]) -> Trajectory:
    """Run one trial under the given input sequence (N+1 column vectors).

    The state recursion stops at k = N-1; u[N] feeds only the output
    equation at the final step.
    """
    N = realized.N
    if len(u) != N + 1:
        raise DimensionMismatchError(f"input sequence has {len(u)} entries, expected {N + 1}")
    x = [np.asarray(realized.x0, dtype=np.float64)]
    y = []
    e = []
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N + 1):
            yk = realized.C[k] @ x[k] + realized.D[k] @ u[k] + realized.v[k]
            if not np.all(np.isfinite(yk)):
                raise NonFiniteError("output diverged", k=k, iteration=realized.l)
            y.append(yk)
            e.append(realized.r[k] - yk)
            if k < N:
                xk1 = realized.A[k] @ x[k] + realized.B[k] @ u[k] + realized.w[k]
                if not np.all(np.isfinite(xk1)):
                    raise NonFiniteError("state diverged", k=k + 1, iteration=realized.l)
                x.append(xk1)
    return Trajectory(x=tuple(x), y=tuple(y), e=tuple(e))


def zero_input(m: int, N: int) -> list:
    """The all-zeros initial input sequence u_0."""
    return [np.zeros((m, 1)) for _ in range(N + 1)]
