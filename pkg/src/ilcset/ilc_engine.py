"""The iteration-domain loop.

Each iteration realizes the uncertain plant, simulates one trial under the
current input, records worst-case error/input metrics, and forms the next
input from the tracking error.  Two families of runs exist: direct runs
apply the update in original input coordinates; transformed runs iterate
only the p active channels of the split input, keep the remaining channels
frozen at their initial values, and map back through the closed-form
inverse each trial — producing (up to roundoff) identical trajectories.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .conditions import ConditionReport
from .errors import (
    DimensionMismatchError,
    MissingDataError,
    NotConvergedError,
)
from .matrix_core import Mat, inf_norm, spectral_radius
from .plant import (
    NominalSystem,
    RealizedIteration,
    Trajectory,
    UncertaintySpec,
    sample_iteration,
    simulate,
)
from .schedule_lang import MatrixSchedule
from .set_transform import (
    InputTransform,
    PTransform,
    QTransform,
    assemble_input,
    split_input,
)

log = logging.getLogger(__name__)

XI_MODES = ("direct-xi", "transformed-xi")
GAMMA_MODES = ("direct-gamma", "transformed-gamma", "repetitive")
CONVERGENCE_THRESHOLD = 1e-9


@dataclass(frozen=True)
class IlcConfig:
    """Loop parameters: update mode, trial count, and the starting input."""

    mode: str
    iterations: int
    u0: tuple              # N+1 inputs, each m x 1
    record_every: int = 1

    def __post_init__(self):
        if self.mode not in XI_MODES + GAMMA_MODES:
            raise DimensionMismatchError(f"unknown mode {self.mode!r}")
        if self.iterations < 1:
            raise DimensionMismatchError("iterations must be positive")
        if self.record_every < 1:
            raise DimensionMismatchError("record_every must be positive")


@dataclass(frozen=True)
class RunResult:
    """Everything recorded over one run.

    E_hist[l] = max_k ||e_l(k)||_inf and U_hist[l] = max_k ||u_l(k)||_inf,
    with k ranging over 0..N in the current-error modes and over 1..N
    (errors) / 0..N-1 (inputs) in the look-ahead modes.  converged_value
    estimates the asymptotic error level as the maximum of E over the last
    tenth of the iterations.  xi_seq / gamma_seq are the per-step gains the
    run effectively applied, retained so recorded data can be re-checked
    against the iteration-domain recursions afterwards.
    """

    mode: str
    iterations: int
    E_hist: tuple
    U_hist: tuple
    inputs: tuple          # inputs[l][k]: the input applied on iteration l
    trajectories: tuple    # one Trajectory per iteration
    converged_value: float
    xi_seq: tuple
    gamma_seq: tuple
    condition_report: Optional[ConditionReport] = None
    warnings: tuple = ()
    u1star_history: Optional[tuple] = None
    u2star_history: Optional[tuple] = None

    @property
    def final_trajectory(self) -> Trajectory:
        return self.trajectories[-1]

    @property
    def final_input(self) -> tuple:
        return self.inputs[-1]


def update_input(u: Sequence[Mat], e: Sequence[Mat], Xi: MatrixSchedule,
                 Gamma: MatrixSchedule) -> list:
    """One step of the update law: u + Xi e(k) + Gamma e(k+1).

    The look-ahead term is dropped at k = N where e(N+1) does not exist.
    """
    N = len(u) - 1
    if len(e) != N + 1:
        raise DimensionMismatchError("input and error sequences differ in length")
    out = []
    # Divergent configurations are allowed to overflow here; the next
    # simulation reports the non-finite values with their iteration.
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N + 1):
            nxt = u[k] + Xi.at(k) @ e[k]
            if k < N:
                nxt = nxt + Gamma.at(k) @ e[k + 1]
            out.append(nxt)
    return out


def _metrics(mode: str, traj: Trajectory, u: Sequence[Mat], N: int) -> tuple:
    if mode in GAMMA_MODES:
        E = max(inf_norm(traj.e[k]) for k in range(1, N + 1))
        U = max(inf_norm(u[k]) for k in range(N))
    else:
        E = max(inf_norm(traj.e[k]) for k in range(N + 1))
        U = max(inf_norm(u[k]) for k in range(N + 1))
    return E, U


def _converged_value(E_hist: Sequence[float]) -> float:
    tail = max(1, -(-len(E_hist) // 10))  # ceil(L / 10)
    return max(E_hist[-tail:])


def _loop_report(name: str, loops: Sequence[Mat]) -> ConditionReport:
    values = [(k, spectral_radius(np.eye(len(m)) - m)) for k, m in enumerate(loops)]
    return ConditionReport.from_values(name, values, 1.0)


def _precheck(report: ConditionReport) -> tuple:
    if report.satisfied:
        return report, ()
    message = (f"condition {report.name} violated: worst {report.worst:.6g} "
               f"at k={report.worst_k}; the run may diverge")
    log.warning(message)
    return report, (message,)


def run(sys: NominalSystem, unc: UncertaintySpec, gains: tuple,
        cfg: IlcConfig) -> RunResult:
    """Direct loop in original input coordinates.

    A violated contraction condition logs a warning but does not abort, so
    divergent configurations stay runnable; numerical blow-up surfaces as
    NonFinite carrying the offending step and iteration.
    """
    xi, gamma = gains
    xi_seq = tuple(xi.at(k) for k in range(sys.N + 1))
    gamma_seq = tuple(gamma.at(k) for k in range(sys.N + 1))
    if cfg.mode in GAMMA_MODES:
        loops = [sys.C.at(k + 1) @ sys.B.at(k) @ gamma_seq[k] for k in range(sys.N)]
        report, warnings = _precheck(_loop_report("rho_cbgamma", loops))
    else:
        loops = [sys.D.at(k) @ xi_seq[k] for k in range(sys.N + 1)]
        report, warnings = _precheck(_loop_report("rho_dxi", loops))
    u = [np.asarray(uk, dtype=np.float64) for uk in cfg.u0]
    E_hist, U_hist, inputs, trajectories = [], [], [], []
    for l in range(cfg.iterations):
        realized = sample_iteration(sys, unc, l)
        traj = simulate(realized, u)
        E, U = _metrics(cfg.mode, traj, u, sys.N)
        E_hist.append(E)
        U_hist.append(U)
        inputs.append(tuple(u))
        trajectories.append(traj)
        u = update_input(u, traj.e, xi, gamma)
    return RunResult(mode=cfg.mode, iterations=cfg.iterations,
                     E_hist=tuple(E_hist), U_hist=tuple(U_hist),
                     inputs=tuple(inputs), trajectories=tuple(trajectories),
                     converged_value=_converged_value(E_hist),
                     xi_seq=xi_seq, gamma_seq=gamma_seq,
                     condition_report=report, warnings=warnings)


def run_transformed(sys: NominalSystem, unc: UncertaintySpec,
                    transform: InputTransform, cfg: IlcConfig) -> RunResult:
    """Split-coordinate loop: update the p active channels only.

    The frozen channels keep their initial split values for the whole run;
    the applied input is reassembled through the closed-form inverse each
    iteration and drives the original uncertain plant.  The active update
    uses the collapsed square gain, so its loop matrix coincides with the
    direct one and the same contraction condition applies.
    """
    m, p = sys.m, sys.p
    zero_gain = np.zeros((m, p))
    if cfg.mode == "transformed-xi":
        if not isinstance(transform, QTransform):
            raise DimensionMismatchError(
                "transformed-xi needs a feedthrough-coupled transform")
        active_steps = sys.N + 1
        xi_seq = tuple(transform.gain)
        gamma_seq = tuple(zero_gain for _ in range(sys.N + 1))
        report, warnings = _precheck(_loop_report("rho_dxi", transform.gain_products))
    elif cfg.mode in ("transformed-gamma", "repetitive"):
        if not isinstance(transform, PTransform):
            raise DimensionMismatchError(
                f"{cfg.mode} needs a state-coupled transform on k in 0..N-1")
        active_steps = sys.N
        xi_seq = tuple(zero_gain for _ in range(sys.N + 1))
        gamma_seq = tuple(transform.gain) + (zero_gain,)
        report, warnings = _precheck(
            _loop_report("rho_cbgamma", transform.gain_products))
    else:
        raise DimensionMismatchError(f"mode {cfg.mode!r} is not a transformed mode")

    split1, split2 = [], []
    for k in range(active_steps):
        u1k, u2k = split_input(transform, np.asarray(cfg.u0[k], dtype=np.float64), k)
        split1.append(u1k)
        split2.append(u2k)
    frozen = tuple(arr.copy() for arr in split2)

    E_hist, U_hist, inputs, trajectories = [], [], [], []
    u1_hist, u2_hist = [], []
    u1 = split1
    shift = 0 if cfg.mode == "transformed-xi" else 1
    for l in range(cfg.iterations):
        u = [assemble_input(transform, u1[k], frozen[k], k)
             for k in range(active_steps)]
        for k in range(active_steps, sys.N + 1):
            u.append(np.asarray(cfg.u0[k], dtype=np.float64))
        realized = sample_iteration(sys, unc, l)
        traj = simulate(realized, u)
        E, U = _metrics(cfg.mode, traj, u, sys.N)
        E_hist.append(E)
        U_hist.append(U)
        inputs.append(tuple(u))
        trajectories.append(traj)
        u1_hist.append(tuple(arr.copy() for arr in u1))
        u2_hist.append(tuple(arr.copy() for arr in frozen))
        u1 = [u1[k] + transform.gain_products[k] @ traj.e[k + shift]
              for k in range(active_steps)]
    return RunResult(mode=cfg.mode, iterations=cfg.iterations,
                     E_hist=tuple(E_hist), U_hist=tuple(U_hist),
                     inputs=tuple(inputs), trajectories=tuple(trajectories),
                     converged_value=_converged_value(E_hist),
                     xi_seq=xi_seq, gamma_seq=gamma_seq,
                     condition_report=report, warnings=warnings,
                     u1star_history=tuple(u1_hist), u2star_history=tuple(u2_hist))


@dataclass(frozen=True)
class ResidualReport:
    """Worst-case violation of an iteration-domain identity over a run.

    per_iteration[i] is the worst residual of the transition from iteration
    i to i + 1, so it has one entry fewer than the run has iterations.
    """

    name: str
    max_residual: float
    per_iteration: tuple = ()
    max_state_residual: Optional[float] = None


def _require_logged(result: RunResult) -> None:
    if len(result.trajectories) < 2 or len(result.inputs) < 2:
        raise MissingDataError("run must retain at least two iterations of data")


def realizations_for(sys: NominalSystem, unc: UncertaintySpec,
                     iterations: int) -> list:
    """Recreate the deterministic realization sequence of a run."""
    return [sample_iteration(sys, unc, l) for l in range(iterations)]


def verify_error_recursion(result: RunResult,
                           realizations: Sequence[RealizedIteration]) -> ResidualReport:
    """Check e_{l+1} = (I - D_l Xi) e_l + tau_l on logged data.

    tau_l collects the iteration-to-iteration shifts: the propagated state
    difference plus model, reference, and noise shifts.  The state
    difference itself obeys a companion recursion, re-derived and checked
    alongside.  All shifted-matrix products are taken in the dimensionally
    meaningful order (matrix shift times vector).
    """
    _require_logged(result)
    N = len(result.trajectories[0].e) - 1
    per_iteration = []
    worst_state = 0.0
    for l in range(len(result.trajectories) - 1):
        cur, nxt = realizations[l], realizations[l + 1]
        t_cur, t_nxt = result.trajectories[l], result.trajectories[l + 1]
        u_cur, u_nxt = result.inputs[l], result.inputs[l + 1]
        worst = 0.0
        for k in range(N + 1):
            dx = t_nxt.x[k] - t_cur.x[k]
            dC = nxt.C[k] - cur.C[k]
            dD = nxt.D[k] - cur.D[k]
            dr = nxt.r[k] - cur.r[k]
            dv = nxt.v[k] - cur.v[k]
            tau = -cur.C[k] @ dx - dC @ t_nxt.x[k] - dD @ u_nxt[k] + dr - dv
            loop = np.eye(len(tau)) - cur.D[k] @ result.xi_seq[k]
            residual = t_nxt.e[k] - loop @ t_cur.e[k] - tau
            worst = max(worst, inf_norm(residual))
            if k < N:
                du = u_nxt[k] - u_cur[k]
                dA = nxt.A[k] - cur.A[k]
                dB = nxt.B[k] - cur.B[k]
                dw = nxt.w[k] - cur.w[k]
                dx1 = t_nxt.x[k + 1] - t_cur.x[k + 1]
                predicted = (cur.A[k] @ dx + dA @ t_nxt.x[k]
                             + cur.B[k] @ du + dB @ u_nxt[k] + dw)
                worst_state = max(worst_state, inf_norm(dx1 - predicted))
        per_iteration.append(worst)
    return ResidualReport(name="error_recursion",
                          max_residual=max(per_iteration),
                          per_iteration=tuple(per_iteration),
                          max_state_residual=worst_state)


def verify_input_recursion(result: RunResult,
                           realizations: Sequence[RealizedIteration]) -> ResidualReport:
    """Check the input's own iteration-domain dynamics on logged data.

    Current-error modes: u_{l+1} = (I - Xi D_l) u_l + Xi (r_l - C_l x_l - v_l).
    Look-ahead modes eliminate e_l(k+1) through the one-step state update:
    u_{l+1}(k) = (I - Gamma C_l(k+1) B_l(k)) u_l(k)
    + Gamma [r_l(k+1) - C_l(k+1)(A_l(k) x_l(k) + w_l(k)) - v_l(k+1)]
    for k in 0..N-1, while the final input is never updated.
    """
    _require_logged(result)
    N = len(result.trajectories[0].e) - 1
    m = result.inputs[0][0].shape[0]
    per_iteration = []
    look_ahead = result.mode in GAMMA_MODES
    for l in range(len(result.inputs) - 1):
        cur = realizations[l]
        t_cur = result.trajectories[l]
        u_cur, u_nxt = result.inputs[l], result.inputs[l + 1]
        worst = 0.0
        if look_ahead:
            for k in range(N):
                G = result.gamma_seq[k]
                loop = np.eye(m) - G @ cur.C[k + 1] @ cur.B[k]
                drive = G @ (cur.r[k + 1]
                             - cur.C[k + 1] @ (cur.A[k] @ t_cur.x[k] + cur.w[k])
                             - cur.v[k + 1])
                residual = u_nxt[k] - loop @ u_cur[k] - drive
                worst = max(worst, inf_norm(residual))
            worst = max(worst, inf_norm(u_nxt[N] - u_cur[N]))
        else:
            for k in range(N + 1):
                Xi = result.xi_seq[k]
                loop = np.eye(m) - Xi @ cur.D[k]
                drive = Xi @ (cur.r[k] - cur.C[k] @ t_cur.x[k] - cur.v[k])
                residual = u_nxt[k] - loop @ u_cur[k] - drive
                worst = max(worst, inf_norm(residual))
        per_iteration.append(worst)
    return ResidualReport(name="input_recursion",
                          max_residual=max(per_iteration),
                          per_iteration=tuple(per_iteration))


def limit_input(sys: NominalSystem, transform: PTransform, u0: Sequence[Mat],
                result: RunResult) -> list:
    """Closed-form limit of the input in the uncertainty-free look-ahead case.

    Maps the converged active channels and the frozen share of the initial
    input back through the inverse; the claim is that this matches the
    empirically converged input.  The supplied run must have essentially
    vanished tracking error, otherwise its final input is not yet the limit.
    """
    final_E = result.E_hist[-1]
    if final_E > CONVERGENCE_THRESHOLD:
        raise NotConvergedError(
            f"final error {final_E:.3e} above {CONVERGENCE_THRESHOLD:.0e}")
    if result.u1star_history is not None:
        u1_inf = list(result.u1star_history[-1])
    else:
        u1_inf = [split_input(transform, result.final_input[k], k)[0]
                  for k in range(sys.N)]
    out = []
    for k in range(sys.N):
        _, frozen = split_input(transform, np.asarray(u0[k], dtype=np.float64), k)
        out.append(assemble_input(transform, u1_inf[k], frozen, k))
    out.append(np.asarray(u0[sys.N], dtype=np.float64))
    return out
