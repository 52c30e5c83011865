"""Fixed-step (Euler, RK4) and adaptive (Dormand-Prince 5(4)) integration.

Solvers hold no global state; every evaluation of the right-hand side is
counted so adaptive-versus-fixed comparisons can report exact NFE numbers.
Training differentiates through the Euler unroll only (see model.py); the
adaptive solver exists for inference and diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class IntegrationError(RuntimeError):
    """Raised when integration cannot continue; carries the failing step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass
class SolverConfig:
    method: str = "euler"  # euler | rk4 | dopri5
    dt: float = 0.1
    t_end: float = 1.0
    rtol: float = 1e-7
    atol: float = 1e-7
    max_nfe: int = 1_000_000

    def __post_init__(self):
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.method in ("euler", "rk4") and self.dt <= 0:
            raise ValueError("fixed-step methods need dt > 0")
        if self.method == "dopri5" and (self.rtol <= 0 or self.atol <= 0):
            raise ValueError("dopri5 needs positive rtol and atol")


@dataclass
class Trajectory:
    """Recorded times and states plus solver work counters.

    states always includes the initial and final state; with record=True it
    holds one entry per accepted step. nfe counts every RHS evaluation,
    including those spent on rejected steps.
    """

    times: np.ndarray
    states: list = field(default_factory=list)
    nfe: int = 0
    accepted: int = 0
    rejected: int = 0

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_time(self):
        return float(self.times[-1])

    def stats(self) -> dict:
        return {"nfe": self.nfe, "accepted": self.accepted, "rejected": self.rejected}


def step_euler(x, rhs, dt):
    """One forward Euler step; exactly one RHS evaluation."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return x + dt * rhs(x)


def step_rk4(x, rhs, dt):
    """One classic fourth-order Runge-Kutta step; four RHS evaluations."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * dt * k1)
    k3 = rhs(x + 0.5 * dt * k2)
    k4 = rhs(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_fixed(x0, rhs, cfg: SolverConfig, record=False) -> Trajectory:
    """March ceil(T/dt) steps of Euler or RK4, landing exactly on T.

    The final step is truncated when T is not a multiple of dt. Raises
    IntegrationError with the failing step index if the state stops being
    finite.
    """
    if cfg.method not in ("euler", "rk4"):
        raise ValueError(f"integrate_fixed cannot run method {cfg.method!r}")
    stepper = step_euler if cfg.method == "euler" else step_rk4
    per_step = 1 if cfg.method == "euler" else 4
    n_steps = max(1, math.ceil(cfg.t_end / cfg.dt - 1e-12))

    x = np.asarray(x0, dtype=np.float64)
    times = [0.0]
    states = [x]
    t = 0.0
    for m in range(n_steps):
        h = cfg.dt if m < n_steps - 1 else cfg.t_end - t
        x = stepper(x, rhs, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state after step {m}", step=m)
        t = cfg.t_end if m == n_steps - 1 else t + cfg.dt
        if record or m == n_steps - 1:
            times.append(t)
            states.append(x)
    return Trajectory(
        times=np.asarray(times), states=states,
        nfe=per_step * n_steps, accepted=n_steps,
    )


# Dormand-Prince 5(4) tableau. Row i gives the weights for stage i+2; B5 are
# the fifth-order solution weights (stage 7 doubles as the FSAL evaluation),
# and ERR = B5 - B4 yields the embedded error estimate directly.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_ERR = _DP_B5 - np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 5.0
_PI_ALPHA = 0.7 / 5.0
_PI_BETA = 0.4 / 5.0


def _rms(v):
    return float(np.sqrt(np.mean(np.square(v))))


def _initial_step(x0, f0, rhs, cfg):
    """Starting step size: min(T/100, standard two-evaluation heuristic).

    Costs one extra RHS evaluation for the trial point.
    """
    sc = cfg.atol + cfg.rtol * np.abs(x0)
    d0 = _rms(x0 / sc)
    d1 = _rms(f0 / sc)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    f1 = rhs(x0 + h0 * f0)
    d2 = _rms((f1 - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, cfg.t_end / 100.0)


def integrate_dopri5(x0, rhs, cfg: SolverConfig, record=False) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) with PI step-size control and FSAL reuse.

    The error norm is the RMS over all state entries of
    |err| / (atol + rtol * max(|x|, |x_new|)); a step is accepted when the
    norm is at most 1. The last step is clipped to land exactly on T. NFE
    accounting: 2 startup evaluations (initial slope + step-size trial) plus
    6 per attempted step, i.e. nfe = 2 + 6 * (accepted + rejected).
    """
    x = np.asarray(x0, dtype=np.float64)
    nfe = 0

    def counted(state):
        nonlocal nfe
        nfe += 1
        if nfe > cfg.max_nfe:
            raise IntegrationError(f"evaluation budget max_nfe={cfg.max_nfe} exceeded")
        return rhs(state)

    k = [None] * 7
    k[0] = counted(x)
    h = _initial_step(x, k[0], counted, cfg)
    t = 0.0
    times = [0.0]
    states = [x]
    accepted = rejected = 0
    err_prev = 1.0

    while t < cfg.t_end:
        last = t + h >= cfg.t_end
        h_step = cfg.t_end - t if last else h
        if h_step < 1e-12 * cfg.t_end:
            raise IntegrationError(f"step size underflow at t={t}", step=accepted)
        for i in range(1, 7):
            xi = x + h_step * sum(a * ki for a, ki in zip(_DP_A[i - 1], k))
            k[i] = counted(xi)
        x_new = x + h_step * sum(b * ki for b, ki in zip(_DP_B5, k) if b)
        err_vec = h_step * sum(e * ki for e, ki in zip(_DP_ERR, k) if e)
        if not np.all(np.isfinite(x_new)):
            raise IntegrationError(f"non-finite state at t={t}", step=accepted)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = _rms(err_vec / scale)

        if err <= 1.0:
            t = cfg.t_end if last else t + h_step
            x = x_new
            k[0] = k[6]  # FSAL: stage 7 slope is next step's stage 1
            accepted += 1
            if record or t >= cfg.t_end:
                times.append(t)
                states.append(x)
            factor = _FAC_MAX if err == 0.0 else _SAFETY * err ** -_PI_ALPHA * err_prev ** _PI_BETA
            err_prev = max(err, 1e-10)
        else:
            rejected += 1
            factor = min(1.0, _SAFETY * err ** -_PI_ALPHA)
        h = h_step * min(_FAC_MAX, max(_FAC_MIN, factor))

    return Trajectory(
        times=np.asarray(times), states=states,
        nfe=nfe, accepted=accepted, rejected=rejected,
    )


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Long-format dump: one row per (time, node, channel)."""
    with open(path, "w") as fh:
        fh.write("time,node,channel,value\n")
        for t, x in zip(traj.times, traj.states):
            x2 = np.atleast_2d(x)
            for node in range(x2.shape[0]):
                for ch in range(x2.shape[1]):
                    fh.write(f"{t:.17g},{node},{ch},{x2[node, ch]:.17g}\n")


def stats_json(traj: Trajectory) -> str:
    return json.dumps(traj.stats())
