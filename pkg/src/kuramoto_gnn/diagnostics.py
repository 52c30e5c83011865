"""Synchronization and over-smoothing diagnostics.

Over-smoothing of node representations is detected as phase synchronization:
pairwise row distances shrinking exponentially toward zero. The stable regime
keeps states apart while their time derivatives agree (frequency
synchronization), which the residual below measures directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .dynamics import DynamicsSpec, make_rhs
from .solvers import Trajectory

DECAY_FLOOR = 1e-8
OVERSMOOTH_DIST_TOL = 1e-6
OVERSMOOTH_RATE_TOL = -0.01


@dataclass
class SyncReport:
    """Per-channel order parameters plus pairwise-distance summaries."""

    order_r: np.ndarray
    order_phase: np.ndarray
    max_pairwise: float
    mean_pairwise: float
    freq_residual: float | None = None
    decay_rate: float | None = None


def order_parameter(x, channel=0):
    """Magnitude and mean phase of (1/N) sum_j exp(i x_j) for one channel.

    r lies in [0, 1]: 1 when all phases coincide, 0 when they spread
    uniformly around the circle.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64).T).T
    z = np.exp(1j * x[:, channel]).mean()
    return float(np.abs(z)), float(np.angle(z))


def order_parameter_all(x):
    """order_parameter for every channel; returns (r, phi) arrays."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64).T).T
    z = np.exp(1j * x).mean(axis=0)
    return np.abs(z), np.angle(z)


def pairwise_distance_stats(x):
    """(max, mean) Euclidean distance over all unordered node pairs."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64).T).T
    if x.shape[0] < 2:
        raise ValueError("pairwise statistics need at least two nodes")
    d = pdist(x)
    return float(d.max()), float(d.mean())


def frequency_sync_residual(x_final, spec: DynamicsSpec) -> float:
    """Max pairwise distance between node derivatives at the given state.

    Zero means the oscillators move as one (frequency synchronization), even
    if their states remain distinct.
    """
    dx = make_rhs(spec)(np.asarray(x_final, dtype=np.float64))
    if dx.shape[0] < 2:
        return 0.0
    return float(pdist(np.atleast_2d(dx.T).T).max())


def max_pairwise_series(traj: Trajectory) -> np.ndarray:
    return np.array([pairwise_distance_stats(x)[0] for x in traj.states])


def fit_decay_rate(traj: Trajectory, floor=DECAY_FLOOR) -> float:
    """Least-squares slope of log(max pairwise distance) versus time.

    Only recorded states with distance above the floor enter the fit; a
    negative slope indicates exponential contraction. Raises when fewer than
    two states sit above the floor or too few states were recorded.
    """
    if len(traj.states) < 10:
        raise ValueError("need a recorded trajectory with at least 10 states")
    series = max_pairwise_series(traj)
    keep = series > floor
    if keep.sum() < 2:
        raise ValueError("degenerate window: distances below floor everywhere")
    slope = np.polyfit(np.asarray(traj.times)[keep], np.log(series[keep]), 1)[0]
    return float(slope)


def detect_oversmoothing(traj: Trajectory, dist_tol=OVERSMOOTH_DIST_TOL,
                         rate_tol=OVERSMOOTH_RATE_TOL) -> bool:
    """Exponential collapse test: tiny final spread AND a negative fitted rate."""
    final_max = pairwise_distance_stats(traj.final_state)[0]
    if final_max >= dist_tol:
        return False
    try:
        rate = fit_decay_rate(traj)
    except ValueError:
        # distances vanished before any fit window existed: collapsed hard
        return True
    return rate < rate_tol


def sync_report(x, spec: DynamicsSpec | None = None,
                traj: Trajectory | None = None) -> SyncReport:
    r, phi = order_parameter_all(x)
    mx, mn = pairwise_distance_stats(x)
    freq = frequency_sync_residual(x, spec) if spec is not None else None
    rate = None
    if traj is not None and len(traj.states) >= 10:
        try:
            rate = fit_decay_rate(traj)
        except ValueError:
            rate = None
    return SyncReport(
        order_r=r, order_phase=phi, max_pairwise=mx, mean_pairwise=mn,
        freq_residual=freq, decay_rate=rate,
    )


def sync_timeseries_rows(traj: Trajectory):
    """One (time, channel) row per recorded state: r, phi, max/mean distance."""
    rows = []
    for t, x in zip(traj.times, traj.states):
        r, phi = order_parameter_all(x)
        mx, mn = pairwise_distance_stats(x)
        for ch in range(len(r)):
            rows.append((float(t), ch, float(r[ch]), float(phi[ch]), mx, mn))
    return rows


def write_sync_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("time,channel,order_r,order_phase,max_pairwise,mean_pairwise\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
