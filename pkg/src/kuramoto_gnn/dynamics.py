"""Right-hand sides for the oscillator and diffusion node dynamics.

All states are n x d real matrices; nothing is wrapped modulo 2*pi, because
the classifier treats the state as a feature representation, not an angle.
The sin interaction acts channel by channel, and all channels share one
coupling matrix.

Kinds:
    kuramoto            dx_i = omega_i + K * sum_j a_ij sin(x_j - x_i)
    kuramoto_identical  dx_i = K * sum_j a_ij sin(x_j - x_i)
    grand_linear        dX   = (A - I) X
    grand_modified      dX   = alpha (A - I) X + beta X(0)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

KINDS = ("kuramoto", "kuramoto_identical", "grand_linear", "grand_modified")


@dataclass
class DynamicsSpec:
    """Bundle of everything an RHS needs besides the state itself."""

    kind: str
    coupling: csr_matrix
    strength: float = 1.0
    omega: np.ndarray | None = None
    alpha: float = 1.0
    beta: float = 0.0
    x0: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == "kuramoto" and self.omega is None:
            raise ValueError("kuramoto dynamics needs natural frequencies")
        if self.kind == "grand_modified" and self.x0 is None:
            raise ValueError("grand_modified dynamics needs the initial state")


def sin_coupling(a, x):
    """sum_j a_ij sin(x_j - x_i), evaluated per channel.

    Uses sin(x_j - x_i) = sin(x_j) cos(x_i) - cos(x_j) sin(x_i) so the sum
    reduces to two sparse matrix products.
    """
    c = np.cos(x)
    s = np.sin(x)
    return c * (a @ s) - s * (a @ c)


def _check_shape(x, spec):
    if spec.omega is not None and spec.omega.shape != x.shape:
        raise ValueError("natural frequency matrix must match the state shape")
    if x.shape[0] != spec.coupling.shape[0]:
        raise ValueError("state row count differs from coupling size")


def rhs_kuramoto(x, spec: DynamicsSpec):
    _check_shape(x, spec)
    return spec.omega + spec.strength * sin_coupling(spec.coupling, x)


def rhs_identical(x, spec: DynamicsSpec):
    _check_shape(x, spec)
    return spec.strength * sin_coupling(spec.coupling, x)


def rhs_kuramoto_local_order(x, spec: DynamicsSpec):
    """Kuramoto RHS through each node's local mean-field amplitude and phase.

    For node k the complex sum r_k e^{i phi_k} = sum_j a_kj e^{i x_j} turns
    the interaction into r_k sin(phi_k - x_k); algebraically identical to
    rhs_kuramoto, kept as an independent formulation for cross-checks.
    """
    _check_shape(x, spec)
    a = spec.coupling
    cs = a @ np.cos(x)
    sn = a @ np.sin(x)
    r = np.hypot(cs, sn)
    phi = np.arctan2(sn, cs)
    out = spec.strength * r * np.sin(phi - x)
    if spec.omega is not None:
        out = spec.omega + out
    return out


def rhs_grand_linear(x, spec: DynamicsSpec):
    _check_shape(x, spec)
    return spec.coupling @ x - x


def rhs_grand_modified(x, spec: DynamicsSpec):
    _check_shape(x, spec)
    if spec.x0 is None:
        raise ValueError("grand_modified dynamics needs the initial state")
    return spec.alpha * (spec.coupling @ x - x) + spec.beta * spec.x0


_RHS = {
    "kuramoto": rhs_kuramoto,
    "kuramoto_identical": rhs_identical,
    "grand_linear": rhs_grand_linear,
    "grand_modified": rhs_grand_modified,
}


def make_rhs(spec: DynamicsSpec):
    """Close the spec over its RHS so solvers see a plain state -> derivative map."""
    fn = _RHS[spec.kind]
    return lambda x: fn(x, spec)


def energy(x, a) -> np.ndarray:
    """Interaction energy sum_{(i,j) in support} a_ij (1 - cos(x_i - x_j)), per channel.

    Nonnegative; zero exactly when all coupled phases in a channel agree
    modulo 2*pi. Non-increasing along identical-frequency trajectories when
    the weights are symmetric.
    """
    a = a.tocoo()
    x = np.atleast_2d(np.asarray(x, dtype=np.float64).T).T
    diff = x[a.row] - x[a.col]
    return np.asarray((a.data[:, None] * (1.0 - np.cos(diff))).sum(axis=0))


def energy_gradient_residual(x, spec: DynamicsSpec, h=1e-5) -> float:
    """Max abs difference between finite-difference grad(U) and -2 dX/K.

    energy() sums over the stored directed support, so a symmetric pair
    (i, j)/(j, i) contributes twice and the descent identity carries a
    factor two relative to the unordered-pair form: grad U = -2 dX/K. The
    identity requires symmetric weights; for asymmetric couplings the
    returned residual is a report, not an invariant. Central differences
    with step h, channel by channel.
    """
    if spec.kind != "kuramoto_identical":
        raise ValueError("gradient identity applies to identical-frequency dynamics")
    x = np.asarray(x, dtype=np.float64)
    rhs = rhs_identical(x, spec)
    worst = 0.0
    for ch in range(x.shape[1]):
        for i in range(x.shape[0]):
            bumped = x.copy()
            bumped[i, ch] += h
            up = energy(bumped, spec.coupling)[ch]
            bumped[i, ch] -= 2 * h
            down = energy(bumped, spec.coupling)[ch]
            grad = (up - down) / (2 * h)
            worst = max(worst, abs(grad + 2.0 * rhs[i, ch] / spec.strength))
    return worst
