"""Discrete orthogonal convolution (DOC) kernel diagnostics.

The DOC kernels are the right inverse of the two-step difference kernels
under discrete convolution: convolving one family with the other yields the
Kronecker delta.  They exist for any positive step ratios, are strictly
positive, and sum to less than one; the derived decay factors quantify how
fast starting errors fade along the integration.  None of this machinery is
needed to run the integrators; it is an executable check of the properties
that make the schemes mesh-robust, exercised by the ``doc-report`` command.

Kernels here are indexed by offset: ``theta[m]`` is the kernel at offset
``m = n - j`` pairing level ``j`` with the current level ``n``, for
``j = n, n-1, ..., 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .schemes import bdf2_kernels


def _check_ratios(ratios) -> np.ndarray:
    r = np.asarray(ratios, dtype=np.float64)
    if r.ndim != 1 or r.size < 1:
        raise ParameterError("need ratios r_2..r_n (at least one entry)")
    if not np.all(r > 0.0):
        raise ParameterError("all step ratios must be positive")
    return r


@dataclass(frozen=True)
class DocKernels:
    """Kernel sequence for one surface level n, with its source ratios."""

    n: int
    theta: np.ndarray          # theta[m] at offset m = n - j, j = n..2
    source_ratios: np.ndarray

    def total(self) -> float:
        return float(self.theta.sum())


def doc_recursive(ratios) -> DocKernels:
    """Kernels via the inverse recursion against the two-step kernels.

    Offset zero is ``1/d0`` at the surface level; each deeper offset is
    obtained by cancelling the lag-one kernel of the level above.  The
    general recursion sums over all deeper offsets, but kernels at lag two
    and beyond vanish, so only the adjacent term survives.
    """
    r = _check_ratios(ratios)
    n = r.size + 1  # ratios are r_2 .. r_n
    d0 = np.array([bdf2_kernels(rk).d0 for rk in r])
    d1 = np.array([bdf2_kernels(rk).d1 for rk in r])
    theta = np.empty(n - 1)
    theta[0] = 1.0 / d0[n - 2]
    for j in range(n - 1, 1, -1):
        # theta at offset n-j, from the offset-(n-j-1) kernel at level j+1
        m = n - j
        theta[m] = -theta[m - 1] * d1[j - 1] / d0[j - 2]
    return DocKernels(n, theta, r)


def doc_explicit(ratios) -> DocKernels:
    """Kernels via the closed-form product ``(1/d0_j) prod r_i/(1+2 r_i)``.

    Every factor lies in (0, 1/2), so the kernels are strictly positive and
    decay at least geometrically with the offset.
    """
    r = _check_ratios(ratios)
    n = r.size + 1
    d0 = (1.0 + 2.0 * r) / (1.0 + r)
    rho = r / (1.0 + 2.0 * r)
    theta = np.empty(n - 1)
    prod = 1.0
    for j in range(n, 1, -1):
        theta[n - j] = prod / d0[j - 2]
        if j >= 3:
            prod *= rho[j - 2]
    return DocKernels(n, theta, r)


def kernel_sum_expected(ratios) -> float:
    """Closed form of the kernel sum: ``1 - prod r_i/(1+2 r_i)`` (< 1)."""
    r = _check_ratios(ratios)
    return 1.0 - float(np.prod(r / (1.0 + 2.0 * r)))


def orthogonality_residual(ratios) -> float:
    """Worst deviation of both convolution identities from the delta.

    Checks ``sum_i theta_{n-i} d_{i-j} = delta_{nj}`` and its mirror with
    the roles of the two kernel families swapped, over all 2 <= j <= n.
    Because kernels beyond lag one vanish, each sum has at most two
    surviving terms.
    """
    r = _check_ratios(ratios)
    n = r.size + 1
    d0 = (1.0 + 2.0 * r) / (1.0 + r)
    d1 = -r / (1.0 + r)
    theta_n = doc_explicit(r).theta
    worst = 0.0
    # forward identity at surface level n
    for j in range(2, n + 1):
        s = theta_n[n - j] * d0[j - 2]
        if j + 1 <= n:
            s += theta_n[n - j - 1] * d1[j - 1]
        target = 1.0 if j == n else 0.0
        worst = max(worst, abs(s - target))
    # mirrored identity needs the kernels one level down as well
    if n >= 3:
        theta_nm1 = doc_explicit(r[:-1]).theta
        for j in range(2, n + 1):
            s = d0[n - 2] * theta_n[n - j]
            if j <= n - 1:
                s += d1[n - 2] * theta_nm1[n - 1 - j]
            target = 1.0 if j == n else 0.0
            worst = max(worst, abs(s - target))
    return worst


@dataclass(frozen=True)
class SigmaFactors:
    """Decay factors per level with their theoretical envelopes.

    ``sigma2[k]`` etc. hold the level-(k+2) values for k = 0..n-2; the
    bounds arrays hold ``2**(1-n)``, ``2**(1-n) n`` and ``2**(-n) n**2``.
    """

    levels: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray
    sigma4: np.ndarray

    @property
    def bound2(self) -> np.ndarray:
        return 2.0 ** (1.0 - self.levels)

    @property
    def bound3(self) -> np.ndarray:
        return 2.0 ** (1.0 - self.levels) * self.levels

    @property
    def bound4(self) -> np.ndarray:
        return 2.0 ** (-self.levels) * self.levels**2

    def within_bounds(self) -> bool:
        return bool(
            np.all(self.sigma2 <= self.bound2)
            and np.all(self.sigma3 <= self.bound3)
            and np.all(self.sigma4 <= self.bound4)
        )


def sigma_factors(ratios) -> SigmaFactors:
    """Decay factors for every prefix level 2..n.

    The first factor is the running product of ``r/(1+2r)``; the higher two
    are kernel-weighted sums of the lower one over levels 2..m.  The kernel
    weights of consecutive prefixes differ by one product factor, so they
    are updated incrementally instead of being rebuilt per level.
    """
    r = _check_ratios(ratios)
    n = r.size + 1
    rho = r / (1.0 + 2.0 * r)
    d0 = (1.0 + 2.0 * r) / (1.0 + r)
    sigma2 = np.cumprod(rho)
    sigma3 = np.empty(n - 1)
    sigma4 = np.empty(n - 1)
    # w[i-2] = kernel of prefix level m at offset m-i (levels i = 2..m)
    w = np.empty(n - 1)
    for m in range(2, n + 1):
        k = m - 2
        if k > 0:
            w[:k] *= rho[k]
        w[k] = 1.0 / d0[k]
        sigma3[k] = w[: k + 1] @ sigma2[: k + 1]
        sigma4[k] = w[: k + 1] @ sigma3[: k + 1]
    levels = np.arange(2, n + 1, dtype=np.float64)
    return SigmaFactors(levels, sigma2, sigma3, sigma4)


def sigma3_closed_form(ratios) -> np.ndarray:
    """Cross-check: ``sigma3^n = sigma2^n * sum_i 1/d0_i`` per prefix."""
    r = _check_ratios(ratios)
    rho = r / (1.0 + 2.0 * r)
    inv_d0 = (1.0 + r) / (1.0 + 2.0 * r)
    return np.cumprod(rho) * np.cumsum(inv_d0)


def sigma4_closed_form(ratios) -> np.ndarray:
    """Cross-check: ``sigma4^n = sigma2^n * sum_k sum_{i>=k} 1/(d0_i d0_k)``."""
    r = _check_ratios(ratios)
    rho = r / (1.0 + 2.0 * r)
    inv_d0 = (1.0 + r) / (1.0 + 2.0 * r)
    prefix = np.cumsum(inv_d0)
    n = r.size + 1
    out = np.empty(n - 1)
    for m in range(2, n + 1):
        k = m - 2
        tail = prefix[k] - np.concatenate(([0.0], prefix[:k]))
        out[k] = float(np.sum(inv_d0[: k + 1] * tail))
    return np.cumprod(rho) * out


def derivative_error_study(problem, mesh_builder, n_values, chain="dc3",
                           starters=("bdf1", "rk2")):
    """Difference-quotient errors of the cascade across a mesh refinement.

    For each N the cascade is integrated and the largest error difference
    quotient ``(e^k - e^{k-1}) / tau_k`` over all levels is recorded per
    stage (max norm); orders are fitted between consecutive rows from the
    recorded maximum steps.  Returns a list of dicts with keys ``n``,
    ``tau``, ``values``, ``orders``.
    """
    from .engine import exact_trajectory, integrate  # cycle-free at runtime

    rows = []
    for N in n_values:
        mesh = mesh_builder(N)
        histories = integrate(problem, mesh, chain, starters)
        exact = exact_trajectory(problem, mesh)
        values = {}
        for tag, hist in histories.items():
            err = exact - hist.values
            dq = (err[1:] - err[:-1]) / mesh.steps[1:, None]
            values[tag] = float(np.max(np.abs(dq)))
        rows.append({"n": N, "tau": mesh.tau_max, "values": values, "orders": {}})
    for prev, cur in zip(rows, rows[1:]):
        for tag, v in cur["values"].items():
            e0, e1 = prev["values"][tag], v
            if e0 > 0 and e1 > 0:
                cur["orders"][tag] = float(
                    np.log(e0 / e1) / np.log(prev["tau"] / cur["tau"])
                )
    return rows
