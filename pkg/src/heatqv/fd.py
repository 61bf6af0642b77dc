"""Finite-difference integrator for the stochastic heat equation.

Crank-Nicolson in time, second differences in space, on ``[-L, L]`` with
zero Dirichlet boundary. Each space-time cell receives an independent
``N(0, 1)`` draw scaled by ``sqrt(dt / dx)``, the cell average of white
noise over a ``dt x dx`` cell multiplied by ``dt``.

Because the scheme is linear with constant coefficients, the orthonormal
sine basis diagonalizes it. Mode ``k`` evolves as the scalar recursion

    a_k <- g_k a_k + c_k xi,   g_k = (1 + dt mu_k / 2) / (1 - dt mu_k / 2),
                               c_k = sqrt(dt / dx) / (1 - dt mu_k / 2),

with ``mu_k = -(2 / dx^2) sin^2(pi k / 2N)`` the eigenvalues of half the
discrete Laplacian. ``method="modes"`` advances every mode exactly from
one output time to the next (the sum of ``m`` steps is a single Gaussian
draw), which reproduces the law of the stepped scheme at the output
times at a fraction of the cost. ``method="step"`` performs the literal
time stepping and is meant for small grids.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from .errors import ConfigError, DomainError
from .sampler import FieldGrid, FieldSample, replicate_rng

__all__ = ["FDLattice", "fd_lattice", "fd_integrate", "fd_covariance"]


class FDLattice:
    """Truncated lattice and output index maps for one :class:`FieldGrid`.

    Attributes
    ----------
    L : float
        Half-width of the truncated domain.
    N : int
        Number of cells, ``2L / dx``; interior nodes are ``1..N-1``.
    steps : ndarray
        Output times as integer multiples of ``dt``.
    nodes : ndarray
        Lattice node index of each output site.
    """

    def __init__(self, grid: FieldGrid, L: float | None = None, check_stability=True):
        dt, dx = grid.dt, grid.dx
        if not (dt > 0 and dx > 0):
            raise ConfigError("finite-difference grid needs positive nominal dt and dx")
        if check_stability and dt > dx * dx * (1 + 1e-12):
            raise ConfigError(f"stability guard: dt={dt} exceeds dx^2={dx * dx}")
        t_max = float(grid.times[-1])
        x_abs = float(np.max(np.abs(grid.spaces)))
        if L is None:
            L = math.ceil((x_abs + 8.0 * math.sqrt(t_max)) / dx) * dx
        N = int(round(2.0 * L / dx))
        if not math.isclose(N * dx, 2.0 * L, rel_tol=1e-9):
            raise ConfigError(f"2L={2 * L} is not a multiple of dx={dx}")
        steps = np.rint(grid.times / dt).astype(np.int64)
        if not np.allclose(steps * dt, grid.times, rtol=1e-9, atol=1e-12):
            raise ConfigError("output times must be multiples of dt")
        nodes = np.rint((grid.spaces + L) / dx).astype(np.int64)
        if not np.allclose(nodes * dx - L, grid.spaces, rtol=0, atol=1e-9 * dx):
            raise ConfigError("output sites must be lattice nodes")
        if np.any(nodes <= 0) or np.any(nodes >= N):
            raise ConfigError("output sites must lie strictly inside (-L, L)")
        self.grid, self.L, self.N, self.dt, self.dx = grid, float(L), N, dt, dx
        self.steps, self.nodes = steps, nodes
        k = np.arange(1, N)
        mu = -(2.0 / dx ** 2) * np.sin(np.pi * k / (2.0 * N)) ** 2
        den = 1.0 - 0.5 * dt * mu
        self.g = (1.0 + 0.5 * dt * mu) / den
        self.c = math.sqrt(dt / dx) / den
        self.log_abs_g = np.log(np.abs(self.g))
        # sine basis evaluated at the output nodes, shape (n_sites, N - 1)
        self.phi = math.sqrt(2.0 / N) * np.sin(np.pi * np.outer(nodes, k) / N)

    def gain(self, m):
        """``g**m`` per mode (sign kept for odd ``m``)."""
        return np.sign(self.g) ** (m % 2) * np.exp(m * self.log_abs_g)

    def accumulated_var(self, m):
        """Variance of ``sum_{i<m} g^i c xi_i`` per mode."""
        if m == 0:
            return np.zeros_like(self.g)
        return self.c ** 2 * np.expm1(2 * m * self.log_abs_g) / np.expm1(2 * self.log_abs_g)


def fd_lattice(grid: FieldGrid, L: float | None = None) -> FDLattice:
    """Validate ``grid`` for the integrator and precompute mode data."""
    return FDLattice(grid, L)


def _modes_block(lat: FDLattice, seed, ks, noise_scale):
    n_rep = len(ks)
    M = lat.N - 1
    steps = lat.steps
    out = np.zeros((n_rep, steps.size, lat.nodes.size))
    rngs = [replicate_rng(seed, k) for k in ks]
    a = np.zeros((n_rep, M))
    prev = 0
    for i, n_i in enumerate(steps):
        m = int(n_i - prev)
        if m > 0:
            sd = np.sqrt(lat.accumulated_var(m)) * noise_scale
            xi = np.stack([r.standard_normal(M) for r in rngs])
            a = a * lat.gain(m) + xi * sd
            prev = int(n_i)
        # per-replicate products keep each row independent of the block size
        out[:, i, :] = [lat.phi @ row for row in a]
    return out


def _step_block(lat: FDLattice, seed, ks, noise_scale):
    N, dt, dx = lat.N, lat.dt, lat.dx
    M = N - 1
    r = 0.5 * dt / dx ** 2  # dt/2 times the coefficient 1/2 of the Laplacian
    ab = np.zeros((3, M))
    ab[0, 1:] = -0.5 * r
    ab[1, :] = 1.0 + r
    ab[2, :-1] = -0.5 * r
    amp = math.sqrt(dt / dx) * noise_scale
    idx = lat.nodes - 1
    out = np.zeros((len(ks), lat.steps.size, idx.size))
    for row, k in enumerate(ks):
        rng = replicate_rng(seed, k)
        u = np.zeros(M)
        n_done = 0
        for i, n_i in enumerate(lat.steps):
            while n_done < n_i:
                rhs = (1.0 - r) * u
                rhs[1:] += 0.5 * r * u[:-1]
                rhs[:-1] += 0.5 * r * u[1:]
                rhs += amp * rng.standard_normal(M)
                u = linalg.solve_banded((1, 1), ab, rhs)
                n_done += 1
            out[row, i, :] = u[idx]
    return out


def fd_integrate(grid: FieldGrid, n: int, seed: int, *, L: float | None = None,
                 method: str = "modes", noise_scale: float = 1.0,
                 first: int = 0, block: int = 64) -> list[FieldSample]:
    """Finite-difference samples of ``u`` on ``grid``.

    Parameters
    ----------
    grid : FieldGrid
        ``grid.dt`` is the time step and ``grid.dx`` the lattice spacing;
        output times must be multiples of ``dt`` and output sites lattice
        nodes of ``[-L, L]``.
    n, seed : int
        Replicate count and master seed; replicate ``k`` uses its own stream.
    L : float, optional
        Domain half-width, default ``max|x| + 8 sqrt(t_max)`` rounded up
        to the lattice.
    method : {"modes", "step"}
    noise_scale : float
        Multiplier on the noise; ``0`` gives the zero field.
    first : int
        Index of the first replicate.

    Raises
    ------
    ConfigError
        If ``dt > dx^2`` or the grid is not compatible with the lattice.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    if n == 0:
        return []
    lat = FDLattice(grid, L)
    run = {"modes": _modes_block, "step": _step_block}.get(method)
    if run is None:
        raise DomainError(f"unknown method {method!r}")
    samples = []
    for b0 in range(first, first + n, block):
        ks = list(range(b0, min(first + n, b0 + block)))
        vals = run(lat, seed, ks, noise_scale)
        samples += [FieldSample(v, seed, grid, k) for v, k in zip(vals, ks)]
    return samples


def fd_covariance(grid: FieldGrid, L: float | None = None,
                  method: str = "modes") -> np.ndarray:
    """Exact covariance of the scheme's output, points in row-major order.

    ``method="modes"`` sums the per-mode covariances; ``method="lyapunov"``
    propagates the full covariance matrix ``C <- A C A^T + Q`` step by
    step (small lattices only) as an independent check.
    """
    lat = FDLattice(grid, L)
    nt, nx = grid.shape
    if method == "modes":
        var = np.stack([lat.accumulated_var(int(m)) for m in lat.steps])
        out = np.zeros((nt, nx, nt, nx))
        for i in range(nt):
            for j in range(i + 1):
                w = var[j] * lat.gain(int(lat.steps[i] - lat.steps[j]))
                blk = (lat.phi * w) @ lat.phi.T
                out[i, :, j, :] = blk
                out[j, :, i, :] = blk.T
        return out.reshape(nt * nx, nt * nx)
    if method != "lyapunov":
        raise DomainError(f"unknown method {method!r}")
    M = lat.N - 1
    r = 0.5 * lat.dt / lat.dx ** 2
    T = np.diag(np.full(M, -1.0)) + np.diag(np.full(M - 1, 0.5), 1) + np.diag(np.full(M - 1, 0.5), -1)
    Im = np.eye(M)
    lhs_inv = np.linalg.inv(Im - r * T)
    A = lhs_inv @ (Im + r * T)
    Q = (lat.dt / lat.dx) * lhs_inv @ lhs_inv.T
    idx = lat.nodes - 1
    # joint covariance of the stacked state at all output times
    states = {}
    C = np.zeros((M, M))
    n_done = 0
    for n_i in lat.steps:
        while n_done < n_i:
            C = A @ C @ A.T + Q
            n_done += 1
        states[int(n_i)] = C.copy()
    out = np.zeros((nt, nx, nt, nx))
    for i in range(nt):
        for j in range(i + 1):
            prop = np.linalg.matrix_power(A, int(lat.steps[i] - lat.steps[j]))
            blk = (prop @ states[int(lat.steps[j])])[np.ix_(idx, idx)]
            out[i, :, j, :] = blk
            out[j, :, i, :] = blk.T
    return out.reshape(nt * nx, nt * nx)
