"""Pseudo-spectral solver for the perturbed MHD system on a periodic box.

Unknowns are velocity u and magnetic field b around the background field e2:

    u_t - mu d3^2 u - d2 b = P(b.grad b - u.grad u)
    b_t - eta (d2^2 + d3^2) b - d2 u = b.grad u - u.grad b

Coefficients are Fourier-series coefficients, ``rfftn(f) / N``, stored on the
half spectrum along axis 3. Quadratic terms are formed in physical space in
conservative form and dealiased with the 2/3 rule. The linear part is
propagated exactly, mode by mode, with the 2x2 kernel.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .kernel import PhysicalParams, Wavevector, kernel_triple

BLOWUP_FACTOR = 1e6
CFL_LIMIT = 0.5
CHECKPOINT_MAGIC = b"AMHD1"


class StabilityError(ValueError):
    """Time step above the advective limit."""


class BlowUpError(RuntimeError):
    """A monitored norm grew by more than BLOWUP_FACTOR."""


def fft_workers() -> int:
    env = os.environ.get("ANISOMHD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Grid:
    n1: int = 32
    n2: int = 32
    n3: int = 32
    L1: float = 2 * np.pi
    L2: float = 2 * np.pi
    L3: float = 2 * np.pi

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            n = getattr(self, name)
            if n <= 0 or n % 2:
                raise ValueError(f"{name} must be a positive even integer, got {n}")
        for name in ("L1", "L2", "L3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def cube(cls, n: int, length: float = 2 * np.pi) -> "Grid":
        return cls(n, n, n, length, length, length)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3 // 2 + 1)

    @property
    def size(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def volume(self) -> float:
        return self.L1 * self.L2 * self.L3

    @property
    def spacing(self) -> tuple[float, float, float]:
        return (self.L1 / self.n1, self.L2 / self.n2, self.L3 / self.n3)

    def integer_modes(self):
        k1 = np.fft.fftfreq(self.n1, 1.0 / self.n1)[:, None, None]
        k2 = np.fft.fftfreq(self.n2, 1.0 / self.n2)[None, :, None]
        k3 = np.fft.rfftfreq(self.n3, 1.0 / self.n3)[None, None, :]
        return k1, k2, k3

    def wavevectors(self):
        k1, k2, k3 = self.integer_modes()
        return (
            2 * np.pi / self.L1 * k1,
            2 * np.pi / self.L2 * k2,
            2 * np.pi / self.L3 * k3,
        )

    def dealias_mask(self) -> np.ndarray:
        k1, k2, k3 = self.integer_modes()
        return (
            (np.abs(k1) <= self.n1 / 3) & (np.abs(k2) <= self.n2 / 3) & (np.abs(k3) <= self.n3 / 3)
        )

    def half_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full spectrum."""
        w = np.full(self.n3 // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w[None, None, :], self.spectral_shape)

    def coordinates(self):
        return (
            (np.arange(self.n1) * self.L1 / self.n1)[:, None, None],
            (np.arange(self.n2) * self.L2 / self.n2)[None, :, None],
            (np.arange(self.n3) * self.L3 / self.n3)[None, None, :],
        )

    # transforms, normalized as Fourier-series coefficients
    def forward(self, f: np.ndarray) -> np.ndarray:
        axes = (-3, -2, -1)
        return sfft.rfftn(f, axes=axes, workers=fft_workers()) / self.size

    def inverse(self, f_hat: np.ndarray) -> np.ndarray:
        axes = (-3, -2, -1)
        return sfft.irfftn(f_hat * self.size, s=self.shape, axes=axes, workers=fft_workers())


@dataclass
class SpectralState:
    grid: Grid
    u_hat: np.ndarray
    b_hat: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        shape = (3,) + self.grid.spectral_shape
        self.u_hat = np.asarray(self.u_hat, dtype=complex).reshape(shape)
        self.b_hat = np.asarray(self.b_hat, dtype=complex).reshape(shape)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralState":
        shape = (3,) + grid.spectral_shape
        return cls(grid, np.zeros(shape, complex), np.zeros(shape, complex), 0.0)

    @classmethod
    def from_physical(cls, grid: Grid, u: np.ndarray, b: np.ndarray, time: float = 0.0) -> "SpectralState":
        return cls(grid, grid.forward(np.asarray(u, float)), grid.forward(np.asarray(b, float)), time)

    def physical(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.inverse(self.u_hat), self.grid.inverse(self.b_hat)

    def copy(self) -> "SpectralState":
        return SpectralState(self.grid, self.u_hat.copy(), self.b_hat.copy(), self.time)


# ---------------------------------------------------------------------------
# projections and nonlinear terms


def leray_project(v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """v - xi (xi . v) / |xi|^2 per mode; the zero mode is left as is."""
    x1, x2, x3 = grid.wavevectors()
    k2 = x1**2 + x2**2 + x3**2
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    dot = (x1 * v_hat[0] + x2 * v_hat[1] + x3 * v_hat[2]) * inv
    return np.stack([v_hat[0] - x1 * dot, v_hat[1] - x2 * dot, v_hat[2] - x3 * dot])


def divergence_residual(state: SpectralState) -> float:
    """max |xi . v_hat| over modes and both fields, relative to the largest coefficient."""
    x1, x2, x3 = state.grid.wavevectors()
    worst = 0.0
    scale = max(np.abs(state.u_hat).max(), np.abs(state.b_hat).max())
    if scale == 0:
        return 0.0
    for v in (state.u_hat, state.b_hat):
        worst = max(worst, float(np.abs(x1 * v[0] + x2 * v[1] + x3 * v[2]).max()))
    return worst / scale


_PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def _symmetric_products(grid: Grid, f: np.ndarray, g: np.ndarray | None = None) -> dict:
    """Spectra of f_i f_j (or f_i f_j - g_i g_j) for i <= j."""
    out = {}
    for i, j in _PAIRS:
        prod = f[i] * f[j]
        if g is not None:
            prod = prod - g[i] * g[j]
        out[i, j] = out[j, i] = grid.forward(prod)
    return out


def _max_speed(u: np.ndarray) -> float:
    return float(np.sqrt((u**2).sum(axis=0)).max())


def nonlinear_rhs(state: SpectralState, return_speed: bool = False):
    """(N1_hat, N2_hat) with N1 = P(b.grad b - u.grad u) and N2 = b.grad u - u.grad b."""
    grid = state.grid
    mask = grid.dealias_mask()
    u = grid.inverse(state.u_hat * mask)
    b = grid.inverse(state.b_hat * mask)
    x = grid.wavevectors()
    # b.grad b - u.grad u = -d_j (u_i u_j - b_i b_j)
    T = _symmetric_products(grid, u, b)
    n1 = np.stack([-1j * sum(x[j] * T[i, j] for j in range(3)) for i in range(3)])
    # b.grad u - u.grad b = d_j (b_j u_i - u_j b_i), an antisymmetric flux
    A = {}
    for i, j in ((0, 1), (0, 2), (1, 2)):
        A[i, j] = grid.forward(b[j] * u[i] - u[j] * b[i])
        A[j, i] = -A[i, j]
    n2 = np.stack([1j * sum(x[j] * A[i, j] for j in range(3) if j != i) for i in range(3)])
    n1 = leray_project(n1, grid) * mask
    n2 = n2 * mask
    if return_speed:
        return n1, n2, _max_speed(u)
    return n1, n2


def p1_component_spectrum(b_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """First component of P(b.grad b) from the xi1-split form of the projector.

    sum_k i xi_nu^2 |xi|^-2 xi_k (b_k b_1)^ - sum_k sum_{l=2,3} i xi_1 |xi|^-2 xi_k xi_l (b_k b_l)^
    """
    mask = grid.dealias_mask()
    b = grid.inverse(b_hat * mask)
    B = _symmetric_products(grid, b)
    x1, x2, x3 = x = grid.wavevectors()
    k2 = x1**2 + x2**2 + x3**2
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    nu2 = x2**2 + x3**2
    first = sum(x[k] * B[k, 0] for k in range(3))
    rest = sum(x[k] * x[l] * B[k, l] for k in range(3) for l in (1, 2))
    return 1j * inv * (nu2 * first - x1 * rest) * mask


def pressure_spectrum(state: SpectralState) -> np.ndarray:
    """|xi|^-2 times the transform of d_i u_j d_j u_i - d_i b_j d_j b_i; zero mode set to 0."""
    grid = state.grid
    mask = grid.dealias_mask()
    x = grid.wavevectors()

    def gradients(v_hat):
        return [[grid.inverse(1j * x[i] * v_hat[j] * mask) for j in range(3)] for i in range(3)]

    du = gradients(state.u_hat)
    db = gradients(state.b_hat)
    src = sum(du[i][j] * du[j][i] - db[i][j] * db[j][i] for i in range(3) for j in range(3))
    k2 = x[0] ** 2 + x[1] ** 2 + x[2] ** 2
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    return grid.forward(src) * inv * mask


# ---------------------------------------------------------------------------
# time stepping


_kernel_cache: dict = {}


def linear_factors(grid: Grid, params: PhysicalParams, t: float):
    """Kernel entries (K1, K2, K3) on the grid, cached per (grid, params, t)."""
    key = (grid, params, float(t))
    if key not in _kernel_cache:
        if len(_kernel_cache) > 16:
            _kernel_cache.clear()
        x1, x2, x3 = np.broadcast_arrays(*grid.wavevectors())
        K = kernel_triple(Wavevector(x1, x2, x3), params, t)
        _kernel_cache[key] = (K.k1, K.k2, K.k3)
    return _kernel_cache[key]


def propagate(u_hat, b_hat, factors):
    k1, k2, k3 = factors
    return k1 * u_hat + k2 * b_hat, k2 * u_hat + k3 * b_hat


def hermitian_fix(v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Enforce conjugate symmetry on the self-conjugate planes k3 = 0 and k3 = n3/2."""
    out = v_hat.copy()
    i1 = (-np.arange(grid.n1)) % grid.n1
    i2 = (-np.arange(grid.n2)) % grid.n2
    for plane in (0, grid.n3 // 2):
        p = out[..., plane]
        out[..., plane] = 0.5 * (p + np.conj(p[..., i1, :][..., :, i2]))
    return out


def _finish(u_hat, b_hat, grid):
    mask = grid.dealias_mask()
    u_hat = hermitian_fix(leray_project(u_hat, grid), grid) * mask
    b_hat = hermitian_fix(leray_project(b_hat, grid), grid) * mask
    u_hat[:, 0, 0, 0] = 0.0
    b_hat[:, 0, 0, 0] = 0.0
    return u_hat, b_hat


def step_if_rk2(state: SpectralState, dt: float, params: PhysicalParams, nonlinear: bool = True) -> SpectralState:
    """One integrating-factor midpoint step of size dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.grid
    full = linear_factors(grid, params, dt)
    half = linear_factors(grid, params, 0.5 * dt)
    if not nonlinear:
        u, b = propagate(state.u_hat, state.b_hat, full)
        u, b = _finish(u, b, grid)
        return SpectralState(grid, u, b, state.time + dt)
    n1, n2, speed = nonlinear_rhs(state, return_speed=True)
    if dt * speed > CFL_LIMIT * min(grid.spacing):
        raise StabilityError(
            f"dt={dt:g} exceeds the advective limit {CFL_LIMIT * min(grid.spacing) / speed:g}"
        )
    mu, mb = propagate(state.u_hat + 0.5 * dt * n1, state.b_hat + 0.5 * dt * n2, half)
    mid = SpectralState(grid, mu, mb, state.time + 0.5 * dt)
    m1, m2 = nonlinear_rhs(mid)
    lu, lb = propagate(state.u_hat, state.b_hat, full)
    cu, cb = propagate(m1, m2, half)
    u, b = _finish(lu + dt * cu, lb + dt * cb, grid)
    return SpectralState(grid, u, b, state.time + dt)


def integrate(state, params, dt, t_final, nonlinear=True, callback=None, monitor=None):
    """Advance to t_final with fixed steps; ``callback(state)`` is called after every step.

    ``monitor(state)`` returns a norm checked against BLOWUP_FACTOR times its initial value.
    """
    n_steps = int(round((t_final - state.time) / dt))
    if n_steps < 0 or abs(state.time + n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final - t0 must be a non-negative multiple of dt")
    ref = monitor(state) if monitor else None
    t0 = state.time
    for j in range(n_steps):
        state = step_if_rk2(state, dt, params, nonlinear)
        state.time = t0 + (j + 1) * dt
        if monitor:
            val = monitor(state)
            if not np.isfinite(val) or (ref > 0 and val > BLOWUP_FACTOR * ref):
                raise BlowUpError(f"norm {val:g} at t={state.time:g} exceeds {BLOWUP_FACTOR:g} x initial")
        if callback:
            callback(state)
    return state


# ---------------------------------------------------------------------------
# initial data and checkpoints


def init_random_smooth(grid: Grid, seed: int, amplitude: float, spectral_slope: float = 6.0) -> SpectralState:
    """Random solenoidal pair with spectrum ~ (1+|xi|)^-slope and H^3 norm ``amplitude``."""
    from .diagnostics import sobolev_norm

    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if amplitude == 0:
        return SpectralState.zeros(grid)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((6,) + grid.shape)
    spec = grid.forward(noise)
    x1, x2, x3 = grid.wavevectors()
    envelope = (1.0 + np.sqrt(x1**2 + x2**2 + x3**2)) ** (-spectral_slope)
    spec *= envelope
    u, b = _finish(spec[:3], spec[3:], grid)
    state = SpectralState(grid, u, b, 0.0)
    scale = amplitude / sobolev_norm(state, 3)
    return SpectralState(grid, u * scale, b * scale, 0.0)


@dataclass
class Checkpoint:
    state: SpectralState
    params: PhysicalParams = field(default_factory=PhysicalParams)


def full_spectrum(v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Expand half-spectrum coefficients to the full (n1, n2, n3) array by conjugate symmetry."""
    h = grid.n3 // 2 + 1
    full = np.empty(v_hat.shape[:-1] + (grid.n3,), dtype=complex)
    full[..., :h] = v_hat
    i1 = (-np.arange(grid.n1)) % grid.n1
    i2 = (-np.arange(grid.n2)) % grid.n2
    i3 = grid.n3 - np.arange(h, grid.n3)
    mirrored = v_hat[..., i1, :, :][..., :, i2, :][..., i3]
    full[..., h:] = np.conj(mirrored)
    return full


_HEADER = struct.Struct("<5s3q6d")


def write_checkpoint(path, state: SpectralState, params: PhysicalParams) -> None:
    """Header then u1, u2, u3, b1, b2, b3 as full complex spectra, C order, re/im interleaved."""
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(CHECKPOINT_MAGIC, g.n1, g.n2, g.n3, g.L1, g.L2, g.L3,
                         params.mu, params.eta, state.time)
        )
        for v in (state.u_hat, state.b_hat):
            full = full_spectrum(v, g)
            fh.write(np.ascontiguousarray(full, dtype="<c16").tobytes())


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, n1, n2, n3, L1, L2, L3, mu, eta, time = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    grid = Grid(n1, n2, n3, L1, L2, L3)
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape((6, n1, n2, n3))
    half = data[..., : n3 // 2 + 1].astype(complex)
    return Checkpoint(SpectralState(grid, half[:3], half[3:], time), PhysicalParams(mu, eta))
