"""Dense complex linear algebra and integration kernels for small matrices.

Everything here works on numpy arrays and is written for N <= 8. The
eigensolver is a cyclic complex Jacobi iteration that is vectorized over a
leading batch axis, so a stack of 10^5 two-by-two generators is diagonalized
with a few dozen array operations instead of a Python loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
MAX_DIM = 64


class NumericsError(ValueError):
    """Raised when an input violates a kernel precondition."""


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors (as columns)."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    def vector(self, n: int) -> np.ndarray:
        """Eigenvector of the n-th value (0-based)."""
        return self.vectors[..., :, n]


def hermitian_asymmetry(h: np.ndarray) -> float:
    h = np.asarray(h)
    return float(np.max(np.abs(h - np.conj(np.swapaxes(h, -1, -2))), initial=0.0))


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    eye = np.eye(u.shape[-1])
    err = np.abs(np.conj(np.swapaxes(u, -1, -2)) @ u - eye)
    return bool(np.max(err, initial=0.0) < tol)


def _jacobi_sweeps(a: np.ndarray, tol: float, max_sweeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic complex Jacobi on a (B, n, n) Hermitian stack, in place on a copy."""
    a = a.astype(np.complex128, copy=True)
    b, n, _ = a.shape
    v = np.broadcast_to(np.eye(n, dtype=np.complex128), (b, n, n)).copy()
    scale = np.maximum(np.max(np.abs(a), axis=(1, 2)), 1e-300)
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    for _ in range(max_sweeps):
        off_diag = a - np.einsum("bii->bi", a)[:, :, None] * np.eye(n)
        off = np.max(np.abs(off_diag), axis=(1, 2))
        if np.all(off <= tol * scale):
            break
        for p, q in pairs:
            g = a[:, p, q]
            mag = np.abs(g)
            active = mag > 1e-300
            if not np.any(active):
                continue
            phase = np.where(active, g / np.where(active, mag, 1.0), 1.0)
            app = a[:, p, p].real
            aqq = a[:, q, q].real
            safe = np.where(active, mag, 1.0)
            theta = (aqq - app) / (2.0 * safe)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # U = diag(1, conj(phase)) @ [[c, s], [-s, c]] restricted to (p, q)
            u_pp = c
            u_pq = s
            u_qp = -s * np.conj(phase)
            u_qq = c * np.conj(phase)
            col_p = a[:, :, p].copy()
            col_q = a[:, :, q]
            a[:, :, p] = col_p * u_pp[:, None] + col_q * u_qp[:, None]
            a[:, :, q] = col_p * u_pq[:, None] + col_q * u_qq[:, None]
            row_p = a[:, p, :].copy()
            row_q = a[:, q, :]
            a[:, p, :] = row_p * np.conj(u_pp)[:, None] + row_q * np.conj(u_qp)[:, None]
            a[:, q, :] = row_p * np.conj(u_pq)[:, None] + row_q * np.conj(u_qq)[:, None]
            a[:, p, q] = 0.0
            a[:, q, p] = 0.0
            vp = v[:, :, p].copy()
            vq = v[:, :, q]
            v[:, :, p] = vp * u_pp[:, None] + vq * u_qp[:, None]
            v[:, :, q] = vp * u_pq[:, None] + vq * u_qq[:, None]
    return np.diagonal(a, axis1=1, axis2=2).real.copy(), v


def _fix_phases(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Rotate each column so its first non-negligible component is real positive."""
    mags = np.abs(vectors)
    first = np.argmax(mags > tol, axis=-2)
    lead = np.take_along_axis(vectors, first[..., None, :], axis=-2)
    lead_mag = np.abs(lead)
    phase = np.where(lead_mag > 0, lead / np.where(lead_mag > 0, lead_mag, 1.0), 1.0)
    return vectors / phase


def eig_hermitian_batch(h: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> EigenSystem:
    """Diagonalize a stack of Hermitian matrices of shape (..., n, n).

    Returns values ascending along the last axis and vectors as columns. Each
    eigenvector is phase-fixed so that its first non-negligible component is
    real and positive; exact ties are broken by that normalized vector.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise NumericsError(f"expected square matrices, got shape {h.shape}")
    n = h.shape[-1]
    if n > MAX_DIM:
        raise NumericsError(f"dimension {n} exceeds {MAX_DIM}")
    asym = hermitian_asymmetry(h)
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if asym > HERMITIAN_TOL * scale:
        raise NumericsError(f"matrix is not Hermitian: max|H - H^dagger| = {asym:.3e}")
    lead_shape = h.shape[:-2]
    flat = h.reshape(-1, n, n)
    flat = 0.5 * (flat + np.conj(np.swapaxes(flat, -1, -2)))
    if n == 1:
        vals = flat[:, 0, 0].real[:, None].copy()
        vecs = np.ones_like(flat)
    else:
        vals, vecs = _jacobi_sweeps(flat, tol, max_sweeps)
    vecs = _fix_phases(vecs)
    # deterministic order: by value, ties broken lexicographically on the fixed vector
    keys = [vecs[:, k, :].imag for k in range(n - 1, -1, -1)]
    keys += [vecs[:, k, :].real for k in range(n - 1, -1, -1)]
    rounded = np.round(vals / np.maximum(np.max(np.abs(vals), axis=1, keepdims=True), 1e-300), 12)
    order = np.lexsort(keys + [rounded], axis=-1)
    vals = np.take_along_axis(vals, order, axis=1)
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)
    return EigenSystem(vals.reshape(*lead_shape, n), vecs.reshape(*lead_shape, n, n))


def eig_hermitian(h: np.ndarray) -> EigenSystem:
    """Eigen-decomposition of one Hermitian matrix (cyclic Jacobi)."""
    h = np.asarray(h)
    if h.ndim != 2:
        raise NumericsError(f"expected a single matrix, got shape {h.shape}")
    return eig_hermitian_batch(h)


def expm_hermitian(a: np.ndarray, weight: np.ndarray | float) -> np.ndarray:
    """exp(-i * weight * A) for a stack of Hermitian A, via its eigen-decomposition."""
    es = eig_hermitian_batch(a)
    w = np.asarray(weight, dtype=float)
    phases = np.exp(-1j * es.values * w[..., None])
    return (es.vectors * phases[..., None, :]) @ np.conj(np.swapaxes(es.vectors, -1, -2))


def _tree_product(factors: np.ndarray, later_left: bool) -> np.ndarray:
    """Ordered product of a (K, n, n) stack; factor k is applied after factor k-1."""
    f = factors
    while f.shape[0] > 1:
        k = f.shape[0]
        even = f[0 : k - 1 : 2]
        odd = f[1:k:2]
        paired = odd @ even if later_left else even @ odd
        if k % 2:
            paired = np.concatenate([paired, f[-1:]], axis=0)
        f = paired
    return f[0]


def ordered_product_exponential(
    edges: np.ndarray,
    generators: np.ndarray,
    direction: str = "forward",
    chunk: int = 1 << 16,
) -> np.ndarray:
    """Ordered product of exp(-i A_k dtheta_k) over the cells of a grid.

    ``edges`` holds K+1 strictly monotone cell boundaries and ``generators``
    the K Hermitian matrices A_k, normally sampled at the cell midpoints.
    ``direction="forward"`` is path ordering (later cells multiply from the
    left), ``"reverse"`` anti-path ordering (later cells on the right).
    """
    edges = np.asarray(edges, dtype=float)
    gens = np.asarray(generators, dtype=np.complex128)
    if direction not in ("forward", "reverse"):
        raise NumericsError(f"direction must be 'forward' or 'reverse', not {direction!r}")
    if edges.ndim != 1 or edges.size < 2:
        raise NumericsError("need at least two grid edges")
    steps = np.diff(edges)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise NumericsError("grid edges are not strictly monotone")
    if gens.shape[0] != steps.size:
        raise NumericsError(f"{gens.shape[0]} generators for {steps.size} cells")
    later_left = direction == "forward"
    n = gens.shape[-1]
    total = np.eye(n, dtype=np.complex128)
    for start in range(0, steps.size, chunk):
        block = _tree_product(expm_hermitian(gens[start : start + chunk], steps[start : start + chunk]), later_left)
        total = block @ total if later_left else total @ block
    return total


def midpoints(edges: np.ndarray) -> np.ndarray:
    edges = np.asarray(edges, dtype=float)
    return 0.5 * (edges[1:] + edges[:-1])


def path_ordered_exp(
    generator: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    cells: int,
    direction: str = "forward",
) -> np.ndarray:
    """Midpoint-rule ordered exponential of a vectorized generator A(theta) over [a, b]."""
    edges = np.linspace(a, b, cells + 1)
    return ordered_product_exponential(edges, generator(midpoints(edges)), direction)


def rk4_complex_ode(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_span: tuple[float, float],
    steps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Classic fourth-order Runge-Kutta on a complex state.

    Returns ``(t, y)`` with ``y[k]`` the state at ``t[k]``. The state may be a
    vector or a matrix (several states evolved together).
    """
    if steps < 1:
        raise NumericsError("steps must be >= 1")
    t0, t1 = map(float, t_span)
    h = (t1 - t0) / steps
    y = np.array(y0, dtype=np.complex128)
    out = np.empty((steps + 1,) + y.shape, dtype=np.complex128)
    out[0] = y
    ts = t0 + h * np.arange(steps + 1)
    for k in range(steps):
        t = ts[k]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericsError(f"non-finite state produced at t = {t:.6g}")
        out[k + 1] = y
    return ts, out


def contour_integral(
    f: Callable[[np.ndarray], np.ndarray],
    center: complex,
    radius: float,
    samples: int = 256,
) -> complex:
    """(1 / 2 pi i) times the counter-clockwise circle integral of f, trapezoidal rule.

    ``f`` is called once on the array of circle points.
    """
    if radius <= 0:
        raise NumericsError("radius must be positive")
    phi = 2.0 * np.pi * np.arange(samples) / samples
    z = center + radius * np.exp(1j * phi)
    vals = np.asarray(f(z), dtype=np.complex128)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise NumericsError(f"non-finite integrand at circle angle {phi[np.argmax(bad)]:.6f}")
    # dz = i r e^{i phi} dphi, so (1/2 pi i) * sum f dz = mean(f * r e^{i phi})
    return complex(np.mean(vals * (z - center)))
