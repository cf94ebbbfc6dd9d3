"""Gauge potential along a cycle, its diagonal reduction, and the holonomy matrix.

Convention: the continued state n at the end of the path is expanded in the
initial frame,

    Psi_n(theta_f) = sum_m M[n, m] Psi_m(theta_i),

with A[n, m] = <Psi_n | i d/dtheta Psi_m>. The moving frame W (columns Psi_n)
obeys W' = -i W A, so W(theta_f) = W(theta_i) U with U the anti-path-ordered
exponential of -i A (later cells on the right) and M = (U D)^T, where D is the
path-ordered exponential of +i A^D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .csvio import write_csv
from .flow import EigenPath, FlowPermutation, extract_flow, flow_from_matrix, track
from .models import (
    THREE_LEVEL,
    TWO_LEVEL,
    ModelSpec,
    analytic_eigensystem,
    gauge_function_f,
    gauge_function_g,
)
from .numerics import midpoints, ordered_product_exponential

ANALYTIC = "analytic"
FINITE_DIFFERENCE = "finite_difference"
NONZERO_ENTRY = 0.5
RESIDUAL_LIMIT = 0.05
DEFAULT_SAMPLES = 4096


class HolonomyError(ValueError):
    pass


@dataclass(frozen=True)
class GaugeField:
    """A(theta) sampled at the midpoints of the cells bounded by ``edges``."""

    edges: np.ndarray
    a: np.ndarray
    provenance: str
    spec: ModelSpec | None = None

    @property
    def theta(self) -> np.ndarray:
        return midpoints(self.edges)

    @property
    def n(self) -> int:
        return self.a.shape[-1]

    def reversed(self) -> "GaugeField":
        return replace(self, edges=self.edges[::-1].copy(), a=self.a[::-1].copy())

    def hermitian_error(self) -> float:
        return float(np.abs(self.a - np.conj(np.swapaxes(self.a, -1, -2))).max())

    def to_csv(self, path, meta=None):
        n = self.n
        cols = ["theta"]
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        for i, j in pairs:
            cols += [f"A{i + 1}{j + 1}"] if i == j else [f"re_A{i + 1}{j + 1}", f"im_A{i + 1}{j + 1}"]
        rows = []
        for t, a in zip(self.theta, self.a):
            row = [t]
            for i, j in pairs:
                row += [a[i, j].real] if i == j else [a[i, j].real, a[i, j].imag]
            rows.append(row)
        meta = dict(meta or {})
        meta.setdefault("provenance", self.provenance)
        if self.spec is not None:
            meta.setdefault("model", self.spec.to_text())
        return write_csv(path, cols, rows, meta)


def analytic_gauge_matrix(spec: ModelSpec, theta) -> np.ndarray:
    """Closed-form A(theta) in the continuous analytic frame, shape theta.shape + (N, N)."""
    theta = np.asarray(theta, dtype=float)
    if spec.family == TWO_LEVEL:
        f = gauge_function_f(spec, theta)
        a = np.zeros(theta.shape + (2, 2), dtype=complex)
        a[..., 0, 1] = -1j * f
        a[..., 1, 0] = 1j * f
        return a
    if spec.family == THREE_LEVEL:
        g = gauge_function_g(spec, theta)
        g_up = gauge_function_g(spec, theta + 2 * np.pi)
        g_dn = gauge_function_g(spec, theta - 2 * np.pi)
        a = np.zeros(theta.shape + (3, 3), dtype=complex)
        a[..., 0, 1], a[..., 1, 0] = -1j * g_up, 1j * g_up
        a[..., 0, 2], a[..., 2, 0] = 1j * g, -1j * g
        a[..., 1, 2], a[..., 2, 1] = -1j * g_dn, 1j * g_dn
        return a
    raise HolonomyError(f"no analytic gauge potential for family {spec.family}")


def finite_difference_gauge(vectors: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Midpoint A from a sampled frame: (i / 2h)(X - X^dagger), X = W_k^dagger W_{k+1}.

    This is the centered difference i W_mid^dagger (W_{k+1} - W_k)/h with
    W_mid the average of the two samples; it is Hermitian by construction
    and second-order accurate at the midpoint.
    """
    x = np.einsum("kji,kjl->kil", vectors[:-1].conj(), vectors[1:])
    h = np.diff(theta)[:, None, None]
    return 0.5j * (x - np.conj(np.swapaxes(x, -1, -2))) / h


def gauge_potential(path: EigenPath, mode: str = FINITE_DIFFERENCE) -> GaugeField:
    if not path.ok:
        bad = np.flatnonzero(~path.matched)
        raise HolonomyError(f"path has {bad.size} unmatched steps, first at theta={path.theta[bad[0]]!r}")
    if mode == ANALYTIC:
        if path.spec is None or path.spec.family not in (TWO_LEVEL, THREE_LEVEL):
            raise HolonomyError("analytic mode needs a two_level or three_level spec")
        return GaugeField(path.theta.copy(), analytic_gauge_matrix(path.spec, midpoints(path.theta)), ANALYTIC, path.spec)
    if mode == FINITE_DIFFERENCE:
        return GaugeField(path.theta.copy(), finite_difference_gauge(path.vectors, path.theta), FINITE_DIFFERENCE, path.spec)
    raise HolonomyError(f"unknown mode {mode!r}")


def analytic_field(spec: ModelSpec, theta_start: float = 0.0, theta_end: float = 2 * math.pi, samples: int = DEFAULT_SAMPLES) -> GaugeField:
    """Closed-form field on a uniform midpoint grid, without tracking."""
    edges = np.linspace(theta_start, theta_end, samples + 1)
    return GaugeField(edges, analytic_gauge_matrix(spec, midpoints(edges)), ANALYTIC, spec)


def diagonal_reduction(fld: GaugeField) -> GaugeField:
    n = fld.n
    eye = np.eye(n, dtype=bool)
    return replace(fld, a=np.where(eye, fld.a, 0.0))


@dataclass(frozen=True)
class HolonomyMatrix:
    m: np.ndarray
    sigma: tuple[int, ...] | None
    entry_phases: np.ndarray | None
    residual: float

    @property
    def reliable(self) -> bool:
        return self.sigma is not None and self.residual <= RESIDUAL_LIMIT

    @property
    def unitarity_error(self) -> float:
        n = self.m.shape[0]
        return float(np.abs(self.m.conj().T @ self.m - np.eye(n)).max())

    def table(self, digits: int = 6) -> str:
        def cell(z: complex) -> str:
            re = 0.0 if abs(z.real) < 10 ** -digits else z.real
            im = 0.0 if abs(z.imag) < 10 ** -digits else z.imag
            if im == 0:
                return f"{re:.{digits}f}"
            return f"{re:.{digits}f}{im:+.{digits}f}i"

        cells = [[cell(z) for z in row] for row in self.m]
        width = max(len(c) for row in cells for c in row)
        lines = ["[" + "  ".join(c.rjust(width) for c in row) + "]" for row in cells]
        if self.sigma is not None:
            from .flow import cycle_notation

            lines.append(f"sigma = {cycle_notation(self.sigma)}   flow {{" + ",".join(map(str, self.sigma)) + "}")
            lines.append("phases = " + ", ".join(cell(p) for p in self.entry_phases))
        else:
            lines.append("sigma = unresolved (no permutation pattern)")
        lines.append(f"residual = {self.residual:.3e}")
        return "\n".join(lines)


def classify(m: np.ndarray) -> HolonomyMatrix:
    """Permutation pattern of M: exactly one entry above 0.5 in each row and column."""
    m = np.asarray(m, dtype=complex)
    big = np.abs(m) > NONZERO_ENTRY
    if not (np.all(big.sum(axis=0) == 1) and np.all(big.sum(axis=1) == 1)):
        return HolonomyMatrix(m, None, None, math.inf)
    cols = np.argmax(big, axis=1)
    picked = m[np.arange(m.shape[0]), cols]
    sigma = tuple(int(c) + 1 for c in cols)
    residual = float(np.max(np.abs(np.abs(picked) - 1.0)))
    return HolonomyMatrix(m, sigma, picked / np.abs(picked), residual)


def holonomy_matrix(fld: GaugeField) -> HolonomyMatrix:
    """M = (U D)^T with U = anti-ordered exp(-i int A), D = ordered exp(+i int A^D)."""
    u = ordered_product_exponential(fld.edges, fld.a, "reverse")
    d = ordered_product_exponential(fld.edges, -diagonal_reduction(fld).a, "forward")
    return classify((u @ d).T)


def analytic_holonomy(spec: ModelSpec, theta_start: float = 0.0, cycles: int = 1) -> np.ndarray:
    """M[n, m] = <Psi_m(theta_i) | Psi_n(theta_i + 2 pi cycles)> from the continuous closed-form frame.

    The closed-form frames have a vanishing diagonal gauge potential, so no
    dynamical-phase-free correction is needed.
    """
    if spec.family not in (TWO_LEVEL, THREE_LEVEL):
        raise HolonomyError("closed-form holonomy needs a two_level or three_level spec")
    es = analytic_eigensystem(spec, np.array([theta_start, theta_start + 2 * math.pi * cycles]))
    return (es.vectors[0].conj().T @ es.vectors[1]).T


@dataclass
class CrossValidation:
    spec: ModelSpec
    matrices: dict[str, np.ndarray]
    discrepancies: dict[str, float]
    flow: FlowPermutation
    holonomy: HolonomyMatrix
    tolerance: float = 1e-4

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancies.values()) if self.discrepancies else 0.0

    @property
    def passed(self) -> bool:
        return self.max_discrepancy < self.tolerance and self.holonomy.reliable and self.flow.reliable

    def report(self) -> str:
        lines = [f"cross-validation for {self.spec.family} (v={self.spec.v!r})"]
        for key, value in self.discrepancies.items():
            lines.append(f"  max |M_{key.replace('-', ' - M_')}| = {value:.3e}")
        lines.append(f"  verdict: {'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def cross_validate(spec: ModelSpec, samples: int = DEFAULT_SAMPLES, steps: int = 2048, tolerance: float = 1e-4) -> CrossValidation:
    """Compare closed-form M, integrated M, and the tracked flow as a matrix."""
    two_pi = 2 * math.pi
    path = track(spec, 0.0, two_pi, steps)
    flow = extract_flow(path, allow_antiperiodic=True)
    matrices = {"flow": flow.as_matrix()}
    if spec.family in (TWO_LEVEL, THREE_LEVEL):
        hol = holonomy_matrix(analytic_field(spec, 0.0, two_pi, samples))
        matrices["analytic"] = analytic_holonomy(spec)
    else:
        fine = track(spec, 0.0, two_pi, samples)
        hol = holonomy_matrix(gauge_potential(fine, FINITE_DIFFERENCE))
    matrices["integrated"] = hol.m
    keys = list(matrices)
    disc = {}
    for i, a in enumerate(keys):
        for b in keys[i + 1 :]:
            disc[f"{a}-{b}"] = float(np.abs(matrices[a] - matrices[b]).max())
    return CrossValidation(spec, matrices, disc, flow, hol, tolerance)
