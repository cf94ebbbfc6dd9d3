"""Continuation of eigen-branches along real theta and the resulting eigenvalue flow."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .csvio import write_csv
from .models import (
    N_LEVEL_RANK_ONE,
    SIGMA_GENERAL,
    THREE_LEVEL,
    TWO_LEVEL,
    ModelSpec,
    analytic_eigensystem,
    hamiltonian,
    sigma_general,
)
from .numerics import eig_hermitian, eig_hermitian_batch

GAP_RTOL = 1e-6
CONTINUITY = 0.9
AMBIGUITY = 1e-3
MAX_BISECTIONS = 12
FLOW_RESIDUAL_LIMIT = 0.1


class TrackingError(RuntimeError):
    pass


class FlowError(ValueError):
    pass


@dataclass
class EigenPath:
    """Branch-continued eigen-data on a monotone theta grid.

    ``values[k, n]`` is branch n at ``theta[k]``; ``vectors[k, :, n]`` its
    parallel-transported eigenvector. ``matched[k]`` and ``bridged[k]`` refer
    to the step k -> k+1.
    """

    spec: ModelSpec | None
    theta: np.ndarray
    values: np.ndarray
    vectors: np.ndarray
    matched: np.ndarray
    bridged: np.ndarray
    min_overlap: float
    bisections: int = 0
    hamiltonian_fn: Callable | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def ok(self) -> bool:
        return bool(np.all(self.matched))

    def h(self, theta) -> np.ndarray:
        if self.hamiltonian_fn is not None:
            return self.hamiltonian_fn(theta)
        return hamiltonian(self.spec, theta)

    def reversed(self) -> "EigenPath":
        return EigenPath(
            self.spec,
            self.theta[::-1].copy(),
            self.values[::-1].copy(),
            self.vectors[::-1].copy(),
            self.matched[::-1].copy(),
            self.bridged[::-1].copy(),
            self.min_overlap,
            self.bisections,
            self.hamiltonian_fn,
        )

    def to_csv(self, path, meta=None):
        n = self.n
        cols = ["theta"] + [f"E{i + 1}" for i in range(n)]
        for b in range(n):
            for comp in range(n):
                cols += [f"re_psi{b + 1}_{comp + 1}", f"im_psi{b + 1}_{comp + 1}"]
        rows = []
        for k, t in enumerate(self.theta):
            row = [t, *self.values[k]]
            for b in range(n):
                for comp in range(n):
                    z = self.vectors[k, comp, b]
                    row += [z.real, z.imag]
            rows.append(row)
        meta = dict(meta or {})
        if self.spec is not None:
            meta.setdefault("model", self.spec.to_text())
        return write_csv(path, cols, rows, meta)


def initial_frame(spec: ModelSpec, theta0: float, h: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Starting (values, vectors) for tracking.

    Solvable families start from their closed-form continuous frame, so that
    tracked phases agree with the analytic gauge; others from the sorted,
    phase-fixed numerical eigensystem.
    """
    if spec is not None and spec.family in (TWO_LEVEL, THREE_LEVEL):
        es = analytic_eigensystem(spec, np.array([theta0]))
        return es.values[0], es.vectors[0].astype(complex)
    es = eig_hermitian(h if h is not None else hamiltonian(spec, theta0))
    return es.values, es.vectors.astype(complex)


def _clusters(w: np.ndarray, tol: float) -> list[np.ndarray]:
    groups, start = [], 0
    for i in range(1, w.size + 1):
        if i == w.size or w[i] - w[i - 1] >= tol:
            groups.append(np.arange(start, i))
            start = i
    return groups


@dataclass
class _Step:
    values: np.ndarray
    vectors: np.ndarray
    overlap: float
    ambiguous: bool
    bridged: bool


def _match(h: np.ndarray, w: np.ndarray, u: np.ndarray, current: np.ndarray, pred: np.ndarray, gap_tol: float) -> _Step:
    """Assign the fresh eigensystem (w, u) of h to the branches predicted by ``pred``."""
    n = w.size
    pred = pred / np.linalg.norm(pred, axis=0, keepdims=True)
    groups = _clusters(w, gap_tol)
    # one slot per eigenvector; cost is the (negated) weight of each predicted branch in the slot's cluster
    slot_group = np.concatenate([np.full(g.size, gi) for gi, g in enumerate(groups)])
    weight = np.empty((n, len(groups)))
    for gi, g in enumerate(groups):
        weight[:, gi] = np.sum(np.abs(u[:, g].conj().T @ pred) ** 2, axis=0)
    slot_weight = weight[:, slot_group]
    rows, cols = linear_sum_assignment(-slot_weight)
    branch_of_slot = np.empty(n, dtype=int)
    branch_of_slot[cols] = rows

    ambiguous = False
    for b in range(n):
        # slots of one cluster are interchangeable, so compare clusters only
        distinct = np.sort(weight[b])[::-1]
        if distinct.size > 1 and math.sqrt(distinct[0]) - math.sqrt(distinct[1]) < AMBIGUITY:
            ambiguous = True

    vecs = np.empty((n, n), dtype=complex)
    vals = np.empty(n)
    bridged = False
    for g in groups:
        branches = branch_of_slot[g]
        if g.size == 1:
            vecs[:, branches[0]] = u[:, g[0]]
            vals[branches[0]] = w[g[0]]
            continue
        bridged = True
        basis = u[:, g]
        x = basis.conj().T @ pred[:, branches]
        left, _, right = np.linalg.svd(x)
        y = basis @ (left @ right)
        vecs[:, branches] = y
        vals[branches] = np.real(np.einsum("ib,ij,jb->b", y.conj(), h, y))
    ov = np.einsum("ib,ib->b", current.conj(), vecs)
    mag = np.abs(ov)
    phase = np.where(mag > 0, ov / np.where(mag > 0, mag, 1.0), 1.0)
    vecs = vecs * phase.conj()[None, :]
    return _Step(vals, vecs, float(mag.min()), ambiguous, bridged)


def track(
    spec: ModelSpec | None,
    theta_start: float,
    theta_end: float,
    steps: int = 2048,
    *,
    frame: tuple[np.ndarray, np.ndarray] | None = None,
    hamiltonian_fn: Callable | None = None,
    raise_on_failure: bool = False,
) -> EigenPath:
    """Continue all eigen-branches from ``theta_start`` to ``theta_end``.

    Adjacent grids are matched by maximal overlap with a linearly extrapolated
    prediction; near-degenerate clusters (gap below 1e-6 times the largest
    norm of H on the path, e.g. the H = 0 point) are bridged by rotating the
    cluster basis onto the prediction. Ambiguous or discontinuous steps are
    bisected up to 12 times; steps still unresolved are flagged in
    ``matched``.
    """
    if steps < 16:
        raise ValueError("track needs steps >= 16")
    hfun = hamiltonian_fn if hamiltonian_fn is not None else (lambda t: hamiltonian(spec, t))
    grid = np.linspace(theta_start, theta_end, steps + 1)
    hs = np.asarray(hfun(grid))
    fresh = eig_hermitian_batch(hs)
    scale = float(np.max(np.abs(fresh.values))) if fresh.values.size else 0.0
    gap_tol = GAP_RTOL * max(scale, 1e-300)

    if frame is None:
        frame = initial_frame(spec, theta_start, hs[0]) if spec is not None else (fresh.values[0], fresh.vectors[0])
    n = hs.shape[-1]
    values = np.empty((grid.size, n))
    vectors = np.empty((grid.size, n, n), dtype=complex)
    values[0], vectors[0] = frame[0], frame[1]
    matched = np.ones(grid.size - 1, dtype=bool)
    bridged = np.zeros(grid.size - 1, dtype=bool)
    min_overlap = 1.0
    bisections = 0

    def advance(ta, va, dva, tb, hb, wb, ub, depth):
        """Step from (ta, va) to tb, where dva is the last per-radian change of the frame."""
        nonlocal bisections
        pred = va + dva * (tb - ta)
        st = _match(hb, wb, ub, va, pred, gap_tol)
        if (st.ambiguous or st.overlap < CONTINUITY) and depth < MAX_BISECTIONS:
            bisections += 1
            tm = 0.5 * (ta + tb)
            hm = np.asarray(hfun(np.array(tm)))
            em = eig_hermitian(hm)
            sm, ok1, br1, dvm = advance(ta, va, dva, tm, hm, em.values, em.vectors, depth + 1)
            sb, ok2, br2, dvb = advance(tm, sm.vectors, dvm, tb, hb, wb, ub, depth + 1)
            return sb, ok1 and ok2, br1 or br2, dvb
        ok = not st.ambiguous and st.overlap >= CONTINUITY
        dv = (st.vectors - va) / (tb - ta) if tb != ta else np.zeros_like(va)
        return st, ok, st.bridged, dv

    dv = np.zeros((n, n), dtype=complex)
    for k in range(grid.size - 1):
        st, ok, br, dv = advance(grid[k], vectors[k], dv, grid[k + 1], hs[k + 1], fresh.values[k + 1], fresh.vectors[k + 1], 0)
        values[k + 1] = st.values
        vectors[k + 1] = st.vectors
        matched[k] = ok
        bridged[k] = br
        min_overlap = min(min_overlap, st.overlap)
        if raise_on_failure and not ok:
            raise TrackingError(f"unresolved branch matching between theta={grid[k]!r} and {grid[k + 1]!r}")
    return EigenPath(spec, grid, values, vectors, matched, bridged, min_overlap, bisections, hamiltonian_fn)


# --- flow permutations -----------------------------------------------------------


@dataclass(frozen=True)
class FlowPermutation:
    """sigma[n-1] = m: branch n ends on initial state m, with phase ``phases[n-1]``."""

    sigma: tuple[int, ...]
    phases: np.ndarray
    residual: float
    overlaps: np.ndarray | None = None

    @property
    def reliable(self) -> bool:
        return self.residual <= FLOW_RESIDUAL_LIMIT

    @property
    def n(self) -> int:
        return len(self.sigma)

    def as_matrix(self) -> np.ndarray:
        """Permutation-with-phases matrix M, M[n-1, sigma(n)-1] = phase_n."""
        m = np.zeros((self.n, self.n), dtype=complex)
        for i, s in enumerate(self.sigma):
            m[i, s - 1] = self.phases[i]
        return m

    def compose(self, other: "FlowPermutation") -> "FlowPermutation":
        """Flow of this cycle followed by ``other`` (matrix product other.M @ self.M)."""
        m = other.as_matrix() @ self.as_matrix()
        return flow_from_matrix(m, residual=max(self.residual, other.residual))

    def cycle_notation(self) -> str:
        return cycle_notation(self.sigma)

    def image(self) -> str:
        """The flow written as the image of {1..N}, e.g. '{2,3,1}'."""
        return "{" + ",".join(str(s) for s in self.sigma) + "}"


def cycle_notation(sigma: Sequence[int]) -> str:
    seen, out = set(), []
    for start in range(1, len(sigma) + 1):
        if start in seen:
            continue
        cyc, j = [], start
        while j not in seen:
            seen.add(j)
            cyc.append(j)
            j = sigma[j - 1]
        if len(cyc) > 1:
            out.append("(" + " ".join(map(str, cyc)) + ")")
    return "".join(out) or "()"


def flow_from_matrix(m: np.ndarray, residual: float | None = None) -> FlowPermutation:
    mag = np.abs(m)
    rows, cols = linear_sum_assignment(-mag)
    sigma = tuple(int(c) + 1 for c in cols[np.argsort(rows)])
    picked = m[np.arange(m.shape[0]), np.array(sigma) - 1]
    phases = picked / np.abs(picked)
    res = float(1 - np.abs(picked).min()) if residual is None else residual
    return FlowPermutation(sigma, phases, res, mag)


def extract_flow(path: EigenPath, allow_antiperiodic: bool = False) -> FlowPermutation:
    """Read off sigma from the overlaps of the final tracked frame with the initial one."""
    if path.theta.size < 2:
        raise FlowError("path has no steps")
    h0 = np.asarray(path.h(path.theta[0]))
    h1 = np.asarray(path.h(path.theta[-1]))
    scale = max(1.0, float(np.abs(h0).max()))
    closed = np.abs(h0 - h1).max() < 1e-12 * scale
    anti = np.abs(h0 + h1).max() < 1e-12 * scale
    if not closed and not (allow_antiperiodic and anti):
        raise FlowError("path does not close: H(theta_end) differs from H(theta_start)")
    overlaps = path.vectors[0].conj().T @ path.vectors[-1]  # [m, n] = <initial m | final n>
    o = overlaps.T
    mag = np.abs(o)
    rows, cols = linear_sum_assignment(-mag)
    sigma = tuple(int(c) + 1 for c in cols[np.argsort(rows)])
    picked = o[np.arange(o.shape[0]), np.array(sigma) - 1]
    phases = picked / np.abs(picked)
    residual = float(1 - np.abs(picked).min())
    return FlowPermutation(sigma, phases, residual, mag)


# the parameter cases used to illustrate every flow pattern of the Sigma family
SIGMA_CASES = {
    "c1 only": (1.0, 0.0, 0.0, 0.0),
    "c2 only": (0.0, 1.0, 0.0, 0.0),
    "c3 only": (0.0, 0.0, 1.0, 0.0),
    "c1=c2=c3": (1.0, 1.0, 1.0, 0.0),
    "c1=c2=c3, c5=0.05": (1.0, 1.0, 1.0, 0.05),
    "generic": (0.7, 1.0, 1.3, 0.05),
}


@dataclass(frozen=True)
class SigmaFlowRow:
    c: tuple[float, float, float, float]
    flow: FlowPermutation
    tracked_ok: bool

    @property
    def flagged(self) -> bool:
        return not (self.tracked_ok and self.flow.reliable)


def classify_sigma_flows(
    c_grid: Iterable[Sequence[float]], v: float = 1.0, steps: int = 2048, envelope: str = "cos_half"
) -> list[SigmaFlowRow]:
    rows = []
    for c in c_grid:
        c1, c2, c3, c5 = map(float, c)
        if abs(c5) > 0.2:
            raise ValueError(f"|c5| = {abs(c5)} exceeds 0.2; the small-perturbation regime is required")
        spec = sigma_general(c1, c2, c3, c5, v=v, envelope=envelope)
        path = track(spec, 0.0, 2 * math.pi, steps)
        flow = extract_flow(path)
        rows.append(SigmaFlowRow((c1, c2, c3, c5), flow, path.ok))
    return rows


def sigma_flows_csv(rows: Sequence[SigmaFlowRow], path, meta=None):
    cols = ["c1", "c2", "c3", "c5", "flow", "cycles", "residual", "flagged"]
    body = [[*r.c, r.flow.image(), r.flow.cycle_notation(), r.flow.residual, r.flagged] for r in rows]
    return write_csv(path, cols, body, meta)
