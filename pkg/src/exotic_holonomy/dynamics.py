"""Time-domain check of the holonomy: Schroedinger evolution along a smooth cycle.

Units: hbar = 1. The parameter follows theta(t) = theta_start + 2 pi cycles s(t / tau)
with a shape s that starts and stops with zero velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .csvio import write_csv
from .flow import EigenPath, FlowPermutation, extract_flow, track
from .models import ModelSpec, hamiltonian
from .numerics import NumericsError, eig_hermitian_batch, ordered_product_exponential, rk4_complex_ode

NORM_DRIFT_LIMIT = 1e-5
MAX_DOUBLINGS = 4
EXPMID_STEP = 0.2  # max h * |H| for the exponential-midpoint propagator
AUTO_RK4_MAX_TAU = 2000.0


class DynamicsError(RuntimeError):
    pass


SHAPES: dict[str, tuple[Callable, Callable]] = {
    "sine": (
        lambda u: u - np.sin(2 * np.pi * u) / (2 * np.pi),
        lambda u: 1 - np.cos(2 * np.pi * u),
    ),
    "smoothstep": (
        lambda u: u * u * (3 - 2 * u),
        lambda u: 6 * u * (1 - u),
    ),
}


@dataclass(frozen=True)
class Schedule:
    tau: float
    shape: str = "sine"
    theta_start: float = 0.0
    cycles: int = 1

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; choose from {sorted(SHAPES)}")

    @property
    def span(self) -> float:
        return 2 * math.pi * self.cycles

    def s(self, u):
        return SHAPES[self.shape][0](np.asarray(u, dtype=float))

    def ds(self, u):
        return SHAPES[self.shape][1](np.asarray(u, dtype=float))

    def theta(self, t):
        return self.theta_start + self.span * self.s(np.asarray(t) / self.tau)

    def theta_rate(self, t):
        return self.span * self.ds(np.asarray(t) / self.tau) / self.tau


def perturbation(n: int, pair: tuple[int, int] = (1, 2)) -> np.ndarray:
    """Constant symmetric coupling |a><b| + |b><a| between basis states a, b (1-based)."""
    p = np.zeros((n, n))
    a, b = pair[0] - 1, pair[1] - 1
    p[a, b] = p[b, a] = 1.0
    return p


def perturbed_hamiltonian(spec: ModelSpec, eps: float, pair: tuple[int, int] = (1, 2)) -> Callable:
    if eps < 0:
        raise ValueError("eps must be >= 0")
    p = eps * perturbation(spec.n, pair)

    def h(theta):
        return hamiltonian(spec, theta) + p

    return h


@dataclass(frozen=True)
class Gaps:
    delta: float  # minimum gap of the (avoided) crossing
    theta_delta: float
    d: float  # gap to the remaining levels; inf for two levels


def gaps(spec: ModelSpec, eps: float, samples: int = 8192, pair: tuple[int, int] = (1, 2)) -> Gaps:
    """Delta = smallest adjacent gap over the cycle, D = smallest second-adjacent gap (N >= 3)."""
    hfun = perturbed_hamiltonian(spec, eps, pair)
    grid = np.linspace(0.0, 2 * math.pi, samples + 1)
    w = eig_hermitian_batch(hfun(grid)).values
    adj = np.diff(w, axis=1)
    smallest = adj.min(axis=1)
    k = int(np.argmin(smallest))

    def gap_at(t):
        return float(np.diff(np.linalg.eigvalsh(hfun(np.array(t)))).min())

    lo, hi = grid[max(k - 2, 0)], grid[min(k + 2, samples)]
    res = minimize_scalar(gap_at, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    delta, theta_delta = min((float(res.fun), float(res.x)), (float(smallest[k]), float(grid[k])))
    if spec.n < 3:
        d = math.inf
    else:
        d = float(np.sort(adj, axis=1)[:, 1].min())
    return Gaps(delta, theta_delta, d)


def epsilon_for_gap(spec: ModelSpec, target: float, pair: tuple[int, int] = (1, 2)) -> float:
    """Coupling strength whose minimum gap equals ``target`` (root-bracketed search)."""
    f = lambda e: gaps(spec, e, pair=pair).delta - target
    return float(brentq(f, 1e-8, 1.0, xtol=1e-14, rtol=1e-12))


@dataclass
class AdiabaticRun:
    """Outcome of evolving every initial eigenstate over one schedule.

    ``overlaps[n, m] = <Psi_m(theta_i) | psi_n(tau)>`` and ``fidelities`` its
    modulus. ``dynamical_phases[n]`` integrates the continued branch energy
    that starts as state n, so that diag(exp(i phi)) @ overlaps approaches
    the holonomy matrix in the adiabatic limit.
    """

    spec: ModelSpec
    eps: float
    schedule: Schedule
    steps: int
    method: str
    initial_states: np.ndarray
    final_states: np.ndarray
    overlaps: np.ndarray
    dynamical_phases: np.ndarray
    crossing_flow: FlowPermutation
    norm_drift: float

    @property
    def fidelities(self) -> np.ndarray:
        return np.abs(self.overlaps)

    @property
    def sigma(self) -> tuple[int, ...]:
        return self.crossing_flow.sigma

    def exchange_fidelities(self) -> np.ndarray:
        """|<Psi_sigma(n)|psi_n>| for the unperturbed flow sigma."""
        idx = np.array(self.sigma) - 1
        return self.fidelities[np.arange(len(idx)), idx]

    def exchange_fidelity(self) -> float:
        return float(self.exchange_fidelities().min())

    def following_fidelities(self) -> np.ndarray:
        return np.diag(self.fidelities).copy()

    def holonomy_estimate(self) -> np.ndarray:
        return np.exp(1j * self.dynamical_phases)[:, None] * self.overlaps

    def unitarity_error(self) -> float:
        return float(np.abs((self.fidelities**2).sum(axis=1) - 1).max())


def _propagate_rk4(hfun, schedule: Schedule, y0: np.ndarray, steps: int) -> np.ndarray:
    def rhs(t, y):
        return -1j * (hfun(schedule.theta(t)) @ y)

    _, ys = rk4_complex_ode(rhs, y0, (0.0, schedule.tau), steps)
    return ys[-1]


def _propagate_expmid(hfun, schedule: Schedule, y0: np.ndarray, steps: int, chunk: int = 1 << 18) -> np.ndarray:
    """Exponential midpoint rule: exact unitary factors exp(-i H(t_mid) h), second order."""
    y = y0
    edges_all = np.linspace(0.0, schedule.tau, steps + 1)
    for start in range(0, steps, chunk):
        edges = edges_all[start : min(start + chunk, steps) + 1]
        mids = 0.5 * (edges[1:] + edges[:-1])
        u = ordered_product_exponential(edges, hfun(schedule.theta(mids)), "forward")
        y = u @ y
    return y


def _branch_phases(path: EigenPath, schedule: Schedule, samples: int = 1 << 14) -> np.ndarray:
    """phi_n = tau * int_0^1 E_n(theta(u)) du along the continued branches."""
    u = np.linspace(0.0, 1.0, samples + 1)
    theta = schedule.theta(u * schedule.tau)
    spline = CubicSpline(path.theta, path.values, axis=0)
    return schedule.tau * simpson(spline(theta), x=u, axis=0)


def evolve(
    spec: ModelSpec,
    eps: float,
    schedule: Schedule,
    steps: int = 10_000,
    method: str = "auto",
    pair: tuple[int, int] = (1, 2),
    track_steps: int = 4096,
) -> AdiabaticRun:
    """Evolve each initial eigenstate under i d/dt psi = H(theta(t)) psi.

    ``method`` is ``rk4`` (step count doubled on norm drift above 5e-6, at
    most four times), ``expmid`` (unitary exponential midpoint with
    h |H| <= 0.2) or ``auto`` (rk4 up to tau = 2000).
    """
    if method == "auto":
        method = "rk4" if schedule.tau <= AUTO_RK4_MAX_TAU else "expmid"
    if method not in ("rk4", "expmid"):
        raise ValueError(f"unknown method {method!r}")
    t0, t1 = schedule.theta_start, schedule.theta_start + schedule.span
    hfun = perturbed_hamiltonian(spec, eps, pair)
    if eps > 0:
        path = track(None, t0, t1, track_steps, hamiltonian_fn=hfun)
    else:
        path = track(spec, t0, t1, track_steps)
    crossing = extract_flow(track(spec, t0, t1, track_steps) if eps > 0 else path, allow_antiperiodic=True)
    y0 = path.vectors[0]
    hnorm = float(np.abs(path.values).max()) + 1e-300

    if method == "rk4":
        drift = math.inf
        for _ in range(MAX_DOUBLINGS + 1):
            try:
                y = _propagate_rk4(hfun, schedule, y0, steps)
            except NumericsError as exc:
                raise DynamicsError(str(exc)) from exc
            drift = float(np.abs(np.linalg.norm(y, axis=0) - 1).max())
            # sum_m |<m|psi>|^2 - 1 is about twice the norm drift
            if drift <= 0.5 * NORM_DRIFT_LIMIT:
                break
            steps *= 2
        else:
            raise DynamicsError(f"norm drift {drift:.2e} after {MAX_DOUBLINGS} step doublings (steps={steps // 2})")
    else:
        steps = max(steps, int(math.ceil(schedule.tau * hnorm / EXPMID_STEP)))
        y = _propagate_expmid(hfun, schedule, y0, steps)
        drift = float(np.abs(np.linalg.norm(y, axis=0) - 1).max())
        if drift > NORM_DRIFT_LIMIT:
            raise DynamicsError(f"norm drift {drift:.2e} in the exponential propagator")

    overlaps = (y0.conj().T @ y).T  # [n, m] = <Psi_m(0)|psi_n(tau)>
    phases = _branch_phases(path, schedule)
    return AdiabaticRun(spec, eps, schedule, steps, method, y0, y, overlaps, phases, crossing, drift)


@dataclass(frozen=True)
class WindowRow:
    tau: float
    delta: float
    d: float
    exchange_fidelity: float
    following_fidelity: float
    diabatic_estimate: float  # Landau-Zener order-of-magnitude estimate of the exchange probability
    phases: tuple[float, ...]


def landau_zener_estimate(spec: ModelSpec, delta: float, tau: float, schedule_shape: str = "sine") -> float:
    """exp(-pi Delta^2 / (2 alpha)) with alpha the crossing rate of the unperturbed gap at theta = pi.

    Near pi the unperturbed gap is |v (theta - pi)| (two-level, cos_half), and
    the sine schedule crosses at dtheta/dt = 4 pi / tau.
    """
    rate = abs(spec.v) * Schedule(tau, schedule_shape).theta_rate(tau / 2)
    return math.exp(-math.pi * delta**2 / (2 * rate))


def landau_zener_window(
    spec: ModelSpec,
    eps: float,
    taus: Iterable[float],
    steps: int = 10_000,
    method: str = "auto",
    shape: str = "sine",
    pair: tuple[int, int] = (1, 2),
) -> list[WindowRow]:
    taus = list(taus)
    if not taus:
        raise ValueError("empty tau list")
    g = gaps(spec, eps, pair=pair)
    return [
        window_row(evolve(spec, eps, Schedule(float(tau), shape), steps=steps, method=method, pair=pair), g)
        for tau in taus
    ]


def window_row(run: AdiabaticRun, g: Gaps) -> WindowRow:
    tau = run.schedule.tau
    return WindowRow(
        tau,
        g.delta,
        g.d,
        run.exchange_fidelity(),
        float(run.following_fidelities().min()),
        landau_zener_estimate(run.spec, g.delta, tau, run.schedule.shape) if run.eps > 0 else 1.0,
        tuple(float(p) for p in run.dynamical_phases),
    )


def window_csv(rows: Sequence[WindowRow], path, meta=None):
    n = len(rows[0].phases) if rows else 0
    cols = ["tau", "delta", "D", "exchange_fidelity", "following_fidelity", "lz_estimate"] + [f"phi{i + 1}" for i in range(n)]
    body = [[r.tau, r.delta, r.d, r.exchange_fidelity, r.following_fidelity, r.diabatic_estimate, *r.phases] for r in rows]
    return write_csv(path, cols, body, meta)


def fidelity_csv(run: AdiabaticRun, path, meta=None):
    n = run.fidelities.shape[0]
    cols = ["state"] + [f"F_to_{m + 1}" for m in range(n)] + ["re_holonomy_est_" + str(m + 1) for m in range(n)]
    est = run.holonomy_estimate()
    body = [[i + 1, *run.fidelities[i], *est[i].real] for i in range(n)]
    meta = dict(meta or {})
    meta.setdefault("perturbation", f"eps*(|{1}><{2}| + h.c.), eps={run.eps!r}")
    meta.setdefault("schedule", f"tau={run.schedule.tau!r} shape={run.schedule.shape} method={run.method} steps={run.steps}")
    return write_csv(path, cols, body, meta)
