"""The acceptance criteria as runnable checks.

Each check returns a ``CriterionResult``; ``run`` executes a filtered subset
and ``summary`` renders the machine-readable report used by the CLI.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .complex_plane import POLE, SPECTATOR, analytic_exceptional_points, newton_exceptional_points
from .dynamics import Schedule, epsilon_for_gap, evolve, gaps
from .flow import SIGMA_CASES, classify_sigma_flows, extract_flow, track
from .holonomy import analytic_field, analytic_holonomy, cross_validate, holonomy_matrix
from .models import analytic_eigensystem, gauge_function_f, three_level, two_level
from .numerics import eig_hermitian_batch, midpoints, ordered_product_exponential

TWO_PI = 2 * math.pi

# seconds allowed per criterion
RUNTIME_BUDGET = {1: 5, 2: 1, 3: 10, 4: 5, 5: 5, 6: 10, 7: 30, 8: 180, 9: 20, 10: 60}

# expected flows of the Sigma family cases, as images of (1, 2, 3)
SIGMA_EXPECTED = {
    "c1 only": (2, 1, 3),
    "c2 only": (3, 2, 1),
    "c3 only": (1, 3, 2),
    "c1=c2=c3": (2, 3, 1),
    "c1=c2=c3, c5=0.05": (2, 3, 1),
    "generic": (3, 2, 1),
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def budget(self) -> float:
        return RUNTIME_BUDGET.get(self.number, math.inf)

    @property
    def within_budget(self) -> bool:
        return self.seconds <= self.budget

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name} ({self.seconds:.1f} s of {self.budget:g} s)"


def _cyclic_matrix(sigma, phases=None) -> np.ndarray:
    n = len(sigma)
    m = np.zeros((n, n), dtype=complex)
    for i, s in enumerate(sigma):
        m[i, s - 1] = 1.0 if phases is None else phases[i]
    return m


def two_level_holonomy(samples: int = 4096) -> CriterionResult:
    hol = holonomy_matrix(analytic_field(two_level(), 0.0, TWO_PI, samples))
    err = float(np.abs(hol.m - np.array([[0, 1], [-1, 0]])).max())
    return CriterionResult(1, "two_level_holonomy", err < 1e-6, {"max_entry_error": err, "sigma": hol.sigma})


def gauge_integral(vs=(0.2, 1 / math.sqrt(3), 1.0, 3.0)) -> CriterionResult:
    errs = {}
    for v in vs:
        spec = two_level(v)
        val, _ = quad(lambda t: float(gauge_function_f(spec, t)), 0.0, TWO_PI, points=[math.pi], epsabs=1e-13, epsrel=1e-13, limit=400)
        errs[f"{v:.6g}"] = abs(val - math.pi / 2)
    worst = max(errs.values())
    return CriterionResult(2, "gauge_integral", worst < 1e-8, {"abs_error_by_v": errs})


def three_level_holonomy(samples: int = 4096) -> CriterionResult:
    hol = holonomy_matrix(analytic_field(three_level(1.0), 0.0, TWO_PI, samples))
    err = float(np.abs(hol.m - _cyclic_matrix((2, 3, 1))).max())
    return CriterionResult(3, "three_level_holonomy", err < 1e-4, {"max_entry_error": err, "sigma": hol.sigma})


def eigenvalue_flow(points: int = 1000) -> CriterionResult:
    detail = {}
    ok = True
    theta = np.linspace(0.0, TWO_PI, points, endpoint=False)
    for spec in (two_level(), three_level(1.0)):
        n = spec.n
        shift = (np.arange(n) + 1) % n  # E_n(theta + 2 pi) = E_{n+1}(theta)
        later = analytic_eigensystem(spec, theta + TWO_PI).values
        now = analytic_eigensystem(spec, theta).values
        closed = float(np.abs(later - now[:, shift]).max())
        path = track(spec, 0.0, 2 * TWO_PI, 2 * points)
        tracked = float(np.abs(path.values[points:] - path.values[: points + 1][:, shift]).max())
        detail[spec.family] = {"closed_form": closed, "tracker": tracked, "tracked_ok": path.ok}
        ok &= closed < 1e-9 and tracked < 1e-6 and path.ok
    return CriterionResult(4, "eigenvalue_flow", ok, detail)


def eigenvector_periodicity(points: int = 1000) -> CriterionResult:
    theta = np.linspace(0.0, TWO_PI, points, endpoint=False)
    v2 = lambda t: analytic_eigensystem(two_level(), t).vectors
    v3 = lambda t: analytic_eigensystem(three_level(1.0), t).vectors
    base2, base3 = v2(theta), v3(theta)
    detail = {
        "two_level_8pi": float(np.abs(v2(theta + 4 * TWO_PI) - base2).max()),
        "two_level_4pi_anti": float(np.abs(v2(theta + 2 * TWO_PI) + base2).max()),
        "three_level_6pi": float(np.abs(v3(theta + 3 * TWO_PI) - base3).max()),
    }
    return CriterionResult(5, "eigenvector_periodicity", max(detail.values()) < 1e-9, detail)


def exceptional_points() -> CriterionResult:
    detail = {}
    ok = True
    for spec in (two_level(), three_level(1.0)):
        exact = [p for p in analytic_exceptional_points(spec) if p.kind == POLE]
        found = newton_exceptional_points(spec).points
        poles = [p for p in found if p.kind == POLE]
        spect = [p for p in found if p.kind == SPECTATOR and abs(p.theta - math.pi) < 1e-9]
        match = max(min(abs(q.theta - p.theta) for q in poles) for p in exact) if poles else math.inf
        res_err = 0.0
        for p in poles + exact:
            expected = -0.25j if p.theta.imag > 0 else 0.25j
            res_err = max(res_err, abs(p.residue - expected))
        spect_res = max((abs(p.residue) for p in spect), default=math.inf)
        detail[spec.family] = {
            "poles_found": len(poles),
            "poles_expected": len(exact),
            "max_root_distance": match,
            "max_residue_error": res_err,
            "spectator_residue": spect_res,
        }
        ok &= len(poles) == len(exact) and match < 1e-8 and res_err < 1e-4 and spect_res < 1e-6
    return CriterionResult(6, "exceptional_points", ok, detail)


def sigma_flow_table(steps: int = 2048) -> CriterionResult:
    rows = classify_sigma_flows(SIGMA_CASES.values(), steps=steps)
    detail = {}
    ok = True
    for (name, expected), row in zip(SIGMA_EXPECTED.items(), rows):
        detail[name] = {"flow": row.flow.image(), "expected": "{" + ",".join(map(str, expected)) + "}", "flagged": row.flagged}
        ok &= row.flow.sigma == expected and not row.flagged
    return CriterionResult(7, "sigma_flow_table", ok, detail)


def dynamics_oracle(delta: float = 1e-3) -> CriterionResult:
    """Adiabatic exchange at exact crossings, and its window once a gap is opened.

    Every sub-check is reported; the criterion passes only if all do.
    """
    detail = {}
    two, three = two_level(), three_level(1.0)
    run2 = evolve(two, 0.0, Schedule(200.0))
    run3 = evolve(three, 0.0, Schedule(500.0))
    detail["two_level_tau200_exchange"] = run2.exchange_fidelity()
    detail["three_level_tau500_exchange"] = run3.exchange_fidelity()
    eps = epsilon_for_gap(two, delta)
    g = gaps(two, eps)
    short = evolve(two, eps, Schedule(50.0))
    long = evolve(two, eps, Schedule(1e6))
    detail["eps"] = eps
    detail["delta"] = g.delta
    detail["gapped_tau50_exchange"] = short.exchange_fidelity()
    detail["gapped_tau1e6_exchange"] = long.exchange_fidelity()
    checks = {
        "two_level_tau200": detail["two_level_tau200_exchange"] > 0.99,
        "three_level_tau500": detail["three_level_tau500_exchange"] > 0.99,
        "gapped_tau50_persists": detail["gapped_tau50_exchange"] > 0.99,
        "gapped_tau1e6_disappears": detail["gapped_tau1e6_exchange"] < 0.01,
    }
    detail["checks"] = checks
    return CriterionResult(8, "dynamics_oracle", all(checks.values()), detail)


def cross_method(samples: int = 4096) -> CriterionResult:
    detail = {}
    ok = True
    for spec, cycles, target in ((two_level(), 2, -np.eye(2)), (three_level(1.0), 3, np.eye(3))):
        cv = cross_validate(spec, samples=samples)
        m_int = holonomy_matrix(analytic_field(spec, 0.0, cycles * TWO_PI, cycles * samples)).m
        power = float(np.abs(m_int - target).max())
        power_closed = float(np.abs(analytic_holonomy(spec, cycles=cycles) - target).max())
        detail[spec.family] = {**cv.discrepancies, "power_integrated": power, "power_closed_form": power_closed}
        ok &= cv.max_discrepancy < 1e-4 and power < 1e-4 and power_closed < 1e-4
    return CriterionResult(9, "cross_method", ok, detail)


# --- randomized property suite -------------------------------------------------------------


def _random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


def _smooth_field(rng, n):
    """A(theta) = A0 + A1 cos theta + A2 sin 2 theta with random Hermitian coefficients."""
    a0, a1, a2 = (_random_hermitian(rng, n, 0.5) for _ in range(3))
    return lambda t: a0 + np.cos(t)[..., None, None] * a1 + np.sin(2 * t)[..., None, None] * a2


def eigensolver_residual(rng) -> float:
    n = int(rng.integers(2, 9))
    h = _random_hermitian(rng, n)
    if rng.random() < 0.2:  # force a degenerate pair
        u, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
        w = rng.normal(size=n)
        w[1] = w[0]
        h = (u * w) @ u.conj().T
    es = eig_hermitian_batch(h)
    scale = max(1.0, float(np.abs(h).max()))
    resid = np.abs(h @ es.vectors - es.vectors * es.values).max() / scale
    ortho = np.abs(es.vectors.conj().T @ es.vectors - np.eye(n)).max()
    return float(max(resid, ortho))


def convergence_order(rng) -> float:
    """Observed order of the midpoint ordered product from three grids."""
    n = int(rng.integers(2, 5))
    field_fn = _smooth_field(rng, n)
    prods = []
    for cells in (64, 128, 256):
        edges = np.linspace(0.0, TWO_PI, cells + 1)
        prods.append(ordered_product_exponential(edges, field_fn(midpoints(edges)), "forward"))
    e1 = np.abs(prods[0] - prods[1]).max()
    e2 = np.abs(prods[1] - prods[2]).max()
    return float(math.log2(e1 / e2))


def gauge_covariance(rng, cells: int = 2048) -> float:
    """M of A' = G^dag A G - diag(alpha') equals G(0) M G(0)^* for G = diag(exp(i alpha))."""
    from .holonomy import GaugeField

    n = int(rng.integers(2, 5))
    field_fn = _smooth_field(rng, n)
    amp, freq, drift, offset = rng.normal(size=n), rng.integers(1, 3, size=n), rng.normal(size=n), rng.uniform(0, TWO_PI, n)
    alpha = lambda t: amp * np.sin(freq * t[..., None]) + drift * t[..., None] + offset
    dalpha = lambda t: amp * freq * np.cos(freq * t[..., None]) + drift
    edges = np.linspace(0.0, TWO_PI, cells + 1)
    t = midpoints(edges)
    a = field_fn(t)
    g = np.exp(1j * alpha(t))
    a_new = np.conj(g)[..., :, None] * a * g[..., None, :] - np.eye(n) * dalpha(t)[..., None, :]
    m = holonomy_matrix(GaugeField(edges, a, "random")).m
    m_new = holonomy_matrix(GaugeField(edges, a_new, "random")).m
    g0 = np.exp(1j * alpha(np.array(0.0)))
    return float(np.abs(m_new - g0[:, None] * m * np.conj(g0)[None, :]).max())


def unitarity(rng) -> float:
    """Unitarity of ordered products and of M; reversing the path inverts them.

    U(reversed) = U^dagger holds for any field. M(reversed) = M^dagger needs
    the dynamical factor to commute with U, which holds for a field with a
    vanishing diagonal (the closed-form frames), so that case is tested.
    """
    from .holonomy import GaugeField

    n = int(rng.integers(2, 6))
    cells = int(rng.integers(16, 257))
    edges = np.sort(rng.uniform(0.0, TWO_PI, cells + 1))
    edges = edges[np.concatenate([[True], np.diff(edges) > 0])]
    gens = np.stack([_random_hermitian(rng, n) for _ in range(edges.size - 1)])
    u = ordered_product_exponential(edges, gens, "forward")
    u_rev = ordered_product_exponential(edges[::-1], gens[::-1], "forward")
    m = holonomy_matrix(GaugeField(edges, gens, "random")).m
    off = GaugeField(edges, gens * (1 - np.eye(n)), "random")
    m_off, m_off_rev = holonomy_matrix(off).m, holonomy_matrix(off.reversed()).m
    eye = np.eye(n)
    return float(
        max(
            np.abs(u.conj().T @ u - eye).max(),
            np.abs(u_rev - u.conj().T).max(),
            np.abs(m.conj().T @ m - eye).max(),
            np.abs(m_off_rev - m_off.conj().T).max(),
        )
    )


PROPERTY_LIMITS = {
    "eigensolver_residual": (eigensolver_residual, lambda x: x < 1e-12),
    "convergence_order": (convergence_order, lambda x: 1.8 < x < 2.2),
    "gauge_covariance": (gauge_covariance, lambda x: x < 1e-4),
    "unitarity": (unitarity, lambda x: x < 1e-10),
}


def property_suite(trials: int = 1000, seed: int = 20240601) -> CriterionResult:
    """``trials`` randomized draws, split evenly over the four properties."""
    rng = np.random.default_rng(seed)
    per = max(1, trials // len(PROPERTY_LIMITS))
    detail = {}
    ok = True
    for name, (fn, accept) in PROPERTY_LIMITS.items():
        values = [fn(rng) for _ in range(per)]
        failures = sum(not accept(x) for x in values)
        detail[name] = {"trials": per, "failures": failures, "min": float(np.min(values)), "max": float(np.max(values))}
        ok &= failures == 0
    return CriterionResult(10, "property_suite", ok, detail)


CRITERIA: dict[int, tuple[str, Callable[[], CriterionResult]]] = {
    1: ("two_level_holonomy", two_level_holonomy),
    2: ("gauge_integral", gauge_integral),
    3: ("three_level_holonomy", three_level_holonomy),
    4: ("eigenvalue_flow", eigenvalue_flow),
    5: ("eigenvector_periodicity", eigenvector_periodicity),
    6: ("exceptional_points", exceptional_points),
    7: ("sigma_flow_table", sigma_flow_table),
    8: ("dynamics_oracle", dynamics_oracle),
    9: ("cross_method", cross_method),
    10: ("property_suite", property_suite),
}


def select(only=None) -> list[int]:
    """Criterion numbers matching ``only`` (numbers or name substrings, comma separated)."""
    if not only:
        return list(CRITERIA)
    tokens = [t.strip() for t in (only.split(",") if isinstance(only, str) else only) if str(t).strip()]
    chosen = []
    for num, (name, _) in CRITERIA.items():
        if any((str(t).isdigit() and int(t) == num) or (not str(t).isdigit() and str(t) in name) for t in tokens):
            chosen.append(num)
    return chosen


def run_criterion(num: int) -> CriterionResult:
    name, fn = CRITERIA[num]
    start = time.perf_counter()
    try:
        result = fn()
    except Exception as exc:  # a crash is a failure with its reason
        result = CriterionResult(num, name, False, {"error": f"{type(exc).__name__}: {exc}"})
    result.seconds = time.perf_counter() - start
    return result


def run(only=None, progress: Callable[[CriterionResult], None] | None = None) -> list[CriterionResult]:
    results = []
    for num in select(only):
        res = run_criterion(num)
        if progress is not None:
            progress(res)
        results.append(res)
    return results


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def summary(results: list[CriterionResult]) -> str:
    payload = {
        "passed": all(r.passed for r in results),
        "criteria": [_jsonable({**asdict(r), "budget_s": r.budget, "within_budget": r.within_budget}) for r in results],
    }
    return json.dumps(payload, indent=2, sort_keys=True)
