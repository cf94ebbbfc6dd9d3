"""Exceptional points, gauge-potential poles and branch cuts in the complex theta plane.

Complexified eigen-branches are defined by analytic continuation of the bracket
K(theta) = cos(theta/2) Z + v sin(theta/2) F: start from the labelled branches
on the real axis and march along a vertical ray (then, if needed, along any
other path), matching eigenvalues between nearby points. K is complex
symmetric off the real axis, so eigenvectors are normalized with the bilinear
form psi^T psi = 1 and the gauge potential is evaluated with the bilinear
Hellmann-Feynman formula

    a_mn = -psi_m^T d psi_n = psi_m^T K' psi_n / (kappa_m - kappa_n),

which equals i A_mn on the real axis. For the two-level model a_12 is the
scalar f(theta) itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .csvio import write_csv
from .models import (
    THREE_LEVEL,
    TWO_LEVEL,
    ModelSpec,
    analytic_eigensystem,
    bracket,
    bracket_derivative,
    envelope,
    hamiltonian,
)
from .numerics import contour_integral, eig_hermitian_batch

POLE = "pole_of_A"
SPECTATOR = "spectator_degeneracy"
ANALYTIC = "analytic"
NEWTON = "newton"
RAY_STEP = 2e-3
DEDUP = 1e-6
X_OFFSET = 0.1234
CUT_TOL = 1e-6
NEWTON_MAX_STEP = 0.5


class ComplexAnalysisError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExceptionalPoint:
    theta: complex
    pair: tuple[int, int]
    kind: str
    residue: complex | None = None
    method: str = ANALYTIC

    @property
    def at_infinity(self) -> bool:
        return math.isinf(self.theta.imag)

    def folded(self) -> complex:
        return complex(self.theta.real % (2 * math.pi), self.theta.imag)


@dataclass(frozen=True)
class BranchCutCurve:
    pair: tuple[int, int]
    points: np.ndarray  # complex polyline
    energies: np.ndarray | None = None  # labelled E_n at the points, shape (P, N)


# --- continuation of complex branches --------------------------------------------


def _real_axis_frame(spec: ModelSpec, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labelled bracket eigenvalues and real eigenvectors at real theta."""
    if spec.family in (TWO_LEVEL, THREE_LEVEL):
        es = analytic_eigensystem(spec, x)
        return es.bracket_values.astype(complex), es.vectors.astype(complex)
    es = eig_hermitian_batch(bracket(spec, x).astype(complex))
    return es.values.astype(complex), es.vectors


def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))))


def _bilinear_normalize(vec: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Scale columns to psi^T psi = 1 with the sign closest to ``ref``."""
    norm = np.sqrt(np.einsum("...in,...in->...n", vec, vec))
    vec = vec / norm[..., None, :]
    sign = np.where(np.real(np.einsum("...in,...in->...n", ref, vec)) < 0, -1.0, 1.0)
    return vec * sign[..., None, :]


def continue_along(spec: ModelSpec, paths: np.ndarray, vectors: bool = False, start: np.ndarray | None = None):
    """Continue labelled bracket branches along paths of shape (S+1, P).

    ``paths[0]`` must be real unless ``start`` supplies the labelled bracket
    eigenvalues there (values only). Returns kappa of shape (S+1, P, N) and,
    with ``vectors=True``, bilinear-normalized eigenvectors (S+1, P, N, N).
    """
    paths = np.asarray(paths, dtype=complex)
    if paths.ndim == 1:
        paths = paths[:, None]
    n = spec.n
    perms = _permutations(n) if n <= 5 else None
    if start is not None:
        if vectors:
            raise ValueError("a value-only start cannot seed eigenvectors")
        kap0, vec0 = np.asarray(start, dtype=complex), None
    else:
        if np.abs(paths[0].imag).max(initial=0.0) > 0:
            raise ValueError("paths must start on the real axis")
        kap0, vec0 = _real_axis_frame(spec, paths[0].real)
    kap_all = np.empty(paths.shape + (n,), dtype=complex)
    kap_all[0] = kap0
    vec_all = np.empty(paths.shape + (n, n), dtype=complex) if vectors else None
    if vectors:
        vec_all[0] = vec0
    prev, prev2 = kap0, kap0
    vprev = vec0
    for k in range(1, paths.shape[0]):
        kmat = bracket(spec, paths[k])
        if vectors:
            w, v = np.linalg.eig(kmat)
        else:
            w = np.linalg.eigvals(kmat)
        pred = 2 * prev - prev2 if k > 1 else prev
        if perms is not None:
            cost = np.abs(w[:, perms] - pred[:, None, :]).sum(axis=-1)
            best = perms[np.argmin(cost, axis=1)]
        else:
            from scipy.optimize import linear_sum_assignment

            best = np.empty((w.shape[0], n), dtype=int)
            for p in range(w.shape[0]):
                r, c = linear_sum_assignment(np.abs(pred[p][:, None] - w[p][None, :]))
                best[p] = c[np.argsort(r)]
        w = np.take_along_axis(w, best, axis=1)
        kap_all[k] = w
        prev2, prev = prev, w
        if vectors:
            v = np.take_along_axis(v, best[:, None, :], axis=2)
            v = _bilinear_normalize(v, vprev)
            vec_all[k] = v
            vprev = v
    return (kap_all, vec_all) if vectors else kap_all


def _ray_paths(theta: np.ndarray, step: float = RAY_STEP) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=complex))
    s = max(1, int(math.ceil(np.abs(theta.imag).max(initial=0.0) / step)))
    frac = np.linspace(0.0, 1.0, s + 1)[:, None]
    return theta.real[None, :] + 1j * theta.imag[None, :] * frac


def complex_energies(spec: ModelSpec, theta, step: float = RAY_STEP) -> np.ndarray:
    """E_n at complex theta, continued from the real axis along vertical rays."""
    theta = np.atleast_1d(np.asarray(theta, dtype=complex))
    kap = continue_along(spec, _ray_paths(theta, step))[-1]
    return envelope(spec, theta)[:, None] * kap


def gauge_entry(spec: ModelSpec, theta: np.ndarray, kappa: np.ndarray, vecs: np.ndarray, pair: tuple[int, int]) -> np.ndarray:
    m, n = pair[0] - 1, pair[1] - 1
    dk = bracket_derivative(spec, theta)
    num = np.einsum("...i,...ij,...j->...", vecs[..., :, m], dk, vecs[..., :, n])
    return num / (kappa[..., m] - kappa[..., n])


def circle_gauge_entry(spec: ModelSpec, center: complex, radius: float, pair, samples: int = 256, substeps: int = 2):
    """a_mn on the circle points center + r e^{i phi_k}, continued from the real axis.

    The path goes up the vertical ray to the point at phi = 0 and then once
    around the circle counter-clockwise.
    """
    start = center + radius
    ray = _ray_paths(np.array([start]), RAY_STEP)[:, 0]
    phi = 2 * np.pi * np.arange(samples * substeps + 1) / (samples * substeps)
    circ = center + radius * np.exp(1j * phi)
    path = np.concatenate([ray, circ[1:]])
    kap, vec = continue_along(spec, path[:, None], vectors=True)
    kap, vec, pts = kap[ray.size - 1 :, 0], vec[ray.size - 1 :, 0], path[ray.size - 1 :]
    vals = gauge_entry(spec, pts, kap, vec, pair)
    closure = abs(vals[-1] - vals[0]) / max(abs(vals[0]), 1e-300)
    return pts[:-1:substeps], vals[:-1:substeps], closure


# --- characteristic polynomial and discriminant ---------------------------------------


def _charpoly(k: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial coefficients (highest first) by Faddeev-LeVerrier."""
    n = k.shape[-1]
    coeffs = [np.ones(k.shape[:-2], dtype=complex)]
    m = np.zeros_like(k)
    eye = np.eye(n)
    for j in range(1, n + 1):
        m = k @ m + coeffs[-1][..., None, None] * eye
        coeffs.append(-np.trace(k @ m, axis1=-2, axis2=-1) / j)
    return np.stack(coeffs, axis=-1)


def _sylvester_discriminant(p: np.ndarray) -> np.ndarray:
    """Discriminant of monic polynomials p (coefficients highest first, last axis)."""
    n = p.shape[-1] - 1
    if n == 1:
        return np.ones(p.shape[:-1], dtype=complex)
    dp = p[..., :-1] * np.arange(n, 0, -1)
    size = 2 * n - 1
    syl = np.zeros(p.shape[:-1] + (size, size), dtype=complex)
    for i in range(n - 1):
        syl[..., i, i : i + n + 1] = p
    for i in range(n):
        syl[..., n - 1 + i, i : i + n] = dp
    return (-1) ** (n * (n - 1) // 2) * np.linalg.det(syl)


def bracket_discriminant(spec: ModelSpec, theta) -> np.ndarray:
    """prod_{i<j} (kappa_i - kappa_j)^2 as an analytic function of theta."""
    theta = np.asarray(theta, dtype=complex)
    return _sylvester_discriminant(_charpoly(bracket(spec, theta)))


def discriminant(spec: ModelSpec, theta) -> np.ndarray:
    """Discriminant of the characteristic polynomial of H = R^{N(N-1)} disc(K)."""
    n = spec.n
    return envelope(spec, np.asarray(theta, dtype=complex)) ** (n * (n - 1)) * bracket_discriminant(spec, theta)


def _log_derivative(spec: ModelSpec, z: complex, h: float = 1e-4) -> tuple[complex, complex]:
    """L = d/dtheta log disc(H) and dL/dtheta; the bracket part by 5-point stencils."""
    offs = np.array([-2, -1, 0, 1, 2]) * h
    d = bracket_discriminant(spec, z + offs)
    d0 = d[2]
    d1 = (d[0] - 8 * d[1] + 8 * d[3] - d[4]) / (12 * h)
    d2 = (-d[0] + 16 * d[1] - 30 * d[2] + 16 * d[3] - d[4]) / (12 * h * h)
    lk = d1 / d0
    dlk = (d2 * d0 - d1 * d1) / (d0 * d0)
    if spec.envelope == "cos_half":
        n = spec.n
        k = n * (n - 1)
        lr = -0.5 * k * np.tan(z / 2)
        dlr = -0.25 * k / np.cos(z / 2) ** 2
    else:
        lr, dlr = 0.0, 0.0
    return lk + lr, dlk + dlr


def newton_root(
    spec: ModelSpec, seed: complex, max_iter: int = 100, tol: float = 1e-13, max_step: float = NEWTON_MAX_STEP, im_limit: float = 50.0
) -> complex | None:
    """Multiplicity-independent Newton step theta <- theta + L / L' on the log-derivative.

    Steps are capped at ``max_step`` so that seeds are not swept into the
    high-multiplicity root at the envelope zero.
    """
    z = complex(seed)
    for _ in range(max_iter):
        with np.errstate(all="ignore"):
            try:
                l, dl = _log_derivative(spec, z)
            except np.linalg.LinAlgError:
                return None
            if not (np.isfinite(l) and np.isfinite(dl)) or dl == 0:
                # landed on a root exactly
                return z if np.abs(discriminant(spec, z)) == 0 else None
            step = l / dl
        if abs(step) > max_step:
            step *= max_step / abs(step)
        z = z + step
        if not np.isfinite(z) or abs(z.imag) > im_limit:
            return None
        if abs(step) < tol * max(1.0, abs(z)):
            return z
    return None


# --- classification and residues -------------------------------------------------------


def branch_pair(spec: ModelSpec, theta: complex) -> tuple[int, int]:
    """Labels of the two continued bracket branches that coincide at theta.

    Labels refer to the strip -pi < Re theta <= pi, where they are ascending at
    theta = 0.
    """
    kap = continue_along(spec, _ray_paths(np.array([_centered(theta)])))[-1, 0]
    n = kap.size
    best = min(((abs(kap[i] - kap[j]), (i + 1, j + 1)) for i in range(n) for j in range(i + 1, n)))
    return best[1]


def _circle_max(spec, center, radius, pair, samples=64):
    _, vals, _ = circle_gauge_entry(spec, center, radius, pair, samples=samples)
    return float(np.abs(vals).max())


def classify_point(spec: ModelSpec, theta: complex, pair: tuple[int, int], radius: float = 1e-3) -> str:
    """pole_of_A if max |a_mn| on the circle grows like 1/r, else spectator."""
    theta = _centered(theta)
    big = _circle_max(spec, theta, radius, pair)
    small = _circle_max(spec, theta, radius / 4, pair)
    if big == 0.0:
        return SPECTATOR
    return POLE if small / big > 2.0 else SPECTATOR


def pole_residue(spec: ModelSpec, ep: ExceptionalPoint, radius: float = 1e-3, samples: int = 256) -> complex:
    """Residue of a_mn at the point, from a circle contour; cross-checked at radius / 2.

    The contour is placed around the copy of the point in -pi < Re theta <= pi,
    matching the labels of ``ep.pair``.
    """
    if ep.at_infinity:
        raise ComplexAnalysisError("point at infinity has no residue")
    center = _centered(ep.theta)

    def residue(r):
        pts, vals, closure = circle_gauge_entry(spec, center, r, ep.pair, samples=samples)
        if closure > 1e-6:
            raise ComplexAnalysisError(f"a_mn is not single-valued on the circle of radius {r:g} (mismatch {closure:.2e})")
        # the continued values are already on the contour's sample points
        return contour_integral(lambda z: vals if z.shape == vals.shape else np.full(z.shape, np.nan), center, r, samples)

    r1, r2 = residue(radius), residue(radius / 2)
    if abs(r1 - r2) > 1e-6 * max(1.0, abs(r1)):
        raise ComplexAnalysisError(f"residue changes from {r1} to {r2} on halving the radius: another singularity inside")
    return r1


# --- exceptional point sets ---------------------------------------------------------------


def _arccot(z):
    return np.arctan(1.0 / np.asarray(z, dtype=complex))


def _centered(z: complex) -> complex:
    """Same point shifted by a multiple of 2 pi into the strip -pi < Re theta <= pi."""
    re = math.pi - ((math.pi - z.real) % (2 * math.pi))
    return complex(re, z.imag)


def _fold(z: complex) -> complex:
    re = z.real % (2 * math.pi)
    if abs(re - 2 * math.pi) < 1e-12:
        re = 0.0
    return complex(re, z.imag)


def _spectator(spec: ModelSpec, method: str, residues: bool = True) -> ExceptionalPoint:
    """The real degeneracy at theta = pi, where the envelope vanishes; its residue is measured, not assumed."""
    ep = ExceptionalPoint(complex(math.pi, 0.0), (1, 2), SPECTATOR, None, method)
    if residues:
        ep = ExceptionalPoint(ep.theta, ep.pair, SPECTATOR, pole_residue(spec, ep), method)
    return ep


def analytic_exceptional_points(spec: ModelSpec, residues: bool = True) -> list[ExceptionalPoint]:
    """Closed-form exceptional points with the principal arccot branch, Re folded into [0, 2 pi).

    For three levels the coalescence condition is 27 w^4 + 9 w^2 + 1 = 0 with
    w = v tan(theta/2), i.e. v / w = sqrt(3 (exp(-+ 2 pi i / 3) - 1)) v.
    """
    if spec.v == 0:
        raise ValueError("v = 0 is excluded")
    v = spec.v
    out = [_spectator(spec, ANALYTIC, residues)]
    if spec.family == TWO_LEVEL:
        if abs(abs(v) - 1.0) < 1e-15:
            for sgn in (1.0, -1.0):
                out.append(ExceptionalPoint(complex(math.pi, sgn * math.inf), (1, 2), POLE, None, ANALYTIC))
            return out
        cands = [(_fold(complex(2 * _arccot(-1j * v))), (1, 2)), (_fold(complex(2 * _arccot(1j * v))), (1, 2))]
    elif spec.family == THREE_LEVEL:
        w = np.exp(2j * np.pi / 3)
        wc = np.exp(-2j * np.pi / 3)
        cands = [
            (_fold(complex(-2 * _arccot(np.sqrt(3 * (w - 1)) * v))), None),
            (_fold(complex(-2 * _arccot(np.sqrt(3 * (wc - 1)) * v))), None),
            (_fold(complex(2 * _arccot(np.sqrt(3 * (wc - 1)) * v))), None),
            (_fold(complex(2 * _arccot(np.sqrt(3 * (w - 1)) * v))), None),
        ]
    else:
        raise ValueError("closed-form exceptional points exist only for two_level and three_level")
    for theta, pair in cands:
        pair = pair or branch_pair(spec, theta)
        ep = ExceptionalPoint(theta, pair, POLE, None, ANALYTIC)
        if residues:
            ep = ExceptionalPoint(theta, pair, POLE, pole_residue(spec, ep), ANALYTIC)
        out.append(ep)
    return out


def default_seeds(spec: ModelSpec) -> list[complex]:
    seeds = [complex(math.pi, 0.0)]
    for re in np.linspace(0.0, 2 * math.pi, 9)[:-1]:
        for im in (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0):
            seeds.append(complex(re, im))
    return seeds


@dataclass
class NewtonResult:
    points: list[ExceptionalPoint]
    dropped: list[complex] = field(default_factory=list)


def newton_exceptional_points(
    spec: ModelSpec, seeds=None, residues: bool = True, im_limit: float = 20.0
) -> NewtonResult:
    """Roots of disc(H) from each seed, deduplicated within 1e-6 and classified."""
    seeds = default_seeds(spec) if seeds is None else list(seeds)
    roots: list[complex] = []
    dropped = []
    for s in seeds:
        if not np.isfinite(s):
            raise ValueError(f"seed {s!r} is not finite")
        z = newton_root(spec, s)
        if z is None or abs(z.imag) > im_limit:
            dropped.append(complex(s))
            continue
        z = _fold(z)
        if abs(z.imag) < 1e-10:
            z = complex(z.real, 0.0)
        if all(abs(z - r) > DEDUP for r in roots):
            roots.append(z)
    points = []
    for z in sorted(roots, key=lambda c: (round(c.real, 9), c.imag)):
        if z.imag == 0.0 and abs(z.real - math.pi) < 1e-9 and spec.envelope == "cos_half":
            pair = (1, 2)
        else:
            pair = branch_pair(spec, z)
        kind = classify_point(spec, z, pair)
        res = None
        if residues:
            res = pole_residue(spec, ExceptionalPoint(z, pair, kind), radius=1e-3)
        points.append(ExceptionalPoint(z, pair, kind, res, NEWTON))
    return NewtonResult(points, dropped)


# --- branch cuts -------------------------------------------------------------------------


def _is_periodic(spec: ModelSpec) -> bool:
    probe = np.array([0.3, 1.7])
    return bool(np.allclose(hamiltonian(spec, probe + 2 * np.pi), hamiltonian(spec, probe), atol=1e-12))


def _label_shift(spec: ModelSpec, x):
    """Shift taking Re theta into the centred strip, where branch labels match the exceptional point labels.

    Zero when H is not 2 pi periodic (the strip then carries different energies).
    """
    x = np.asarray(x, dtype=float)
    if not _is_periodic(spec):
        return np.zeros_like(x)
    return (np.pi - np.mod(np.pi - x, 2 * np.pi)) - x


def _grid_values(spec: ModelSpec, xs: np.ndarray, ys: np.ndarray, pair, sub: int = 4):
    """Re(E_m - E_n) on the grid, continued along each column from the real axis.

    Each column is labelled from its image in the centred strip. Returns
    (field, energies, kappa) with shapes (len(ys), len(xs)) and
    (len(ys), len(xs), N). ``ys`` must be uniform and contain 0.
    """
    xs = xs + _label_shift(spec, xs)
    m, n = pair[0] - 1, pair[1] - 1
    dy = ys[1] - ys[0]
    i0 = int(np.argmin(np.abs(ys)))
    energies = np.empty((ys.size, xs.size, spec.n), dtype=complex)
    kappas = np.empty_like(energies)
    for direction, rows in ((1, np.arange(i0, ys.size)), (-1, np.arange(i0, -1, -1))):
        count = rows.size - 1
        frac = np.arange(count * sub + 1) / sub  # in units of dy
        paths = xs[None, :] + 1j * direction * abs(dy) * frac[:, None]
        kap = continue_along(spec, paths)[::sub]
        theta = paths[::sub]
        energies[rows] = envelope(spec, theta)[..., None] * kap
        kappas[rows] = kap
    fld = (energies[..., m] - energies[..., n]).real
    return fld, energies, kappas


_SEGMENTS = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 5: [(3, 2), (0, 1)], 6: [(0, 2)], 7: [(3, 2)],
    8: [(2, 3)], 9: [(2, 0)], 10: [(0, 3), (1, 2)], 11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
}


def marching_squares(fld: np.ndarray, xs: np.ndarray, ys: np.ndarray, skip=None, overrides=None):
    """Zero-contour segments of a sampled field.

    Corners are ordered (x0,y0), (x1,y0), (x1,y1), (x0,y1); edge e joins
    corner e and corner e+1. Each segment is two end records
    (point, za, zb, (row, col) of corner a, corner label permutation).
    ``overrides`` maps a cell (j, i) to (corner values, corner permutations)
    for cells whose corners need relabelling.
    """
    segs = []
    ny, nx = fld.shape
    ident = None
    for j in range(ny - 1):
        for i in range(nx - 1):
            if skip is not None and skip[j, i]:
                continue
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            if overrides is not None and (j, i) in overrides:
                vals, perms = overrides[(j, i)]
            else:
                vals, perms = [fld[c[1], c[0]] for c in corners], [ident] * 4
            if not all(np.isfinite(vals)):
                continue
            idx = sum(1 << k for k, val in enumerate(vals) if val > 0)
            for e1, e2 in _SEGMENTS.get(idx, []):
                ends = []
                for e in (e1, e2):
                    a, b = corners[e], corners[(e + 1) % 4]
                    fa, fb = vals[e], vals[(e + 1) % 4]
                    t = fa / (fa - fb)
                    za = complex(xs[a[0]], ys[a[1]])
                    zb = complex(xs[b[0]], ys[b[1]])
                    ends.append((za + t * (zb - za), za, zb, (a[1], a[0]), perms[e]))
                segs.append(tuple(ends))
    return segs


def _chain(segments, tol: float) -> list[list[int]]:
    """Join segments sharing endpoints into polylines (indices into a point list)."""
    key = lambda z: (round(z.real / tol), round(z.imag / tol))
    adj: dict = {}
    for s_idx, (a, b) in enumerate(segments):
        adj.setdefault(key(a[0]), []).append((s_idx, 0))
        adj.setdefault(key(b[0]), []).append((s_idx, 1))
    used = [False] * len(segments)
    lines = []
    for s_idx in range(len(segments)):
        if used[s_idx]:
            continue
        used[s_idx] = True
        line = [(s_idx, 0), (s_idx, 1)]
        for grow_front in (False, True):
            while True:
                end_seg, end_side = line[0] if grow_front else line[-1]
                z = segments[end_seg][end_side][0]
                nxt = None
                for cand, side in adj.get(key(z), []):
                    if not used[cand]:
                        nxt = (cand, side)
                        break
                if nxt is None:
                    break
                used[nxt[0]] = True
                pair_ = [(nxt[0], nxt[1]), (nxt[0], 1 - nxt[1])]
                if grow_front:
                    line = pair_[::-1] + line
                else:
                    line = line + pair_
        # collapse duplicated joints
        lines.append(line)
    return lines


def _refine(spec: ModelSpec, pair, za, zb, ka, tol: float = 1e-7, max_iter: int = 60, sub: int = 16) -> np.ndarray:
    """Bisection for Re(E_m - E_n) = 0 on the cell edges [za, zb] (vectorized).

    Returns the points, |Re(E_m - E_n)| there (a large value means the sign
    change was a jump, not a zero) and the labelled energies.

    ``ka`` holds the labelled bracket eigenvalues at the grid corners za;
    each trial point is reached by continuing along the edge from there.
    """
    m, n = pair[0] - 1, pair[1] - 1
    # the corner labels were computed in the centred strip
    shift = _label_shift(spec, za.real)
    za, zb = za + shift, zb + shift

    def g(t):
        z = za + t * (zb - za)
        paths = za[None, :] + (z - za)[None, :] * np.linspace(0.0, 1.0, sub + 1)[:, None]
        kap = continue_along(spec, paths, start=ka)[-1]
        e = envelope(spec, z)[:, None] * kap
        return (e[:, m] - e[:, n]).real, e

    f0, _ = g(np.zeros(za.shape))
    lo, hi = np.zeros(za.shape), np.ones(za.shape)
    mid = 0.5 * (lo + hi)
    fm, e = f0, None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm, e = g(mid)
        if np.all(np.abs(fm) < tol):
            break
        left = np.sign(fm) == np.sign(f0)
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
    return za + mid * (zb - za) - shift, np.abs(fm), e


def branch_cuts(
    spec: ModelSpec,
    pair: tuple[int, int],
    window: tuple[float, float, float, float] = (0.0, 2 * math.pi, -3.0, 3.0),
    resolution: int = 96,
    refine: bool = True,
) -> list[BranchCutCurve]:
    """Zero set of Re(E_m - E_n) in the window (xmin, xmax, ymin, ymax).

    Columns are labelled by continuation from the real axis, so labels jump
    across the vertical seams above and below each exceptional point; cells
    on a seam are relabelled before contouring.
    """
    xmin, xmax, ymin, ymax = window
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("empty window")
    # columns are offset by a fraction of a cell so that none runs exactly
    # along a cut (the lines Re theta = 0, pi are cuts for some models)
    dx = (xmax - xmin) / resolution
    xs = xmin + dx * (np.arange(-1, resolution + 1) + 0.5 + X_OFFSET)
    dy = (ymax - ymin) / resolution
    lo_i, hi_i = int(math.floor(ymin / dy)), int(math.ceil(ymax / dy))
    lo_i, hi_i = min(lo_i, 0), max(hi_i, 0)
    ys = dy * np.arange(lo_i, hi_i + 1)
    fld, energies, kappas = _grid_values(spec, xs, ys, pair)
    # label seams: neighbouring columns whose branches match better after a
    # permutation. Seam cells are relabelled to the left column's labels; a
    # cell whose top and bottom rows want different permutations contains
    # the exceptional point itself and is skipped.
    left, right = energies[:, :-1], energies[:, 1:]
    perms = _permutations(spec.n)
    cost = np.stack([np.abs(right[..., p] - left).sum(axis=-1) for p in perms])
    best = np.argmin(cost, axis=0)  # (ny, nx-1)
    m, n = pair[0] - 1, pair[1] - 1
    skip = best[:-1] != best[1:]
    overrides = {}
    for j, i in zip(*np.nonzero(~skip & ((best[:-1] != 0) | (best[1:] != 0)))):
        p = perms[best[j, i]]
        vals = [fld[j, i], (energies[j, i + 1, p[m]] - energies[j, i + 1, p[n]]).real,
                (energies[j + 1, i + 1, p[m]] - energies[j + 1, i + 1, p[n]]).real, fld[j + 1, i]]
        overrides[(j, i)] = (vals, [None, p, p, None])
    segs = marching_squares(fld, xs, ys, skip, overrides)
    segs = [s for s in segs if ymin - 1e-12 <= s[0][0].imag <= ymax + 1e-12]
    if not segs:
        return []
    lines = _chain(segs, tol=1e-9 * max(1.0, abs(xmax) + abs(ymax)))
    pts = np.array([segs[s][side][0] for line in lines for s, side in line])
    if refine:
        recs = [segs[s][side] for line in lines for s, side in line]
        za = np.array([r[1] for r in recs])
        zb = np.array([r[2] for r in recs])
        ka = np.array([kappas[r[3]] if r[4] is None else kappas[r[3]][r[4]] for r in recs])
        pts, resid, energies = _refine(spec, pair, za, zb, ka)
        good = resid < CUT_TOL
    else:
        good = np.ones(pts.size, dtype=bool)
        energies = None
    curves, k = [], 0
    for line in lines:
        poly, ok = pts[k : k + len(line)], good[k : k + len(line)]
        k += len(line)
        # a sign change without a zero (label seam) splits the polyline
        for piece in np.split(np.arange(poly.size), np.flatnonzero(~ok)):
            piece = piece[ok[piece]]
            if piece.size < 2:
                continue
            seg = poly[piece]
            keep = np.concatenate([[True], np.abs(np.diff(seg)) > 1e-12])
            if keep.sum() >= 2:
                e = None if energies is None else energies[k - len(line) + piece][keep]
                curves.append(BranchCutCurve(pair, seg[keep], e))
    return curves


def cut_residual(spec: ModelSpec, curve: BranchCutCurve, substeps: int = 16) -> float:
    """max |Re(E_m - E_n)| along the curve.

    Labels are fixed at the first point (from the stored energies, or a
    vertical ray when there are none) and continued along the polyline, so
    the check covers both the zero condition and label continuity.
    """
    pts = curve.points
    m, n = curve.pair[0] - 1, curve.pair[1] - 1
    # start where the envelope is nonzero (a cut may end on the H = 0 point)
    env = np.abs(envelope(spec, pts))
    s = int(np.argmax(env > 1e-8 * max(1.0, float(env.max()))))
    if curve.energies is None:
        e0 = complex_energies(spec, pts[s : s + 1] + _label_shift(spec, pts[s : s + 1].real))[0]
    else:
        e0 = curve.energies[s]
    kap0 = (e0 / envelope(spec, pts[s]))[None, :]
    frac = np.linspace(0.0, 1.0, substeps + 1)[1:]
    worst = 0.0
    for part in (pts[s:], pts[s::-1]):
        if part.size < 2:
            continue
        path = np.concatenate([part[:1]] + [a + (b - a) * frac for a, b in zip(part[:-1], part[1:])])
        kap = continue_along(spec, path[:, None], start=kap0)[:, 0]
        e = envelope(spec, path)[:, None] * kap
        worst = max(worst, float(np.abs((e[::substeps, m] - e[::substeps, n]).real).max()))
    return worst


# --- Mercator map -----------------------------------------------------------------------------


def gudermannian(y):
    return 2 * np.arctan(np.tanh(np.asarray(y, dtype=float) / 2))


@dataclass
class MercatorMap:
    spec: ModelSpec
    points: list[ExceptionalPoint]
    cuts: list[BranchCutCurve]

    def point_rows(self):
        rows = []
        for ep in self.points:
            z = ep.folded()
            res = ep.residue if ep.residue is not None else complex("nan")
            rows.append([z.real, float(gudermannian(z.imag)), ep.kind, ep.pair[0], ep.pair[1], res.real, res.imag])
        return rows

    def cut_rows(self):
        rows = []
        for cid, c in enumerate(self.cuts):
            for z in c.points:
                rows.append([cid, c.pair[0], c.pair[1], z.real, float(gudermannian(z.imag))])
        return rows

    def to_csv(self, points_path, cuts_path, meta=None):
        meta = dict(meta or {})
        meta.setdefault("model", self.spec.to_text())
        meta.setdefault("vertical_axis", "gd(Im theta) = 2 arctan(tanh(Im theta / 2))")
        write_csv(points_path, ["re_theta", "gd_im_theta", "tag", "m", "n", "re_residue", "im_residue"], self.point_rows(), meta)
        write_csv(cuts_path, ["curve", "m", "n", "re_theta", "gd_im_theta"], self.cut_rows(), meta)


def crossing_pairs(spec: ModelSpec) -> list[tuple[int, int]]:
    return [(1, 2)] if spec.n == 2 else [(i, i + 1) for i in range(1, spec.n)]


def mercator_map(
    spec: ModelSpec, pairs=None, resolution: int = 96, im_extent: float = 6.0, residues: bool = True
) -> MercatorMap:
    """Exceptional points and branch cuts over one period, ready for the Mercator projection."""
    if spec.family in (TWO_LEVEL, THREE_LEVEL):
        points = analytic_exceptional_points(spec, residues=residues)
    else:
        points = newton_exceptional_points(spec, residues=residues).points
    pairs = crossing_pairs(spec) if pairs is None else [tuple(p) for p in pairs]
    cuts = []
    cell = 2 * im_extent / resolution
    # cuts end on branch points and on real degeneracies; periodic images
    # close cuts ending on Re theta = 0 or 2 pi
    ends = [p.folded() + k * 2 * math.pi for p in points if not p.at_infinity for k in (-1, 0, 1)]
    for pair in pairs:
        for c in branch_cuts(spec, pair, (0.0, 2 * math.pi, -im_extent, im_extent), resolution):
            cuts.append(_attach_endpoints(spec, c, ends, 2 * cell))
    return MercatorMap(spec, points, cuts)


def _attach_endpoints(spec: ModelSpec, curve: BranchCutCurve, ends, reach: float) -> BranchCutCurve:
    """Close the gap between a cut and the degeneracy it ends on (the grid cannot resolve the last cell)."""
    pts, e = curve.points, curve.energies
    for end in (0, -1):
        near = [p for p in ends if abs(p - pts[end]) < reach]
        if not near:
            continue
        p = min(near, key=lambda q: abs(q - pts[end]))
        if e is not None:
            path = pts[end] + (p - pts[end]) * np.linspace(0.0, 1.0, 17)
            kap = continue_along(spec, path[:, None], start=(e[end] / envelope(spec, pts[end]))[None, :])[-1, 0]
            ep = (envelope(spec, p) * kap)[None, :]
            e = np.concatenate([ep, e]) if end == 0 else np.concatenate([e, ep])
        pts = np.concatenate([[p], pts]) if end == 0 else np.concatenate([pts, [p]])
    return BranchCutCurve(curve.pair, pts, e)
