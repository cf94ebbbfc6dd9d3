"""Parametric Hamiltonian families and their closed-form eigen-solutions.

Every family has the shape

    H(theta) = R(theta) * [cos(theta/2) Z + v sin(theta/2) F]

with an envelope R that is either cos(theta/2) (H is 2 pi periodic) or 1 (H is
2 pi anti-periodic). The bracket K(theta) = cos(theta/2) Z + v sin(theta/2) F
never vanishes and shares its eigenvectors with H, so K is what the analytic
formulas below diagonalize.

Continuous eigen-branches carry 1-based labels n that agree with the
ascending order at theta = 0. Along theta they follow the analytic
continuation, which for the two- and three-level models means
kappa_n(theta + 2 pi) = -kappa_{n+1}(theta) for the bracket eigenvalues and
therefore E_n(theta + 2 pi) = E_{n+1}(theta) when v > 0 (indices mod N). For
v < 0 the shift runs the other way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .numerics import EigenSystem, eig_hermitian_batch

TWO_LEVEL = "two_level"
THREE_LEVEL = "three_level"
SIGMA_GENERAL = "sigma_general"
N_LEVEL_RANK_ONE = "n_level_rank_one"
FAMILIES = (TWO_LEVEL, THREE_LEVEL, SIGMA_GENERAL, N_LEVEL_RANK_ONE)

COS_HALF = "cos_half"
UNIT = "unit"
ENVELOPES = (COS_HALF, UNIT)

DEFAULT_V = {TWO_LEVEL: 1.0 / math.sqrt(3.0), THREE_LEVEL: 1.0, SIGMA_GENERAL: 1.0, N_LEVEL_RANK_ONE: 1.0}
OVERLAP_THRESHOLD = 1e-10

SIGMA = {
    1: np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]),
    2: np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
    3: np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
    4: np.diag([1.0, 0.0, -1.0]),
    5: np.diag([1.0, -2.0, 1.0]) / math.sqrt(3.0),
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """One member of a Hamiltonian family.

    ``c1``, ``c2``, ``c3``, ``c5`` only matter for ``sigma_general``; ``w`` and
    ``z`` (the diagonal of Z) only for ``n_level_rank_one``.
    """

    family: str
    n: int
    v: float
    envelope: str = COS_HALF
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c5: float = 0.0
    w: tuple[float, ...] = ()
    z: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ModelError(f"unknown family {self.family!r}")
        if self.envelope not in ENVELOPES:
            raise ModelError(f"unknown envelope {self.envelope!r}")
        expected = {TWO_LEVEL: 2, THREE_LEVEL: 3, SIGMA_GENERAL: 3}.get(self.family)
        if expected is not None and self.n != expected:
            raise ModelError(f"{self.family} requires N={expected}, got N={self.n}")
        if not math.isfinite(self.v):
            raise ModelError("v must be finite")
        for name in ("c1", "c2", "c3", "c5"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"{name} must be finite")
        if self.family == N_LEVEL_RANK_ONE:
            if not 2 <= self.n <= 8:
                raise ModelError("n_level_rank_one supports 2 <= N <= 8")
            if len(self.w) != self.n or len(self.z) != self.n:
                raise ModelError("w and z must both have N entries")
            norm = math.sqrt(sum(x * x for x in self.w))
            if abs(norm - 1.0) > 1e-12:
                raise ModelError(f"|w| = {norm!r}, must be normalized")
            if len(set(self.z)) != self.n:
                raise ModelError("Z must have distinct eigenvalues")
            # Z is diagonal, so its eigenvectors are the unit vectors
            small = [i for i, x in enumerate(self.w) if abs(x) < OVERLAP_THRESHOLD]
            if small:
                raise ModelError(f"eigenvectors {small} of Z have no overlap with w")

    def with_v(self, v: float) -> "ModelSpec":
        return replace(self, v=v)

    def to_text(self) -> str:
        """Canonical ``key=value`` block; ``from_text`` inverts it exactly."""
        lines = [
            f"family={self.family}",
            f"N={self.n}",
            f"v={self.v!r}",
            f"envelope={self.envelope}",
        ]
        if self.family == SIGMA_GENERAL:
            lines += [f"c{k}={getattr(self, f'c{k}')!r}" for k in (1, 2, 3, 5)]
        if self.family == N_LEVEL_RANK_ONE:
            lines.append("w=" + ",".join(repr(x) for x in self.w))
            lines.append("z=" + ",".join(repr(x) for x in self.z))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        raw: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ModelError(f"malformed line {line!r}")
            raw[key.strip()] = value.strip()
        try:
            kwargs: dict = {"family": raw["family"], "n": int(raw["N"]), "v": float(raw["v"])}
        except KeyError as exc:
            raise ModelError(f"missing key {exc.args[0]!r}") from None
        if "envelope" in raw:
            kwargs["envelope"] = raw["envelope"]
        for k in ("c1", "c2", "c3", "c5"):
            if k in raw:
                kwargs[k] = float(raw[k])
        for k in ("w", "z"):
            if raw.get(k):
                kwargs[k] = tuple(float(x) for x in raw[k].split(","))
        return cls(**kwargs)


def two_level(v: float = DEFAULT_V[TWO_LEVEL], envelope: str = COS_HALF) -> ModelSpec:
    return ModelSpec(TWO_LEVEL, 2, v, envelope)


def three_level(v: float = DEFAULT_V[THREE_LEVEL], envelope: str = COS_HALF) -> ModelSpec:
    return ModelSpec(THREE_LEVEL, 3, v, envelope)


def sigma_general(
    c1: float = 1.0, c2: float = 1.0, c3: float = 1.0, c5: float = 0.0, v: float = 1.0, envelope: str = COS_HALF
) -> ModelSpec:
    return ModelSpec(SIGMA_GENERAL, 3, v, envelope, c1=c1, c2=c2, c3=c3, c5=c5)


def n_level_rank_one(
    w: Sequence[float] | None = None,
    z: Sequence[float] | None = None,
    n: int | None = None,
    v: float = 1.0,
    envelope: str = COS_HALF,
) -> ModelSpec:
    """Rank-one coupling family; defaults to uniform w and Z = diag(1, ..., -1)."""
    if n is None:
        n = len(w) if w is not None else len(z) if z is not None else 4
    if w is None:
        w = np.full(n, 1.0 / math.sqrt(n))
    if z is None:
        z = np.linspace(1.0, -1.0, n)
    w = np.asarray(w, dtype=float)
    w = w / np.linalg.norm(w)
    return ModelSpec(N_LEVEL_RANK_ONE, n, v, envelope, w=tuple(map(float, w)), z=tuple(map(float, z)))


def default_spec(family: str) -> ModelSpec:
    return {
        TWO_LEVEL: two_level,
        THREE_LEVEL: three_level,
        SIGMA_GENERAL: sigma_general,
        N_LEVEL_RANK_ONE: n_level_rank_one,
    }[family]()


# --- matrices ---------------------------------------------------------------


def z_matrix(spec: ModelSpec) -> np.ndarray:
    if spec.family == TWO_LEVEL:
        return np.diag([1.0, -1.0])
    if spec.family == THREE_LEVEL:
        return SIGMA[4].copy()
    if spec.family == SIGMA_GENERAL:
        return SIGMA[4] + spec.c5 * SIGMA[5]
    return np.diag(spec.z)


def f_matrix(spec: ModelSpec) -> np.ndarray:
    if spec.family in (TWO_LEVEL, THREE_LEVEL):
        return np.ones((spec.n, spec.n))
    if spec.family == SIGMA_GENERAL:
        return np.eye(3) + spec.c1 * SIGMA[1] + spec.c2 * SIGMA[2] + spec.c3 * SIGMA[3]
    w = np.asarray(spec.w)
    return np.outer(w, w)


def envelope(spec: ModelSpec, theta):
    theta = np.asarray(theta)
    if spec.envelope == COS_HALF:
        return np.cos(theta / 2)
    return np.ones_like(theta, dtype=theta.dtype if np.iscomplexobj(theta) else float)


def bracket(spec: ModelSpec, theta) -> np.ndarray:
    """K(theta) = cos(theta/2) Z + v sin(theta/2) F, shape theta.shape + (N, N)."""
    theta = np.asarray(theta)
    c = np.cos(theta / 2)[..., None, None]
    s = np.sin(theta / 2)[..., None, None]
    return c * z_matrix(spec) + spec.v * s * f_matrix(spec)


def bracket_derivative(spec: ModelSpec, theta) -> np.ndarray:
    theta = np.asarray(theta)
    c = np.cos(theta / 2)[..., None, None]
    s = np.sin(theta / 2)[..., None, None]
    return -0.5 * s * z_matrix(spec) + 0.5 * spec.v * c * f_matrix(spec)


def hamiltonian(spec: ModelSpec, theta) -> np.ndarray:
    """H(theta) for real or complex theta (scalar or array)."""
    return envelope(spec, theta)[..., None, None] * bracket(spec, theta)


def sigma_hamiltonian(spec: ModelSpec, theta) -> np.ndarray:
    if spec.family != SIGMA_GENERAL:
        raise ModelError(f"sigma_hamiltonian needs a sigma_general spec, got {spec.family}")
    return hamiltonian(spec, theta)


# --- auxiliary angles ----------------------------------------------------------


def chi_angle(theta, v: float):
    """Continuous angle with tan(chi/2) = v tan(theta/2) and chi(theta + 2 pi) = chi(theta) + 2 pi sgn v."""
    theta = np.asarray(theta, dtype=float)
    av = abs(v)
    return math.copysign(1.0, v) * (theta + 2.0 * np.angle((1.0 + av) + (1.0 - av) * np.exp(-1j * theta)))


def chi_rate(theta, v: float):
    """d chi / d theta = v / (cos^2(theta/2) + v^2 sin^2(theta/2)); valid for complex theta."""
    theta = np.asarray(theta)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    return v / (c * c + v * v * s * s)


def eta_angle(theta, v: float):
    """Continuous angle of the three-level closed form, eta(theta + 2 pi) = eta(theta) + 2 pi."""
    theta = np.asarray(theta, dtype=float)
    k = np.floor(theta / (2 * np.pi))
    t0 = theta - 2 * np.pi * k
    a = abs(v) * np.sin(t0 / 2)
    c = np.cos(t0 / 2)
    m2 = a * a + c * c / 3.0
    r3 = np.clip((a * a / m2) ** 1.5, 0.0, 1.0)
    cos_half = np.where(c >= 0, 1.0, -1.0) * np.sqrt(1.0 - r3 * r3)
    return 2 * np.pi * k + 2.0 * np.arctan2(r3, cos_half)


def _sgn(x):
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def rt_rs_rc(xi):
    """(Rt, Rs, Rc) of a real angle; Rt is +-inf where Rc vanishes."""
    xi = np.asarray(xi, dtype=float)
    sn, cs = np.sin(xi), np.cos(xi)
    rs = 3.0 ** -0.25 * _sgn(sn) * np.sqrt(np.abs(sn))
    rc = _sgn(cs) * np.sqrt(np.abs(cs))
    with np.errstate(divide="ignore", invalid="ignore"):
        rt = np.where(rc != 0, rs / np.where(rc != 0, rc, 1.0), _sgn(sn) * np.inf)
    return rt, rs, rc


def rt_inverse(q):
    """Angle y in (-pi/2, pi/2] with Rt(y) = q."""
    q = np.asarray(q, dtype=float)
    return np.arctan(math.sqrt(3.0) * q * np.abs(q))


# --- closed-form eigen-branches ------------------------------------------------


@dataclass(frozen=True)
class AnalyticBranch:
    n: int
    value: float  # P_n (two-level) or Q_n (three-level)
    angle: float  # chi (two-level) or eta (three-level), radians


@dataclass(frozen=True)
class AnalyticEigensystem:
    """Branch-labelled closed-form solution on a theta grid.

    ``values[..., n-1]`` is the continuous branch E_n (not sorted) and
    ``vectors[..., :, n-1]`` its eigenvector in the continuous gauge.
    """

    theta: np.ndarray
    values: np.ndarray
    vectors: np.ndarray
    ratio: np.ndarray  # P_n or Q_n = kappa_n / cos(theta/2)
    angle: np.ndarray
    bracket_values: np.ndarray

    def branches(self, index: int = 0) -> list[AnalyticBranch]:
        ratio = np.atleast_2d(self.ratio)[index]
        angle = float(np.atleast_1d(self.angle)[index])
        return [AnalyticBranch(n + 1, float(ratio[n]), angle) for n in range(ratio.size)]

    def sorted(self) -> EigenSystem:
        order = np.argsort(self.values, axis=-1, kind="stable")
        vals = np.take_along_axis(self.values, order, axis=-1)
        vecs = np.take_along_axis(self.vectors, order[..., None, :], axis=-1)
        return EigenSystem(vals, vecs)


def _require(spec: ModelSpec, family: str) -> None:
    if spec.family != family:
        raise ModelError(f"expected a {family} spec, got {spec.family}")
    if spec.v == 0:
        raise ModelError("v = 0 is excluded: the closed forms degenerate")


def _bracket_values_2(theta, v: float):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    rho = np.sqrt(c * c + v * v * s * s)
    return np.stack([v * s - rho, v * s + rho], axis=-1)


def analytic_eigensystem_2(spec: ModelSpec, theta) -> AnalyticEigensystem:
    """Two-level closed form in the continuous chi gauge.

    Psi_1 = (sin chi/4, -cos chi/4) and Psi_2 = (cos chi/4, sin chi/4). At
    theta = 0 these coincide with the normalized (P_n + 1, P_n - 1) vectors.
    """
    _require(spec, TWO_LEVEL)
    theta = np.asarray(theta, dtype=float)
    kappa = _bracket_values_2(theta, spec.v)
    chi = chi_angle(theta, spec.v)
    q = chi / 4
    vecs = np.empty(theta.shape + (2, 2))
    vecs[..., 0, 0] = np.sin(q)
    vecs[..., 1, 0] = -np.cos(q)
    vecs[..., 0, 1] = np.cos(q)
    vecs[..., 1, 1] = np.sin(q)
    c = np.cos(theta / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = kappa / c[..., None]
    values = envelope(spec, theta)[..., None] * kappa
    return AnalyticEigensystem(theta, values, vecs, ratio, chi, kappa)


def p_closed_form(theta, v: float):
    """P_n(theta) = v tan(theta/2) + (-1)^n sgn(v cos(theta/2)) sqrt(1 + v^2 tan^2(theta/2))."""
    theta = np.asarray(theta, dtype=float)
    t = np.tan(theta / 2)
    sg = _sgn(v * np.cos(theta / 2))
    root = np.sqrt(1 + v * v * t * t)
    return np.stack([v * t - sg * root, v * t + sg * root], axis=-1)


def _sorted_bracket_values_3(theta, v: float):
    """Ascending eigenvalues of the three-level bracket (trigonometric cubic roots).

    Written so that no root suffers cancellation near cos(theta/2) = 0, where
    the two small roots are of order cos(theta/2) while a ~ v.
    """
    a_signed = v * np.sin(theta / 2)
    c = np.cos(theta / 2)
    a = np.abs(a_signed)
    m = np.sqrt(a * a + c * c / 3.0)
    # cos(phi) = (a/m)^3, sin(phi) from m^6 - a^6 = (c^2/3)(m^4 + m^2 a^2 + a^4)
    phi = np.arctan2(np.abs(c) / math.sqrt(3.0) * np.sqrt(m**4 + m * m * a * a + a**4), a**3)
    low = -(c * c / 3.0) / (a + m)  # a - m
    sq = 2 * np.sin(phi / 6) ** 2
    lin = math.sqrt(3.0) * np.sin(phi / 3)
    roots = np.stack([low + m * (sq - lin), low + m * (sq + lin), a + 2 * m * np.cos(phi / 3)], axis=-1)
    # the cubic is odd under (kappa, a) -> (-kappa, -a)
    neg = (a_signed < 0)[..., None]
    return np.where(neg, -roots[..., ::-1], roots)


def _labelled_bracket_values(theta, sorted_fn, v: float, n: int):
    """Apply kappa_n(theta) = (-1)^j kappa_{n + j sgn v}(theta - 2 pi j) with sorted values in sector 0.

    Reversing the sign of v mirrors theta, so the cyclic shift runs the other way.
    """
    j = np.round(theta / (2 * np.pi)).astype(int)
    theta0 = theta - 2 * np.pi * j
    asc = sorted_fn(theta0, v)
    shift = j if v > 0 else -j
    idx = (np.arange(n) + shift[..., None]) % n
    sign = np.where(j % 2 == 0, 1.0, -1.0)[..., None]
    return sign * np.take_along_axis(asc, idx, axis=-1)


def _polish(x, coeffs, iters: int = 4):
    """Newton-polish roots x of sum(coeffs[k] * x^k) (coefficient arrays broadcast with x)."""
    # callers evaluate both the Q and the 1/Q branch and discard one; the
    # discarded entries may run off to inf, so overflow is not an error here
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(iters):
            p = np.zeros_like(x)
            dp = np.zeros_like(x)
            for k in range(len(coeffs) - 1, -1, -1):
                dp = dp * x + p
                p = p * x + coeffs[k]
            ok = np.abs(dp) > 1e-300
            x = np.where(ok, x - p / np.where(ok, dp, 1.0), x)
    return x


def _three_level_vectors(kappa, c, a):
    """Normalized (Q(Q+1), Q^2-1, Q(Q-1)) with Q = kappa/c, evaluated without dividing by zero."""
    c = np.broadcast_to(c[..., None], kappa.shape)
    a = np.broadcast_to(a[..., None], kappa.shape)
    small = np.abs(kappa) <= np.abs(c)
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = np.where(small, kappa / np.where(small, c, 1.0), 0.0)
        u0 = np.where(~small, c / np.where(~small, kappa, 1.0), 0.0)
    # finite roots of c Q^3 - 3a Q^2 - c Q + a, and of a u^3 - c u^2 - 3a u + c for u = 1/Q
    q = _polish(q0, [a, -c, -3 * a, c])
    u = _polish(u0, [c, -3 * a, -c, a])
    vq = np.stack([q * (q + 1), q * q - 1, q * (q - 1)], axis=-2)
    vu = np.stack([1 + u, 1 - u * u, 1 - u], axis=-2)
    vec = np.where(small[..., None, :], vq, vu)
    return vec / np.linalg.norm(vec, axis=-2, keepdims=True)


def analytic_eigensystem_3(spec: ModelSpec, theta) -> AnalyticEigensystem:
    """Three-level closed form; vectors are the normalized (Q(Q+1), Q^2-1, Q(Q-1)).

    In homogeneous form (kappa(kappa+c), kappa^2-c^2, kappa(kappa-c)) the
    vector is quadratic in (kappa, c), hence continuous through the H = 0
    points and exactly 6 pi periodic with Psi_n(theta + 2 pi) = Psi_{n+1}(theta).
    At theta = pi (mod 2 pi) the left limit is returned.
    """
    _require(spec, THREE_LEVEL)
    theta = np.asarray(theta, dtype=float)
    c_raw = np.cos(theta / 2)
    # H = 0 points: kappa_1 = kappa_2 there, take the limit from the left
    theta_eval = np.where(np.abs(c_raw) < 1e-12, theta - 1e-9, theta)
    kappa = _labelled_bracket_values(theta_eval, _sorted_bracket_values_3, spec.v, 3)
    c = np.cos(theta_eval / 2)
    a = spec.v * np.sin(theta_eval / 2)
    vecs = _three_level_vectors(kappa, c, a)
    kappa_exact = _labelled_bracket_values(theta, _sorted_bracket_values_3, spec.v, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = kappa_exact / c_raw[..., None]
    values = envelope(spec, theta)[..., None] * kappa_exact
    return AnalyticEigensystem(theta, values, vecs, ratio, eta_angle(theta, spec.v), kappa_exact)


def analytic_eigensystem(spec: ModelSpec, theta) -> AnalyticEigensystem:
    if spec.family == TWO_LEVEL:
        return analytic_eigensystem_2(spec, theta)
    if spec.family == THREE_LEVEL:
        return analytic_eigensystem_3(spec, theta)
    raise ModelError(f"no closed form for family {spec.family}")


def q_closed_form(theta, v: float):
    """Q_n(theta) from the eta parametrization, n = 1, 2, 3 (theta not an odd multiple of pi)."""
    eta = eta_angle(theta, v)
    s = np.sin(eta / 2)
    cb = np.cbrt(s)
    out = []
    for n in (1, 2, 3):
        eta_n = (2 * n - 4) * np.pi
        out.append(_sgn(np.cos(eta / 2)) / np.sqrt(3 * (1 - cb * cb)) * (cb - 2 * np.sin((eta - 2 * eta_n) / 6)))
    return np.stack(out, axis=-1) * math.copysign(1.0, v)


def xi_angle(theta, v: float):
    """Angle with Q_2(theta) = Rt(xi / 6); increases monotonically by 2 pi per cycle."""
    theta = np.asarray(theta, dtype=float)
    k = np.floor(theta / (2 * np.pi))
    es = analytic_eigensystem_3(three_level(v), theta - 2 * np.pi * k)
    return 2 * np.pi * k + 6 * rt_inverse(np.asarray(es.ratio)[..., 1])


# --- gauge functions -------------------------------------------------------------


def gauge_function_f(spec: ModelSpec, theta):
    """f(theta) = (1/4) d chi / d theta, from the analytic derivative of chi."""
    _require(spec, TWO_LEVEL)
    return 0.25 * chi_rate(theta, spec.v)


def gauge_function_g(spec: ModelSpec, theta):
    """g(theta) = <Psi_1 | d/dtheta Psi_3>, so that A_13(theta) = i g(theta).

    Evaluated through <Psi_1|K'|Psi_3> / (kappa_3 - kappa_1) on the closed
    forms; there is no numerical differentiation.
    """
    _require(spec, THREE_LEVEL)
    theta = np.asarray(theta, dtype=float)
    es = analytic_eigensystem_3(spec, theta)
    dk = bracket_derivative(spec, theta).real
    p1 = es.vectors[..., :, 0]
    p3 = es.vectors[..., :, 2]
    num = np.einsum("...i,...ij,...j->...", p1, dk, p3)
    return num / (es.bracket_values[..., 2] - es.bracket_values[..., 0])


def numeric_eigensystem(spec: ModelSpec, theta) -> EigenSystem:
    """Sorted eigen-decomposition of H(theta) with the Jacobi kernel."""
    return eig_hermitian_batch(hamiltonian(spec, np.asarray(theta, dtype=float)))


def spec_fields() -> list[str]:
    return [f.name for f in fields(ModelSpec)]
