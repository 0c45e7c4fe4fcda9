"""Energy evaluation for amplitude-damped Dirichlet functionals.

The functional is

    J(v)   = ∫ j(x, ∇v) / (1 + b(x)|v|)²  +  ½∫ v²  −  ∫ f v ,
    J_M(v) = same with the denominator amplitude clamped at level M,

evaluated with the grid quadrature. The integrand j must satisfy quadratic
growth bounds α|ξ|² ≤ j(x,ξ) ≤ β|ξ|², a gradient bound |j_ξ| ≤ γ|ξ|,
j(x,0)=0, and convexity in ξ — `certify` spot-checks all of them plus the
consistency of the supplied ξ-gradient on randomized samples.

The residual is the exact gradient of the *discrete* energy (differentiate
after discretizing): every term, including the chain-rule derivative of the
clamped amplitude in the denominator, is assembled from the same quadrature
formula that defines eval_JM, which is what makes the finite-difference
consistency check hold to near machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import (
    Array,
    DiscreteField,
    Grid,
    element_gradients,
    values_at_quadrature,
)

#: kept in sync with the residual: d|T_M(s)|/ds = sign(s) inside the clamp
#: (sign(0) = 0) and 0 strictly beyond it.
def _clamp_abs_derivative(s: Array, M: float) -> Array:
    return np.where(np.abs(s) <= M, np.sign(s), 0.0)


@dataclass(frozen=True)
class Integrand:
    """Gradient integrand j(x, ξ) with growth constants and its ξ-gradient.

    `density` and `grad` receive coordinate and gradient arrays of matching
    leading shape (..., dim) and must broadcast: density returns (...,),
    grad returns (..., dim).
    """

    label: str
    alpha: float
    beta: float
    gamma: float
    density: Callable[[Array, Array], Array]
    grad: Callable[[Array, Array], Array]

    def __post_init__(self):
        if not (0 < self.alpha <= self.beta):
            raise ValueError(f"need 0 < alpha <= beta, got ({self.alpha}, {self.beta})")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class CoefficientField:
    """Amplitude coefficient b sampled at the grid's quadrature points."""

    label: str
    grid: Grid
    quad_values: Array        # (E, Q)
    lower_bound: float        # A >= 0; A > 0 unlocks the test-class audit
    upper_bound: float        # B >= 0 (0 only for the identically-zero field)

    def __post_init__(self):
        q = np.asarray(self.quad_values, dtype=float)
        if q.shape != self.grid.quad_weights.shape:
            raise ValueError("coefficient samples do not match the quadrature layout")
        if not (0 <= self.lower_bound <= self.upper_bound):
            raise ValueError(
                f"need 0 <= lower <= upper, got ({self.lower_bound}, {self.upper_bound})")
        slack = 1e-12 * (1.0 + self.upper_bound)
        if np.any(q < self.lower_bound - slack) or np.any(q > self.upper_bound + slack):
            raise ValueError("coefficient samples violate the declared bounds")
        q = np.ascontiguousarray(q)
        q.setflags(write=False)
        object.__setattr__(self, "quad_values", q)


@dataclass(frozen=True)
class Datum:
    """Source datum f sampled at quadrature points, with cached ∫|f|²."""

    label: str
    grid: Grid
    fn: Callable[[Array], Array]
    quad_values: Array        # (E, Q)
    l2_norm_sq: float
    linf_bound: Optional[float]   # None when no sup bound is known

    def __post_init__(self):
        q = np.asarray(self.quad_values, dtype=float)
        if q.shape != self.grid.quad_weights.shape:
            raise ValueError("datum samples do not match the quadrature layout")
        if not np.all(np.isfinite(q)) or not math.isfinite(self.l2_norm_sq):
            raise ValueError("datum must be square-integrable (finite samples)")
        q = np.ascontiguousarray(q)
        q.setflags(write=False)
        object.__setattr__(self, "quad_values", q)


def make_datum(grid: Grid, fn: Callable[[Array], Array],
               linf_bound: Optional[float] = None, label: str = "datum") -> Datum:
    """Sample `fn` at the quadrature points and cache its quadrature L² mass."""
    flat = grid.quad_coords.reshape(-1, grid.dimension)
    q = np.asarray(fn(flat), dtype=float).reshape(grid.quad_weights.shape)
    l2sq = float(np.sum(grid.quad_weights * q * q))
    return Datum(label=label, grid=grid, fn=fn, quad_values=q,
                 l2_norm_sq=l2sq, linf_bound=linf_bound)


def make_Jn_datum(f: Datum, n: float) -> Datum:
    """Two-sided clamp of the datum at level n (the outer truncation stage)."""
    if n <= 0:
        raise ValueError(f"truncation level must be positive, got {n}")
    fn = f.fn
    clipped = lambda x: np.clip(np.asarray(fn(x), dtype=float), -n, n)
    q = np.clip(f.quad_values, -n, n)
    l2sq = float(np.sum(f.grid.quad_weights * q * q))
    bound = float(n) if f.linf_bound is None else min(float(n), f.linf_bound)
    return Datum(label=f"{f.label}|clip{n:g}", grid=f.grid, fn=clipped,
                 quad_values=q, l2_norm_sq=l2sq, linf_bound=bound)


@dataclass(frozen=True)
class ProblemSpec:
    """Full minimization instance: grid, integrand, damping b, datum f.

    Schedules may be None, in which case the solver derives them: the
    amplitude schedule climbs in powers of two until it clears twice the
    datum's sup bound, and the datum schedule is (1, 2, 4, 8, 16) for
    unbounded data or a single sufficient level for bounded data.
    """

    grid: Grid
    integrand: Integrand
    b: CoefficientField
    f: Datum
    m_schedule: Optional[tuple] = None
    n_schedule: Optional[tuple] = None
    solver_tol: float = 1e-8
    max_iter: int = 50_000

    def __post_init__(self):
        for name in ("m_schedule", "n_schedule"):
            sched = getattr(self, name)
            if sched is not None:
                sched = tuple(float(s) for s in sched)
                if len(sched) == 0:
                    raise ValueError(f"{name} must be nonempty when given")
                if any(s <= 0 for s in sched):
                    raise ValueError(f"{name} levels must be positive")
                if any(b <= a for a, b in zip(sched, sched[1:])):
                    raise ValueError(f"{name} must be strictly increasing")
                object.__setattr__(self, name, sched)
        if self.solver_tol <= 0:
            raise ValueError("solver_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.b.grid is not self.grid or self.f.grid is not self.grid:
            raise ValueError("coefficient and datum must live on the spec grid")


def with_datum(spec: ProblemSpec, datum: Datum) -> ProblemSpec:
    return replace(spec, f=datum)


# ------------------------------------------------------------- evaluation


def _gradient_term_pieces(spec: ProblemSpec, v: DiscreteField, M: float):
    """Shared pieces: element gradients, quad values, j samples, denominators."""
    g = spec.grid
    grads = element_gradients(v)                          # (E, d)
    vq = values_at_quadrature(v)                          # (E, Q)
    clamped = np.clip(vq, -M, M)
    den = (1.0 + spec.b.quad_values * np.abs(clamped)) ** 2
    xi = np.broadcast_to(grads[:, None, :], g.quad_coords.shape)
    j = spec.integrand.density(g.quad_coords, xi)         # (E, Q)
    return grads, vq, clamped, den, j, xi


def eval_JM(spec: ProblemSpec, v: DiscreteField, M: float) -> float:
    """Discrete energy with the denominator amplitude clamped at M."""
    if M <= 0:
        raise ValueError(f"clamp level must be positive, got {M}")
    g = spec.grid
    _, vq, _, den, j, _ = _gradient_term_pieces(spec, v, M)
    integrand = j / den + 0.5 * vq * vq - spec.f.quad_values * vq
    return float(np.sum(g.quad_weights * integrand))


def eval_J(spec: ProblemSpec, v: DiscreteField) -> float:
    """Discrete energy with the raw (unclamped) amplitude in the denominator."""
    return eval_JM(spec, v, math.inf)


def gradient_term(spec: ProblemSpec, v: DiscreteField, M: float = math.inf) -> float:
    """The damped-gradient integral alone: ∫ j(x,∇v)/(1+b|T_M(v)|)²."""
    _, _, _, den, j, _ = _gradient_term_pieces(spec, v, M)
    return float(np.sum(spec.grid.quad_weights * (j / den)))


def residual(spec: ProblemSpec, v: DiscreteField, M: float = math.inf) -> Array:
    """Exact nodal gradient of the discrete eval_JM; boundary entries are 0."""
    if M <= 0:
        raise ValueError(f"clamp level must be positive, got {M}")
    g = spec.grid
    grads, vq, clamped, den, j, xi = _gradient_term_pieces(spec, v, M)
    w = g.quad_weights                                    # (E, Q)
    bary = g.quadrature.points                            # (Q, L)

    dj = spec.integrand.grad(g.quad_coords, xi)           # (E, Q, d)
    # ∂/∂v_l of j(x, ∇v)/den: through ∇v ...
    local = np.einsum("eq,eqd,eld->el", w / den, dj, g.basis_gradients)
    # ... and through the clamped amplitude in the denominator.
    den_chain = -2.0 * j / den ** 1.5 * spec.b.quad_values \
        * _clamp_abs_derivative(vq, M)
    local += np.einsum("eq,ql->el", w * den_chain, bary)
    # mass and load terms.
    local += np.einsum("eq,ql->el", w * (vq - spec.f.quad_values), bary)

    out = np.zeros(g.n_nodes)
    for l in range(g.elements.shape[1]):
        out += np.bincount(g.elements[:, l], weights=local[:, l],
                           minlength=g.n_nodes)
    out[g.boundary_mask] = 0.0
    return out


# ------------------------------------------------------------ certification


@dataclass(frozen=True)
class CertificationReport:
    """Outcome of randomized admissibility checks for one integrand."""

    label: str
    passed: bool
    samples: int
    seed: int
    margins: dict
    violations: tuple = field(default_factory=tuple)

    def worst(self, kind: str) -> float:
        return self.margins[kind]


def certify(integrand: Integrand, samples: int = 2000, seed: int = 0,
            dims: Sequence[int] = (1, 2)) -> CertificationReport:
    """Randomized verification of the growth/gradient/convexity contract.

    Samples x uniformly in the unit box and ξ with log-uniform magnitudes in
    [1e-3, 1e3], then checks, with roundoff-sized slack:
      lower/upper:  α|ξ|² ≤ j(x,ξ) ≤ β|ξ|²
      gradient:     |j_ξ(x,ξ)| ≤ γ|ξ|
      zero:         j(x,0) = 0
      midpoint:     j(x,(ξ₁+ξ₂)/2) ≤ (j(x,ξ₁)+j(x,ξ₂))/2
      consistency:  directional finite differences of j match j_ξ
    Fails are reported (never raised), with the violating (x, ξ) recorded.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    margins = {k: math.inf for k in
               ("lower", "upper", "gradient", "zero", "midpoint", "fd")}
    violations = []

    def note(kind, margin, x, xi, limit=12):
        if margin < margins[kind]:
            margins[kind] = float(margin)
        if margin < 0 and len(violations) < limit:
            violations.append({"kind": kind, "x": np.asarray(x).tolist(),
                               "xi": np.asarray(xi).tolist(),
                               "margin": float(margin)})

    for dim in dims:
        x = rng.uniform(0.0, 1.0, size=(samples, dim))
        direction = rng.normal(size=(samples, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        mag = 10.0 ** rng.uniform(-3.0, 3.0, size=(samples, 1))
        xi = direction * mag

        j = np.asarray(integrand.density(x, xi), dtype=float)
        dj = np.asarray(integrand.grad(x, xi), dtype=float)
        n2 = np.sum(xi * xi, axis=1)
        scale = 1e-12 * (1.0 + integrand.beta * n2)

        low = j - integrand.alpha * n2
        up = integrand.beta * n2 - j
        gr = integrand.gamma * np.sqrt(n2) - np.linalg.norm(dj, axis=1)
        for kind, vals, tol in (("lower", low, scale), ("upper", up, scale),
                                ("gradient", gr, 1e-12 * (1 + integrand.gamma * np.sqrt(n2)))):
            worst = int(np.argmin(vals + tol))
            note(kind, (vals + tol)[worst], x[worst], xi[worst])

        z = np.asarray(integrand.density(x, np.zeros_like(xi)), dtype=float)
        worst = int(np.argmax(np.abs(z)))
        note("zero", 1e-15 - abs(z[worst]), x[worst], np.zeros(dim))

        # midpoint convexity on sample pairs sharing the same x
        xi2 = np.roll(xi, 1, axis=0)
        jmid = np.asarray(integrand.density(x, 0.5 * (xi + xi2)), dtype=float)
        j2 = np.asarray(integrand.density(x, xi2), dtype=float)
        gap = 0.5 * (j + j2) - jmid + 1e-12 * (1.0 + j + j2)
        worst = int(np.argmin(gap))
        note("midpoint", gap[worst], x[worst], xi[worst])

        # supplied gradient vs directional central differences (moderate |ξ|
        # only; extreme magnitudes lose FD accuracy, not correctness)
        keep = (mag[:, 0] > 1e-1) & (mag[:, 0] < 1e2)
        if np.any(keep):
            xk, xik = x[keep], xi[keep]
            e = rng.normal(size=xik.shape)
            e /= np.linalg.norm(e, axis=1, keepdims=True)
            h = (1e-6 * (1.0 + np.linalg.norm(xik, axis=1)))[:, None]
            jp = np.asarray(integrand.density(xk, xik + h * e), dtype=float)
            jm = np.asarray(integrand.density(xk, xik - h * e), dtype=float)
            fd = (jp - jm) / (2.0 * h[:, 0])
            an = np.sum(np.asarray(integrand.grad(xk, xik), dtype=float) * e, axis=1)
            rel = np.abs(fd - an) / (1.0 + np.abs(an))
            worst = int(np.argmax(rel))
            note("fd", 1e-5 - rel[worst], xk[worst], xik[worst])

    passed = all(m >= 0 for m in margins.values())
    return CertificationReport(label=integrand.label, passed=passed,
                               samples=samples, seed=seed, margins=margins,
                               violations=tuple(violations))
