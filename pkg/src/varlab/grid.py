"""P1 simplicial grids with zero-trace fields, quadrature, truncation and norms.

Two mesh families: uniform segments on an interval and structured right
triangles on an axis-aligned rectangle (each cell split along its lower-left to
upper-right diagonal). Fields are piecewise-linear nodal vectors whose boundary
entries are pinned to zero, so the zero-trace constraint is structural rather
than penalized.

Quadrature is degree-2 exact per element: a 2-point Gauss rule on segments and
the 3-point edge-midpoint rule on triangles. Nonlinear compositions (absolute
values, amplitude denominators) are evaluated at the quadrature points of the
interpolated field, so composition order matches the continuous expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

Array = np.ndarray

NORM_KINDS = ("L1", "L2", "Linf", "W11_semi", "H1_semi")


def _frozen(a: Array) -> Array:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuadratureRule:
    """Per-element rule in barycentric coordinates; weights sum to one."""

    points: Array   # (Q, d+1) barycentric coordinates
    weights: Array  # (Q,) positive, summing to 1

    def __post_init__(self):
        pts = _frozen(np.asarray(self.points, dtype=float))
        wts = _frozen(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        if pts.ndim != 2 or wts.ndim != 1 or pts.shape[0] != wts.shape[0]:
            raise ValueError("quadrature points/weights shape mismatch")
        if np.any(wts <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(wts.sum() - 1.0) > 1e-14:
            raise ValueError("quadrature weights must sum to 1")
        if np.any(pts < -1e-14) or np.max(np.abs(pts.sum(axis=1) - 1.0)) > 1e-14:
            raise ValueError("barycentric coordinates must be a convex combination")


def _interval_rule() -> QuadratureRule:
    # 2-point Gauss-Legendre per segment, degree-3 exact.
    t = 1.0 / (2.0 * math.sqrt(3.0))
    pts = np.array([[0.5 + t, 0.5 - t], [0.5 - t, 0.5 + t]])
    return QuadratureRule(points=pts, weights=np.array([0.5, 0.5]))


def _triangle_rule() -> QuadratureRule:
    # Edge-midpoint rule, degree-2 exact on triangles.
    pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    return QuadratureRule(points=pts, weights=np.array([1.0, 1.0, 1.0]) / 3.0)


@dataclass(frozen=True)
class Grid:
    """Immutable simplicial mesh with cached geometry and quadrature data.

    Attributes
    ----------
    dimension : 1 or 2
    nodes : (P, dim) coordinates
    elements : (E, dim+1) node indices, positively oriented
    boundary_mask : (P,) True exactly at topological-boundary nodes
    quadrature : per-element rule (barycentric)
    element_measures : (E,) lengths / areas
    basis_gradients : (E, dim+1, dim), gradient of each nodal hat per element
    quad_coords : (E, Q, dim) physical quadrature points
    quad_weights : (E, Q) measure-scaled weights (rows sum to element measure)
    """

    dimension: int
    nodes: Array
    elements: Array
    boundary_mask: Array
    quadrature: QuadratureRule
    element_measures: Array
    basis_gradients: Array
    quad_coords: Array
    quad_weights: Array

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def measure(self) -> float:
        return float(self.element_measures.sum())

    @property
    def interior_index(self) -> Array:
        return np.flatnonzero(~self.boundary_mask)


def _finish_grid(dimension: int, nodes: Array, elements: Array,
                 boundary: Array, rule: QuadratureRule) -> Grid:
    nodes = np.asarray(nodes, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    if dimension == 1:
        edge = nodes[elements[:, 1], 0] - nodes[elements[:, 0], 0]
        if np.any(edge <= 0):
            raise ValueError("degenerate segment")
        measures = edge
        grads = np.empty((elements.shape[0], 2, 1))
        grads[:, 0, 0] = -1.0 / edge
        grads[:, 1, 0] = 1.0 / edge
    else:
        p0 = nodes[elements[:, 0]]
        t = np.stack([nodes[elements[:, 1]] - p0, nodes[elements[:, 2]] - p0], axis=2)
        det = t[:, 0, 0] * t[:, 1, 1] - t[:, 0, 1] * t[:, 1, 0]
        if np.any(det <= 0):
            raise ValueError("triangle with non-positive orientation")
        measures = 0.5 * det
        inv = np.empty_like(t)  # rows of T^{-1} are grad(lambda_1), grad(lambda_2)
        inv[:, 0, 0] = t[:, 1, 1] / det
        inv[:, 0, 1] = -t[:, 0, 1] / det
        inv[:, 1, 0] = -t[:, 1, 0] / det
        inv[:, 1, 1] = t[:, 0, 0] / det
        grads = np.empty((elements.shape[0], 3, 2))
        grads[:, 1, :] = inv[:, 0, :]
        grads[:, 2, :] = inv[:, 1, :]
        grads[:, 0, :] = -inv[:, 0, :] - inv[:, 1, :]
    # physical quadrature points: sum_l bary_l * node_l
    corner = nodes[elements]                    # (E, d+1, dim)
    qc = np.einsum("ql,eld->eqd", rule.points, corner)
    qw = measures[:, None] * rule.weights[None, :]
    return Grid(
        dimension=dimension,
        nodes=_frozen(nodes),
        elements=_frozen(elements),
        boundary_mask=_frozen(np.asarray(boundary, dtype=bool)),
        quadrature=rule,
        element_measures=_frozen(measures),
        basis_gradients=_frozen(grads),
        quad_coords=_frozen(qc),
        quad_weights=_frozen(qw),
    )


def build_interval_grid(a: float, b: float, cells: int) -> Grid:
    """Uniform segment mesh on (a, b) with `cells` elements."""
    if not (b > a):
        raise ValueError(f"interval requires b > a, got ({a}, {b})")
    if cells < 1:
        raise ValueError(f"cells must be >= 1, got {cells}")
    x = np.linspace(a, b, cells + 1)
    nodes = x[:, None]
    elements = np.stack([np.arange(cells), np.arange(1, cells + 1)], axis=1)
    boundary = np.zeros(cells + 1, dtype=bool)
    boundary[0] = boundary[-1] = True
    return _finish_grid(1, nodes, elements, boundary, _interval_rule())


def build_rect_grid(x_cells: int, y_cells: int, lx: float, ly: float) -> Grid:
    """Structured triangulation of (0, lx) x (0, ly).

    Every rectangular cell is split along its lower-left to upper-right
    diagonal into two positively oriented right triangles.
    """
    if x_cells < 1 or y_cells < 1:
        raise ValueError(f"cell counts must be >= 1, got ({x_cells}, {y_cells})")
    if lx <= 0 or ly <= 0:
        raise ValueError(f"side lengths must be positive, got ({lx}, {ly})")
    xs = np.linspace(0.0, lx, x_cells + 1)
    ys = np.linspace(0.0, ly, y_cells + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    def nid(i, j):
        return i * (y_cells + 1) + j

    tris = []
    for i in range(x_cells):
        for j in range(y_cells):
            a = nid(i, j)
            b = nid(i + 1, j)
            c = nid(i + 1, j + 1)
            d = nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    elements = np.array(tris, dtype=np.int64)
    ii = np.arange(x_cells + 1)[:, None]
    jj = np.arange(y_cells + 1)[None, :]
    boundary = ((ii == 0) | (ii == x_cells) | (jj == 0) | (jj == y_cells)).ravel()
    return _finish_grid(2, nodes, elements, boundary, _triangle_rule())


@dataclass(frozen=True)
class DiscreteField:
    """Nodal values of a continuous piecewise-linear function.

    Every constructor used by the minimization pipeline (`interpolate`,
    `zero_field`, `field_from_values`, the solver's updates) pins boundary
    entries to exact zero, so pipeline fields are always admissible
    (zero trace). Direct construction skips the pinning on purpose: analytic
    probes such as ramps with nonzero boundary values are legitimate inputs
    for the norm and inequality audits.
    """

    grid: Grid
    values: Array

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field has {v.shape} values for {self.grid.n_nodes} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def zero_trace(self) -> bool:
        return bool(np.all(self.values[self.grid.boundary_mask] == 0.0))

    def linf(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def zero_field(grid: Grid) -> DiscreteField:
    return DiscreteField(grid, np.zeros(grid.n_nodes))


def field_from_values(grid: Grid, values: Array) -> DiscreteField:
    """Wrap nodal values, forcing boundary entries to exact zero."""
    v = np.array(values, dtype=float)
    v[grid.boundary_mask] = 0.0
    return DiscreteField(grid, v)


def interpolate(grid: Grid, fn: Callable[[Array], Array]) -> DiscreteField:
    """Sample `fn` at the nodes; boundary nodes are pinned to zero.

    `fn` receives an (n, dim) coordinate array and must return (n,) values.
    """
    vals = np.asarray(fn(grid.nodes), dtype=float)
    if vals.shape != (grid.n_nodes,):
        raise ValueError("interpolated callable must return one value per node")
    v = vals.copy()
    v[grid.boundary_mask] = 0.0
    return DiscreteField(grid, v)


def truncate(v: DiscreteField, k: float) -> DiscreteField:
    """Nodal two-sided clamp at level k >= 0 (keeps the P1 space)."""
    if k < 0:
        raise ValueError(f"truncation level must be >= 0, got {k}")
    return DiscreteField(v.grid, np.clip(v.values, -k, k))


def tail(v: DiscreteField, k: float) -> DiscreteField:
    """Nodal remainder beyond level k: v - truncate(v, k)."""
    if k < 0:
        raise ValueError(f"tail level must be >= 0, got {k}")
    return DiscreteField(v.grid, v.values - np.clip(v.values, -k, k))


def element_gradients(v: DiscreteField) -> Array:
    """Constant gradient per element, shape (E, dim)."""
    g = v.grid
    return np.einsum("el,eld->ed", v.values[g.elements], g.basis_gradients)


def element_gradient(v: DiscreteField, element: int) -> Array:
    """Gradient vector of `v` on one element."""
    g = v.grid
    if not (0 <= element < g.n_elements):
        raise IndexError(f"element {element} out of range [0, {g.n_elements})")
    idx = g.elements[element]
    return g.basis_gradients[element].T @ v.values[idx]


def values_at_quadrature(v: DiscreteField) -> Array:
    """Interpolated field values at all quadrature points, shape (E, Q)."""
    g = v.grid
    return v.values[g.elements] @ g.quadrature.points.T


def integrate_at_quadrature(grid: Grid, samples: Array) -> float:
    """Quadrature sum of per-point samples with shape (E, Q)."""
    return float(np.sum(grid.quad_weights * samples))


def norm(v: DiscreteField, which: str) -> float:
    """Quadrature evaluation of a named norm/seminorm of the interpolant.

    which: "L1" | "L2" | "Linf" | "W11_semi" | "H1_semi"
    Gradient seminorms are exact (elementwise-constant gradients); L1/L2 use
    the element quadrature on the composed integrand.
    """
    g = v.grid
    if which == "Linf":
        return v.linf()
    if which == "L1":
        return integrate_at_quadrature(g, np.abs(values_at_quadrature(v)))
    if which == "L2":
        return math.sqrt(integrate_at_quadrature(g, values_at_quadrature(v) ** 2))
    if which in ("W11_semi", "H1_semi"):
        mag = np.linalg.norm(element_gradients(v), axis=1)
        if which == "W11_semi":
            return float(np.sum(g.element_measures * mag))
        return math.sqrt(float(np.sum(g.element_measures * mag ** 2)))
    raise ValueError(f"unknown norm {which!r}; expected one of {NORM_KINDS}")


def weighted_grad_l2(v: DiscreteField, b: Union[Array, "object"]) -> float:
    """Amplitude-damped gradient energy  ∫ |∇v|² / (1 + b|v|)².

    `b` is either an (E, Q) array of coefficient samples at the grid's
    quadrature points or an object exposing such an array as `.quad_values`
    (a coefficient field). |v| at each quadrature point is the absolute value
    of the interpolated value.
    """
    g = v.grid
    b_q = getattr(b, "quad_values", b)
    b_q = np.asarray(b_q, dtype=float)
    if b_q.shape != g.quad_weights.shape:
        raise ValueError(
            f"coefficient samples {b_q.shape} do not match quadrature layout "
            f"{g.quad_weights.shape}")
    mag2 = np.sum(element_gradients(v) ** 2, axis=1)           # (E,)
    den = (1.0 + b_q * np.abs(values_at_quadrature(v))) ** 2   # (E, Q)
    return integrate_at_quadrature(g, mag2[:, None] / den)
