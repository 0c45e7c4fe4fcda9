"""Built-in integrands, damping coefficients, and source data.

Everything is looked up through string registries so the CLI layer can
validate config keys before touching numerics. Coefficient and datum
factories are domain-aware: spatial shapes are expressed in coordinates
normalized to the grid's bounding box, so the same kind works on (0,1),
(0,2) or a rectangle without re-tuning parameters.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .functional import CoefficientField, Datum, Integrand, make_datum
from .grid import Array, Grid


# --------------------------------------------------------------- integrands


def _quadratic(params: dict) -> Integrand:
    scale = float(params.get("scale", 1.0))
    if scale <= 0:
        raise ValueError(f"quadratic integrand needs scale > 0, got {scale}")

    def density(x, xi):
        return scale * np.sum(xi * xi, axis=-1)

    def grad(x, xi):
        return 2.0 * scale * xi

    return Integrand(label=f"quadratic(scale={scale:g})", alpha=scale,
                     beta=scale, gamma=2.0 * scale, density=density, grad=grad)


def _anisotropic(params: dict) -> Integrand:
    # j = |ξ|² + c·s(x)·(ξ·e₁)² with s(x) = ½(1 + sin(2π x₁)) ∈ [0, 1]
    contrast = float(params.get("contrast", 0.5))
    if contrast <= 0:
        raise ValueError(f"anisotropic integrand needs contrast > 0, got {contrast}")

    def modulation(x):
        return 0.5 * (1.0 + np.sin(2.0 * math.pi * x[..., 0]))

    def density(x, xi):
        return np.sum(xi * xi, axis=-1) + contrast * modulation(x) * xi[..., 0] ** 2

    def grad(x, xi):
        out = 2.0 * xi.copy()
        out[..., 0] += 2.0 * contrast * modulation(x) * xi[..., 0]
        return out

    return Integrand(label=f"anisotropic(contrast={contrast:g})", alpha=1.0,
                     beta=1.0 + contrast, gamma=2.0 * (1.0 + contrast),
                     density=density, grad=grad)


def _logaug(params: dict) -> Integrand:
    # j = |ξ|² + ½ log(1+|ξ|²): strictly convex, between |ξ|² and 1.5|ξ|²
    if params:
        raise ValueError(f"logaug integrand takes no parameters, got {sorted(params)}")

    def density(x, xi):
        n2 = np.sum(xi * xi, axis=-1)
        return n2 + 0.5 * np.log1p(n2)

    def grad(x, xi):
        n2 = np.sum(xi * xi, axis=-1)
        return xi * (2.0 + 1.0 / (1.0 + n2))[..., None]

    return Integrand(label="logaug", alpha=1.0, beta=1.5, gamma=3.0,
                     density=density, grad=grad)


INTEGRANDS: dict = {
    "quadratic": _quadratic,
    "anisotropic": _anisotropic,
    "logaug": _logaug,
}


def make_integrand(kind: str, params: Optional[dict] = None) -> Integrand:
    if kind not in INTEGRANDS:
        raise ValueError(f"unknown integrand kind {kind!r}; "
                         f"choose from {sorted(INTEGRANDS)}")
    return INTEGRANDS[kind](dict(params or {}))


# ------------------------------------------------------------- coefficients


def _unit_box(grid: Grid):
    lo = grid.nodes.min(axis=0)
    hi = grid.nodes.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return lambda x: (x - lo) / span


def _sample_coefficient(grid: Grid, fn: Callable[[Array], Array]) -> Array:
    flat = grid.quad_coords.reshape(-1, grid.dimension)
    return np.asarray(fn(flat), dtype=float).reshape(grid.quad_weights.shape)


def _const_coeff(grid: Grid, params: dict) -> CoefficientField:
    value = float(params.get("value", 1.0))
    if value < 0:
        raise ValueError(f"constant coefficient must be >= 0, got {value}")
    q = np.full(grid.quad_weights.shape, value)
    return CoefficientField(label=f"constant({value:g})", grid=grid,
                            quad_values=q, lower_bound=value, upper_bound=value)


def _zero_coeff(grid: Grid, params: dict) -> CoefficientField:
    if params:
        raise ValueError(f"zero coefficient takes no parameters, got {sorted(params)}")
    q = np.zeros(grid.quad_weights.shape)
    return CoefficientField(label="zero", grid=grid, quad_values=q,
                            lower_bound=0.0, upper_bound=0.0)


def _step_coeff(grid: Grid, params: dict) -> CoefficientField:
    height = float(params.get("height", 1.0))
    if height <= 0:
        raise ValueError(f"step coefficient needs height > 0, got {height}")
    unit = _unit_box(grid)
    q = _sample_coefficient(grid, lambda x: height * (unit(x)[:, 0] >= 0.5))
    return CoefficientField(label=f"step(height={height:g})", grid=grid,
                            quad_values=q, lower_bound=0.0, upper_bound=height)


def _bump_coeff(grid: Grid, params: dict) -> CoefficientField:
    height = float(params.get("height", 1.0))
    if height <= 0:
        raise ValueError(f"smooth-bump coefficient needs height > 0, got {height}")
    unit = _unit_box(grid)

    def fn(x):
        u = unit(x)
        out = np.full(u.shape[0], height)
        for axis in range(u.shape[1]):
            out = out * np.sin(math.pi * u[:, axis]) ** 2
        return out

    q = _sample_coefficient(grid, fn)
    return CoefficientField(label=f"smooth-bump(height={height:g})", grid=grid,
                            quad_values=q, lower_bound=0.0, upper_bound=height)


COEFFICIENTS: dict = {
    "constant": _const_coeff,
    "zero": _zero_coeff,
    "step": _step_coeff,
    "smooth-bump": _bump_coeff,
}


def make_coefficient(grid: Grid, kind: str,
                     params: Optional[dict] = None) -> CoefficientField:
    if kind not in COEFFICIENTS:
        raise ValueError(f"unknown coefficient kind {kind!r}; "
                         f"choose from {sorted(COEFFICIENTS)}")
    return COEFFICIENTS[kind](grid, dict(params or {}))


# --------------------------------------------------------------------- data


def _const_datum(grid: Grid, params: dict) -> Datum:
    value = float(params.get("value", 1.0))
    return make_datum(grid, lambda x: np.full(x.shape[0], value),
                      linf_bound=abs(value), label=f"constant({value:g})")


def _sine_datum(grid: Grid, params: dict) -> Datum:
    amplitude = float(params.get("amplitude", 1.0))
    unit = _unit_box(grid)

    def fn(x):
        u = unit(x)
        out = np.full(u.shape[0], amplitude)
        for axis in range(u.shape[1]):
            out = out * np.sin(math.pi * u[:, axis])
        return out

    return make_datum(grid, fn, linf_bound=abs(amplitude),
                      label=f"sine(amplitude={amplitude:g})")


def _power_datum(grid: Grid, params: dict) -> Datum:
    # distance to the lower-left corner, raised to -exponent: unbounded but
    # square-integrable as long as 2·exponent < dimension
    exponent = float(params.get("exponent", 0.4))
    if not (0 < exponent < grid.dimension / 2.0):
        raise ValueError(
            f"power-singularity exponent must lie in (0, {grid.dimension / 2.0:g}) "
            f"to stay square-integrable, got {exponent}")
    corner = grid.nodes.min(axis=0)

    def fn(x):
        r = np.linalg.norm(x - corner, axis=1)
        return np.where(r > 0, r, np.finfo(float).tiny) ** (-exponent)

    return make_datum(grid, fn, linf_bound=None,
                      label=f"power-singularity(exponent={exponent:g})")


def _step_datum(grid: Grid, params: dict) -> Datum:
    high = float(params.get("high", 2.0))
    low = float(params.get("low", -1.0))
    unit = _unit_box(grid)

    def fn(x):
        return np.where(unit(x)[:, 0] < 0.5, high, low)

    return make_datum(grid, fn, linf_bound=max(abs(high), abs(low)),
                      label=f"step(high={high:g},low={low:g})")


DATA: dict = {
    "constant": _const_datum,
    "sine": _sine_datum,
    "power-singularity": _power_datum,
    "step": _step_datum,
}


def make_library_datum(grid: Grid, kind: str,
                       params: Optional[dict] = None) -> Datum:
    if kind not in DATA:
        raise ValueError(f"unknown datum kind {kind!r}; choose from {sorted(DATA)}")
    return DATA[kind](grid, dict(params or {}))
