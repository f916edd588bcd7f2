"""Composite polynomial approximation of the sign function.

``Sign(x) ~= f(f(...g(g(x))...))`` with ``g`` applied ``d_g`` times and then
``f`` applied ``d_f`` times. Both are odd polynomials that keep ``[-1, 1]``
inside ``[-1, 1]``: ``g`` lifts small inputs away from zero, ``f`` pushes
values towards ``+-1``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.optimize import linprog

from .backend import BackendParams, ExactBackend, HomomorphicBackend, SlotVector
from .poly import Polynomial, eval_depth, evaluate

ERROR_BOUND = 1e-4
DOMAIN_TOLERANCE = 1e-3
MIN_GRID = 10_000


class SignDomainError(ValueError):
    """Sign input left [-1, 1] by more than the tolerance."""


def contraction_polynomial(degree: int = 9) -> Polynomial:
    """Odd polynomial with ``f(+-1) = +-1`` and ``f'`` vanishing to high order at ``+-1``.

    ``f_k(x) = sum_{i<=k} C(2i, i) / 4^i * x * (1 - x^2)^i`` with
    ``degree = 2k + 1``; for degree 9 this is
    ``(315x - 420x^3 + 378x^5 - 180x^7 + 35x^9) / 128``.
    """
    if degree < 1 or degree % 2 == 0:
        raise ValueError("degree must be odd and positive")
    k = (degree - 1) // 2
    total = np.zeros(degree + 1)
    one_minus_sq = np.array([1.0])
    for i in range(k + 1):
        term = np.zeros(degree + 1)
        term[1 : 1 + one_minus_sq.size] = one_minus_sq * comb(2 * i, i) / 4**i
        total += term
        one_minus_sq = np.polynomial.polynomial.polymul(one_minus_sq, [1.0, 0.0, -1.0])
    return Polynomial(total)


def fit_lifting_polynomial(
    lower: float,
    degree: int = 9,
    *,
    flat_order: int = 0,
    grid: int = 4000,
) -> Polynomial:
    """Odd polynomial maximising its minimum over ``[lower, 1]`` while staying in ``[0, 1]`` on ``[0, 1]``.

    Solved as a linear program over the odd coefficients on a dense grid
    (uniform plus geometric towards zero). ``flat_order > 0`` additionally
    pins ``p(1) = 1`` and the first ``flat_order - 1`` derivatives at 1 to
    zero, which makes the polynomial contract towards 1 when iterated.
    """
    if degree < 1 or degree % 2 == 0:
        raise ValueError("degree must be odd and positive")
    if not 0 < lower < 1:
        raise ValueError("lower must be in (0, 1)")
    powers = np.arange(1, degree + 1, 2)
    xs = np.unique(np.concatenate([np.linspace(0.0, 1.0, grid + 1), np.geomspace(1e-7, 1.0, grid // 2)]))
    xs_hi = xs[xs >= lower]
    k = powers.size
    basis, basis_hi = xs[:, None] ** powers, xs_hi[:, None] ** powers
    zeros, ones = np.zeros((xs.size, 1)), np.ones((xs_hi.size, 1))
    a_ub = np.vstack([np.hstack([basis, zeros]), np.hstack([-basis, zeros]), np.hstack([-basis_hi, ones])])
    b_ub = np.concatenate([np.ones(xs.size), np.zeros(xs.size), np.zeros(xs_hi.size)])
    a_eq, b_eq = [], []
    if flat_order > 0:
        a_eq.append(np.append(np.ones(k), 0.0))
        b_eq.append(1.0)
        deriv = powers.astype(np.float64)
        for j in range(1, flat_order):
            a_eq.append(np.append(deriv, 0.0))
            b_eq.append(0.0)
            deriv = deriv * (powers - j)
    res = linprog(
        np.append(np.zeros(k), -1.0),
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=b_eq or None,
        bounds=[(None, None)] * (k + 1),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"lifting polynomial LP failed: {res.message}")
    coeffs = res.x[:k]
    # grid LP can overshoot 1 slightly between nodes
    peak = np.max(np.abs(Polynomial.odd(coeffs)(np.linspace(0.0, 1.0, 100_001))))
    return Polynomial.odd(coeffs / max(1.0, peak))


# Default degree-9 pair, regenerated by scripts/fit_sign.py:
# g = fit_lifting_polynomial(2**-3.5), f = contraction_polynomial(9).
DEFAULT_G = Polynomial.odd(
    [6.435067407735993, -47.21761487118872, 142.6362633858137, -174.67995173985332, 73.82623566976771]
)
DEFAULT_F = contraction_polynomial(9)


def _check_stage(poly: Polynomial, name: str, degree: int) -> None:
    if not poly.is_odd:
        raise ValueError(f"{name} must be an odd polynomial (even coefficients are not allowed)")
    if poly.degree != degree:
        raise ValueError(f"{name} has degree {poly.degree}, config says {degree}")
    xs = np.linspace(-1.0, 1.0, 20_001)
    if np.max(np.abs(poly(xs))) > 1.0 + 1e-9:
        raise ValueError(f"{name} does not map [-1, 1] into [-1, 1]")


@dataclass(frozen=True)
class SignConfig:
    """Parameters of the composite sign approximation.

    ``alpha`` fixes the margin ``2^-alpha`` outside of which the composite is
    expected to be close to +-1. When ``f``/``g`` are omitted, degree 9 uses
    the bundled fitted pair; other odd degrees use
    :func:`contraction_polynomial` for both.
    """

    alpha: int = 12
    d_f: int = 2
    d_g: int = 2
    deg_f: int = 9
    deg_g: int = 9
    f: Polynomial | None = field(default=None)
    g: Polynomial | None = field(default=None)

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be a positive integer")
        if self.d_f < 0 or self.d_g < 0 or self.d_f + self.d_g == 0:
            raise ValueError("need d_f, d_g >= 0 with at least one stage")
        for name in ("deg_f", "deg_g"):
            deg = getattr(self, name)
            if deg < 1 or deg % 2 == 0:
                raise ValueError(f"{name} must be odd and positive, got {deg}")
        if self.f is None:
            object.__setattr__(self, "f", DEFAULT_F if self.deg_f == 9 else contraction_polynomial(self.deg_f))
        if self.g is None:
            object.__setattr__(self, "g", DEFAULT_G if self.deg_g == 9 else contraction_polynomial(self.deg_g))
        _check_stage(self.f, "f", self.deg_f)
        _check_stage(self.g, "g", self.deg_g)

    @property
    def margin(self) -> float:
        return 2.0**-self.alpha

    @property
    def depth(self) -> int:
        return self.d_g * eval_depth(self.deg_g) + self.d_f * eval_depth(self.deg_f)


class CompositeSign:
    """Evaluator for ``f^d_f(g^d_g(x))``, on plain arrays or on slot vectors."""

    def __init__(self, config: SignConfig):
        self.config = config
        self.stages = (config.g,) * config.d_g + (config.f,) * config.d_f
        self.depth = sum(eval_depth(p.degree) for p in self.stages)

    def __call__(self, x):
        y = np.asarray(x, dtype=np.float64)
        for p in self.stages:
            y = p(y)
        return y

    def evaluate(self, backend: HomomorphicBackend, ct: SlotVector) -> SlotVector:
        ct = backend.ensure_level(ct, self.depth)
        for p in self.stages:
            ct = evaluate(backend, p, ct)
        return ct

    def __repr__(self) -> str:
        c = self.config
        return f"CompositeSign(alpha={c.alpha}, d_f={c.d_f}, d_g={c.d_g}, depth={self.depth})"


@functools.lru_cache(maxsize=64)
def build_sign(config: SignConfig | None = None) -> CompositeSign:
    return CompositeSign(config if config is not None else SignConfig())


def as_sign(sign: CompositeSign | SignConfig | None) -> CompositeSign:
    if isinstance(sign, CompositeSign):
        return sign
    return build_sign(sign)


def sign_eval(
    backend: HomomorphicBackend,
    ct: SlotVector,
    sign: CompositeSign | SignConfig | None = None,
) -> SlotVector:
    """Homomorphic sign of every slot; inputs must lie in ``[-1, 1]``."""
    sign = as_sign(sign)
    # simulator-side guard: out-of-range inputs mean a normalization bug upstream
    peak = float(np.max(np.abs(ct.slots)))
    if peak > 1.0 + DOMAIN_TOLERANCE:
        raise SignDomainError(f"sign input magnitude {peak:.6g} outside [-1, 1]")
    backend.record_sign()
    return sign.evaluate(backend, ct)


@dataclass(frozen=True)
class ErrorCertificate:
    alpha: int
    d_f: int
    d_g: int
    max_err: float
    grid_size: int
    margin: float
    passed: bool
    error_bound: float = ERROR_BOUND

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "d_f": self.d_f,
            "d_g": self.d_g,
            "max_err": self.max_err,
            "passed": self.passed,
            "grid_size": self.grid_size,
            "margin": self.margin,
            "error_bound": self.error_bound,
        }


def margin_grid(margin: float, grid_size: int, n_random: int, seed: int = 0) -> np.ndarray:
    """Uniform grid over ``[-1, -margin] U [margin, 1]`` plus uniform random points."""
    half = grid_size // 2
    pos = np.linspace(margin, 1.0, grid_size - half)
    neg = -np.linspace(margin, 1.0, half)
    rng = np.random.default_rng(seed)
    rand = rng.uniform(margin, 1.0, n_random) * rng.choice([-1.0, 1.0], n_random)
    return np.concatenate([neg, pos, rand])


def certify(
    config: SignConfig | None = None,
    grid_size: int = 1_000_000,
    *,
    n_random: int = 100_000,
    error_bound: float = ERROR_BOUND,
    seed: int = 0,
    backend: HomomorphicBackend | None = None,
) -> ErrorCertificate:
    """Measure ``max |approx(x) - sign(x)|`` over the margin region on the exact backend."""
    if grid_size < MIN_GRID:
        raise ValueError(f"grid_size must be at least {MIN_GRID}, got {grid_size}")
    config = config if config is not None else SignConfig()
    sign = build_sign(config)
    backend = backend if backend is not None else ExactBackend(BackendParams())
    xs = margin_grid(config.margin, grid_size, n_random, seed)
    width = backend.params.slot_count
    worst = 0.0
    for start in range(0, xs.size, width):
        chunk = xs[start : start + width]
        out = backend.decrypt(sign_eval(backend, backend.encrypt(chunk), sign))[: chunk.size]
        worst = max(worst, float(np.max(np.abs(out - np.sign(chunk)))))
    return ErrorCertificate(
        alpha=config.alpha,
        d_f=config.d_f,
        d_g=config.d_g,
        max_err=worst,
        grid_size=grid_size,
        margin=config.margin,
        passed=worst < error_bound,
        error_bound=error_bound,
    )
