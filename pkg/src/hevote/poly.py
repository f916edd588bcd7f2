"""Polynomials over slot vectors with depth-optimal baby-step/giant-step evaluation.

A degree-``d`` polynomial is split around the largest power-of-two power of
``x`` it needs::

    p(x) = q(x) * x^(2^(D-1)) + r(x),    D = ceil(log2(d + 1))

and ``q``, ``r`` are evaluated recursively against the same cached powers
``x, x^2, x^4, ...``. Powers below the baby-step block size are the baby steps,
the rest are giant steps. Every plaintext coefficient multiplication is
scheduled so that it sits on a branch with spare depth, hence the whole
evaluation consumes exactly ``D`` levels even though a plaintext multiplication
costs a level on the backend.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import HomomorphicBackend, SlotVector


class Polynomial:
    """Real polynomial in the monomial basis, ``coeffs[k]`` multiplies ``x**k``."""

    def __init__(self, coeffs: Sequence[float]):
        c = np.atleast_1d(np.asarray(coeffs, dtype=np.float64)).ravel()
        if c.size == 0:
            c = np.zeros(1)
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        nz = np.flatnonzero(c)
        self.coeffs = c[: nz[-1] + 1] if nz.size else c[:1]
        self.coeffs.setflags(write=False)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def is_odd(self) -> bool:
        """True when every even-power coefficient is zero."""
        return bool(np.all(self.coeffs[0::2] == 0.0))

    def __call__(self, x):
        """Plain Horner evaluation on scalars or arrays."""
        x = np.asarray(x, dtype=np.float64)
        acc = np.zeros_like(x)
        for c in self.coeffs[::-1]:
            acc = acc * x + c
        return acc

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self) -> int:
        return hash(self.coeffs.tobytes())

    def __repr__(self) -> str:
        return f"Polynomial({self.coeffs.tolist()})"

    def to_json(self) -> str:
        return json.dumps(self.coeffs.tolist())

    @classmethod
    def from_json(cls, text: str) -> "Polynomial":
        data = json.loads(text)
        if not isinstance(data, list) or not all(isinstance(v, (int, float)) for v in data):
            raise ValueError("polynomial JSON must be an array of numbers")
        return cls(data)

    @classmethod
    def odd(cls, odd_coeffs: Sequence[float]) -> "Polynomial":
        """Build ``sum_k odd_coeffs[k] * x**(2k+1)``."""
        c = np.zeros(2 * len(odd_coeffs))
        c[1::2] = odd_coeffs
        return cls(c)


@dataclass(frozen=True)
class EvalPlan:
    baby_steps: int
    giant_steps: int
    depth: int
    mul_count: int
    plain_mul_count: int = 0


def eval_depth(degree: int) -> int:
    """Levels consumed when evaluating a polynomial of this degree."""
    return 0 if degree <= 0 else math.ceil(math.log2(degree + 1))


class _Tracer:
    """Stand-in backend that only tracks levels and multiplication counts."""

    def __init__(self):
        self.n_mul = 0
        self.n_plain = 0

    def mul(self, a, b):
        self.n_mul += 1
        return min(a, b) - 1

    def mul_plain(self, a, c):
        self.n_plain += 1
        return a - 1

    def add(self, a, b):
        return min(a, b)

    def sub(self, a, b):
        return min(a, b)

    def add_plain(self, a, c):
        return a


def _evaluate(ops, coeffs: np.ndarray, x):
    depth = eval_depth(len(coeffs) - 1)
    powers = {0: x}

    def power(j):
        # x^(2^j) by repeated squaring
        if j not in powers:
            half = power(j - 1)
            powers[j] = ops.mul(half, half)
        return powers[j]

    def block(c: np.ndarray, d: int):
        # returns (ciphertext part or None, constant part)
        if d == 0 or c.shape[0] == 1:
            return None, float(c[0])
        split = 1 << (d - 1)
        low, high = c[:split], c[split:]
        term = None
        if np.any(high != 0.0):
            hct, hconst = block(high, d - 1)
            if hct is None:
                term = ops.mul_plain(power(d - 1), hconst)
            else:
                if hconst != 0.0:
                    hct = ops.add_plain(hct, hconst)
                term = ops.mul(hct, power(d - 1))
        lct, lconst = block(low, d - 1)
        if term is None:
            return lct, lconst
        if lct is None:
            return term, lconst
        return ops.add(term, lct), lconst

    ct, const = block(coeffs, depth)
    if ct is None:
        # constant polynomial: x - x carries no level cost
        ct = ops.sub(x, x)
    if const != 0.0 or depth == 0:
        ct = ops.add_plain(ct, const)
    return ct


def baby_step_count(degree: int) -> int:
    """Baby-step block size: ceil(sqrt(degree + 1)) rounded up to a power of two."""
    b = math.ceil(math.sqrt(degree + 1))
    return 1 << max(0, math.ceil(math.log2(b)))


def plan(poly: Polynomial) -> EvalPlan:
    """Depth and multiplication counts of evaluating ``poly`` on a slot vector."""
    tracer = _Tracer()
    start = 10**6
    end = _evaluate(tracer, poly.coeffs, start)
    depth = start - end
    babies = baby_step_count(poly.degree)
    log_b = int(math.log2(babies))
    return EvalPlan(
        baby_steps=babies,
        giant_steps=max(0, depth - log_b),
        depth=depth,
        mul_count=tracer.n_mul,
        plain_mul_count=tracer.n_plain,
    )


def evaluate(backend: HomomorphicBackend, poly: Polynomial, x: SlotVector) -> SlotVector:
    """Apply ``poly`` slot-wise to ``x``.

    ``x`` is bootstrapped first when it cannot absorb the plan depth, so the
    result sits exactly ``plan(poly).depth`` levels below the (possibly
    refreshed) input.
    """
    x = backend.ensure_level(x, eval_depth(poly.degree))
    return _evaluate(backend, poly.coeffs, x)
