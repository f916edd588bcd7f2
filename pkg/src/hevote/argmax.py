"""Encrypted argmax over packed logit windows.

Layout: a ciphertext holds ``copies`` independent windows. Window ``k`` starts
at slot ``k * 2 * n_padded``; its first ``n`` slots carry the (normalized)
logits, slots ``n .. n_padded`` are zero padding and the second half of the
window is scratch space that the algorithms fill with a duplicate of the
first half.

Two algorithms produce the same one-hot output:

* :func:`secpe_argmax` folds the window maximum with ``log2(n_padded)``
  rotate-and-max steps, then compares every slot against it (one more sign).
* :func:`phoenix_argmax` compares every slot against each of its
  ``n_padded - 1`` cyclic neighbours and thresholds the vote count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backend import HomomorphicBackend, SlotVector
from .sign import CompositeSign, SignConfig, as_sign, sign_eval

NORMALIZE_TOLERANCE = 1e-3


class BoundsViolationError(ValueError):
    """Normalized values fell outside [0, 1] beyond tolerance."""


@dataclass(frozen=True)
class NormBounds:
    """Public lower/upper bounds on raw logits."""

    d_min: float
    d_max: float

    def __post_init__(self):
        if not (np.isfinite(self.d_min) and np.isfinite(self.d_max)):
            raise ValueError("bounds must be finite")
        if not self.d_max > self.d_min:
            raise ValueError(f"need d_max > d_min, got [{self.d_min}, {self.d_max}]")

    @property
    def scale(self) -> float:
        return 1.0 / (self.d_max - self.d_min)

    def apply(self, x):
        """Plaintext version of the normalization map."""
        return (np.asarray(x, dtype=np.float64) - self.d_min) * self.scale

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all((x >= self.d_min - tol) & (x <= self.d_max + tol)))


def _next_pow2(n: int) -> int:
    return 1 << max(0, math.ceil(math.log2(n)))


@dataclass(frozen=True)
class PackingLayout:
    """Geometry of ``copies`` argmax windows of width ``n`` in one ciphertext."""

    n: int
    slot_count: int
    copies: int = field(default=0)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("window size n must be >= 1")
        if self.slot_count < 2 or self.slot_count & (self.slot_count - 1):
            raise ValueError("slot_count must be a power of two >= 2")
        capacity = self.slot_count // (2 * self.n_padded)
        if capacity < 1:
            raise ValueError(
                f"a window of {self.n} classes needs {2 * self.n_padded} slots, only {self.slot_count} available"
            )
        if self.copies == 0:
            object.__setattr__(self, "copies", capacity)
        elif not 1 <= self.copies <= capacity:
            raise ValueError(f"copies must be in [1, {capacity}], got {self.copies}")

    @property
    def n_padded(self) -> int:
        return _next_pow2(self.n)

    @property
    def stride(self) -> int:
        return 2 * self.n_padded

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.copies) * self.stride

    @property
    def rounds(self) -> int:
        """Number of rotate-and-max folds, log2(n_padded)."""
        return int(math.log2(self.n_padded))

    def data_index(self) -> np.ndarray:
        """Slot indices of the logits, shape (copies, n)."""
        return self.offsets[:, None] + np.arange(self.n)[None, :]

    def mask(self) -> np.ndarray:
        m = np.zeros(self.slot_count)
        m[self.data_index().ravel()] = 1.0
        return m

    def place(self, rows) -> np.ndarray:
        """Scatter a ``(rows, n)`` matrix into a slot array; everything else is 0."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != self.n:
            raise ValueError(f"rows must have {self.n} columns, got {rows.shape[1]}")
        if rows.shape[0] > self.copies:
            raise ValueError(f"{rows.shape[0]} rows exceed the {self.copies} windows of this layout")
        out = np.zeros(self.slot_count)
        out[self.data_index()[: rows.shape[0]]] = rows
        return out

    def extract(self, slots, rows: int | None = None) -> np.ndarray:
        """Gather the ``(rows, n)`` window contents from a slot array."""
        slots = np.asarray(slots)
        rows = self.copies if rows is None else rows
        return slots[self.data_index()[:rows]]


def normalize(
    backend: HomomorphicBackend,
    ct: SlotVector,
    bounds: NormBounds,
    layout: PackingLayout | None = None,
) -> SlotVector:
    """Map ``x -> (x - d_min) / (d_max - d_min)`` with one plaintext multiplication.

    With a layout, only the logit slots are mapped and every other slot is
    forced to 0, the normalized minimum.
    """
    if layout is None:
        scale, shift = bounds.scale, -bounds.d_min * bounds.scale
    else:
        mask = layout.mask()
        scale, shift = mask * bounds.scale, mask * (-bounds.d_min * bounds.scale)
    out = backend.add_plain(backend.mul_plain(ct, scale), shift)
    # simulator-side guard; a real server cannot see this
    lo, hi = float(out.slots.min()), float(out.slots.max())
    if lo < -NORMALIZE_TOLERANCE or hi > 1 + NORMALIZE_TOLERANCE:
        raise BoundsViolationError(
            f"normalized values span [{lo:.6g}, {hi:.6g}], outside [0, 1]; logits exceed the public bounds"
        )
    return out


def hom_max(
    backend: HomomorphicBackend,
    a: SlotVector,
    b: SlotVector,
    sign: CompositeSign | SignConfig | None = None,
) -> SlotVector:
    """Slot-wise ``max(a, b) = (a+b)/2 + (a-b)/2 * Sign(a-b)``.

    Rewritten as ``b + (a-b)/2 * (1 + Sign(a-b))`` so the halving lands on a
    plaintext multiplication and only one ciphertext product is spent.
    """
    sign = as_sign(sign)
    d = backend.sub(a, b)
    d = backend.ensure_level(d, sign.depth + 1)
    s = sign_eval(backend, d, sign)
    half = backend.mul_plain(d, 0.5)
    corr = backend.mul(half, backend.add_plain(s, 1.0))
    return backend.add(b, corr)


def quick_max(
    backend: HomomorphicBackend,
    y: SlotVector,
    layout: PackingLayout,
    sign: CompositeSign | SignConfig | None = None,
) -> SlotVector:
    """Window maxima by ``log2(n_padded)`` rotate-and-max folds.

    ``y`` must already hold each window twice in a row; afterwards the first
    ``n_padded`` slots of every window carry that window's maximum.
    """
    sign = as_sign(sign)
    for i in range(layout.rounds):
        r = backend.rotate(y, 1 << i)
        y = hom_max(backend, r, y, sign)
    return y


def _duplicate(backend: HomomorphicBackend, ct: SlotVector, layout: PackingLayout) -> SlotVector:
    return backend.add(ct, backend.rotate(ct, -layout.n_padded))


def _check_layout(backend: HomomorphicBackend, layout: PackingLayout) -> None:
    if layout.slot_count != backend.params.slot_count:
        raise ValueError(
            f"layout built for {layout.slot_count} slots, backend has {backend.params.slot_count}"
        )


def secpe_argmax(
    backend: HomomorphicBackend,
    ct: SlotVector,
    layout: PackingLayout,
    sign: CompositeSign | SignConfig | None = None,
    *,
    mask: bool = False,
) -> SlotVector:
    """One-hot argmax of every window: ~1 where the window maximum is, ~0 elsewhere.

    Spends ``log2(n_padded) + 1`` sign evaluations and as many rotations.
    Slots outside the logit positions are left as produced unless ``mask`` is
    set, which zeroes them at the cost of one plaintext multiplication.
    """
    _check_layout(backend, layout)
    sign = as_sign(sign)
    y = _duplicate(backend, ct, layout)
    y_max = quick_max(backend, y, layout, sign)
    z = sign_eval(backend, backend.sub(y, y_max), sign)
    z = backend.add_plain(z, 1.0)
    if mask:
        z = backend.mul_plain(z, layout.mask())
    return z


def phoenix_argmax(
    backend: HomomorphicBackend,
    ct: SlotVector,
    layout: PackingLayout,
    sign: CompositeSign | SignConfig | None = None,
    *,
    mask: bool = False,
) -> SlotVector:
    """Baseline argmax by pairwise comparison with every cyclic neighbour.

    With ``s_i = Sign(y - RotL(y, i))`` for ``i = 1 .. n_padded-1`` the number
    of lost comparisons is ``L = sum_i (1 - s_i) / 2``; it is 0 at a unique
    maximum and at least 1 elsewhere. One more sign on
    ``(1/2 - L) / n_padded`` turns that into the one-hot vector.
    """
    _check_layout(backend, layout)
    sign = as_sign(sign)
    npad = layout.n_padded
    y = _duplicate(backend, ct, layout)
    total = None
    for i in range(1, npad):
        s_i = sign_eval(backend, backend.sub(y, backend.rotate(y, i)), sign)
        total = s_i if total is None else backend.add(total, s_i)
    if total is None:
        total = backend.sub(y, y)
    # (1/2 - L) / npad == (sum s_i + 2 - npad) / (2 npad)
    u = backend.add_plain(backend.mul_plain(total, 1.0 / (2 * npad)), (2.0 - npad) / (2 * npad))
    z = sign_eval(backend, u, sign)
    z = backend.add_plain(backend.mul_plain(z, 0.5), 0.5)
    if mask:
        z = backend.mul_plain(z, layout.mask())
    return z


def pack(
    backend: HomomorphicBackend,
    logits,
    layout: PackingLayout,
    bounds: NormBounds,
) -> SlotVector:
    """Client side: normalize a ``(rows, n)`` logit matrix and encrypt it into windows."""
    _check_layout(backend, layout)
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if not bounds.contains(logits):
        raise BoundsViolationError(f"logits outside [{bounds.d_min}, {bounds.d_max}]")
    return backend.encrypt(layout.place(bounds.apply(logits)))


def unpack(values, layout: PackingLayout, rows: int | None = None) -> np.ndarray:
    """Client side: cut decrypted slots back into ``(rows, n)`` window outputs."""
    return layout.extract(values, rows)


def decode_one_hot(values) -> np.ndarray:
    """Round soft one-hot outputs to integers."""
    return np.rint(np.asarray(values, dtype=np.float64)).astype(np.int64)


ARGMAX_METHODS = {"secpe": secpe_argmax, "phoenix": phoenix_argmax}


def plain_one_hot(x) -> np.ndarray:
    """Reference: 1 at every position attaining the row maximum."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return (x == x.max(axis=1, keepdims=True)).astype(np.int64)
