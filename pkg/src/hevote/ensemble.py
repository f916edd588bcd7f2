"""Private prompt-ensemble voting on encrypted logits.

The roles are kept apart on purpose. :func:`vote` plays both client and
server, but the server part (:func:`serve_pass`) only ever touches encrypted
:class:`~hevote.backend.SlotVector` objects; decryption happens once, on the
one-hot result, back on the client side.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .argmax import ARGMAX_METHODS, NormBounds, PackingLayout, decode_one_hot, normalize, unpack
from .backend import ExactBackend, HomomorphicBackend, OpCounters, SlotVector
from .sign import CompositeSign, SignConfig, as_sign


class SchemaError(ValueError):
    """Logit file does not follow the expected JSON layout."""


class DimensionMismatchError(SchemaError):
    """A logit matrix does not have the declared ``m x n`` shape."""


class LayoutMismatchError(ValueError):
    """Ciphertexts packed with different layouts cannot be combined."""


@dataclass(frozen=True)
class Example:
    id: str
    logits: np.ndarray  # (m, n)


@dataclass(frozen=True)
class LogitBatch:
    """Per-prompt logits for a list of examples plus the public logit bounds."""

    m: int
    n: int
    bounds: NormBounds
    examples: tuple[Example, ...] = ()

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise SchemaError(f"m and n must be positive, got m={self.m}, n={self.n}")
        for ex in self.examples:
            if ex.logits.shape != (self.m, self.n):
                raise DimensionMismatchError(
                    f"example {ex.id!r}: logits have shape {ex.logits.shape}, expected ({self.m}, {self.n})"
                )
            if not self.bounds.contains(ex.logits):
                raise SchemaError(
                    f"example {ex.id!r}: logits outside bounds [{self.bounds.d_min}, {self.bounds.d_max}]"
                )

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]

    def tensor(self) -> np.ndarray:
        """All logits as an ``(examples, m, n)`` array."""
        if not self.examples:
            return np.zeros((0, self.m, self.n))
        return np.stack([ex.logits for ex in self.examples])

    def to_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "n": self.n,
            "d_min": self.bounds.d_min,
            "d_max": self.bounds.d_max,
            "examples": [{"id": ex.id, "logits": ex.logits.tolist()} for ex in self.examples],
        }

    @classmethod
    def from_array(cls, logits, bounds: NormBounds, ids: Sequence[str] | None = None) -> "LogitBatch":
        arr = np.asarray(logits, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatchError(f"expected an (examples, m, n) array, got shape {arr.shape}")
        ids = [str(i) for i in range(arr.shape[0])] if ids is None else list(ids)
        if len(ids) != arr.shape[0]:
            raise SchemaError("one id per example is required")
        return cls(arr.shape[1], arr.shape[2], bounds, tuple(Example(i, a) for i, a in zip(ids, arr)))


def _require(obj: dict, key: str, kinds, where: str = "batch"):
    if key not in obj:
        raise SchemaError(f"{where}: missing key {key!r}")
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, kinds):
        raise SchemaError(f"{where}: {key!r} has type {type(val).__name__}")
    return val


def parse_logits(raw: Any) -> LogitBatch:
    """Validate a decoded logit document and build a :class:`LogitBatch`."""
    if not isinstance(raw, dict):
        raise SchemaError("top level must be a JSON object")
    m = _require(raw, "m", int)
    n = _require(raw, "n", int)
    d_min = float(_require(raw, "d_min", (int, float)))
    d_max = float(_require(raw, "d_max", (int, float)))
    try:
        bounds = NormBounds(d_min, d_max)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    items = _require(raw, "examples", list)
    examples = []
    seen = set()
    for k, item in enumerate(items):
        if not isinstance(item, dict):
            raise SchemaError(f"examples[{k}] must be an object")
        ex_id = _require(item, "id", str, where=f"examples[{k}]")
        if ex_id in seen:
            raise SchemaError(f"duplicate example id {ex_id!r}")
        seen.add(ex_id)
        rows = _require(item, "logits", list, where=f"example {ex_id!r}")
        if len(rows) != m or any(not isinstance(r, list) or len(r) != n for r in rows):
            raise DimensionMismatchError(f"example {ex_id!r}: logits must be {m} rows of {n} numbers")
        try:
            mat = np.array(rows, dtype=np.float64)
        except (TypeError, ValueError):
            raise SchemaError(f"example {ex_id!r}: logits must be numbers") from None
        if not np.all(np.isfinite(mat)):
            raise SchemaError(f"example {ex_id!r}: logits must be finite")
        examples.append(Example(ex_id, mat))
    return LogitBatch(m, n, bounds, tuple(examples))


def load_logits(path: str | Path) -> LogitBatch:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return parse_logits(raw)


def dump_logits(batch: LogitBatch, path: str | Path) -> None:
    Path(path).write_text(json.dumps(batch.to_dict()) + "\n")


@dataclass
class VoteResult:
    id: str
    one_hot: np.ndarray
    label: int
    counters: OpCounters = field(default_factory=OpCounters)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "one_hot": [int(v) for v in self.one_hot],
            "label": int(self.label),
            "counters": self.counters.as_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class Packed:
    """A ciphertext together with the layout its slots follow."""

    ct: SlotVector
    layout: PackingLayout


@dataclass
class CostBreakdown:
    """Modeled cost of a voting run split by server phase."""

    aggregate: float = 0.0
    argmax: float = 0.0
    other: float = 0.0

    @property
    def total(self) -> float:
        return self.aggregate + self.argmax + self.other

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(self.aggregate + other.aggregate, self.argmax + other.argmax, self.other + other.other)

    def as_dict(self) -> dict[str, float]:
        return {"aggregate": self.aggregate, "argmax": self.argmax, "other": self.other, "total": self.total}


@dataclass
class VoteReport:
    results: list[VoteResult]
    breakdown: CostBreakdown
    passes: int
    counters: OpCounters


def aggregate(backend: HomomorphicBackend, packed: Sequence[Packed], m: int | None = None) -> Packed:
    """Server: slot-wise mean of the prompt ciphertexts.

    Summing ``m`` logit vectors and multiplying by ``1/m`` keeps the result
    inside the per-model bounds, so the same normalization applies afterwards.
    """
    if not packed:
        raise ValueError("nothing to aggregate")
    m = len(packed) if m is None else m
    if m != len(packed):
        raise ValueError(f"m={m} but {len(packed)} ciphertexts were given")
    layout = packed[0].layout
    for p in packed[1:]:
        if p.layout != layout:
            raise LayoutMismatchError(f"layout {p.layout} differs from {layout}")
    total = packed[0].ct
    for p in packed[1:]:
        total = backend.add(total, p.ct)
    if m > 1:
        total = backend.mul_plain(total, 1.0 / m)
    return Packed(total, layout)


def encrypt_prompts(backend: HomomorphicBackend, logits: np.ndarray, layout: PackingLayout) -> list[Packed]:
    """Client: one ciphertext per prompt, each holding up to ``layout.copies`` examples.

    ``logits`` has shape ``(examples, m, n)``. Raw logits are encrypted; the
    server normalizes with the public bounds.
    """
    return [Packed(backend.encrypt(layout.place(logits[:, i, :])), layout) for i in range(logits.shape[1])]


def serve_pass(
    backend: HomomorphicBackend,
    prompts: Sequence[Packed],
    bounds: NormBounds,
    sign: CompositeSign,
    method: str = "secpe",
) -> tuple[SlotVector, CostBreakdown]:
    """Server side of one pass, from prompt ciphertexts to the encrypted one-hot."""
    argmax_fn = ARGMAX_METHODS[method]
    with backend.measure() as agg:
        mean = aggregate(backend, prompts)
    with backend.measure() as norm:
        ct = normalize(backend, mean.ct, bounds, mean.layout)
    with backend.measure() as arg:
        z = argmax_fn(backend, ct, mean.layout, sign)
    return z, CostBreakdown(agg.modeled_cost, arg.modeled_cost, norm.modeled_cost)


def labels_from_one_hot(one_hot: np.ndarray, soft: np.ndarray | None = None) -> np.ndarray:
    """First index equal to 1 per row; rows without a 1 fall back to the largest soft value."""
    one_hot = np.atleast_2d(one_hot)
    hits = one_hot == 1
    labels = np.argmax(hits, axis=1)
    missing = ~hits.any(axis=1)
    if np.any(missing):
        fallback = np.atleast_2d(soft if soft is not None else one_hot)
        labels[missing] = np.argmax(fallback[missing], axis=1)
    return labels


def _chunks(n_items: int, size: int) -> list[slice]:
    return [slice(i, min(i + size, n_items)) for i in range(0, n_items, size)]


def run_vote(
    batch: LogitBatch,
    backend: HomomorphicBackend | None = None,
    sign: CompositeSign | SignConfig | None = None,
    *,
    method: str = "secpe",
    n_jobs: int = 1,
) -> VoteReport:
    """Vote on every example and report costs.

    Examples are packed ``layout.copies`` at a time, so each group costs one
    argmax pass. Groups are independent and may run on ``n_jobs`` threads;
    results keep the input order.
    """
    if method not in ARGMAX_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {sorted(ARGMAX_METHODS)}")
    backend = backend if backend is not None else ExactBackend()
    sign = as_sign(sign)
    layout = PackingLayout(batch.n, backend.params.slot_count)
    logits = batch.tensor()
    groups = _chunks(len(batch), layout.copies)

    def one_pass(sl: slice):
        with backend.measure() as used:
            prompts = encrypt_prompts(backend, logits[sl], layout)
            z, costs = serve_pass(backend, prompts, batch.bounds, sign, method)
        soft = unpack(backend.decrypt(z), layout, sl.stop - sl.start)
        return soft, costs, dataclasses.replace(used)

    if n_jobs > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outputs = list(pool.map(one_pass, groups))
    else:
        outputs = [one_pass(sl) for sl in groups]

    results: list[VoteResult] = []
    breakdown = CostBreakdown()
    total = OpCounters()
    for sl, (soft, costs, used) in zip(groups, outputs):
        one_hot = decode_one_hot(soft)
        labels = labels_from_one_hot(one_hot, soft)
        for k, ex in enumerate(batch.examples[sl]):
            results.append(VoteResult(ex.id, one_hot[k], int(labels[k]), used))
        breakdown = breakdown + costs
        total = total + used
    return VoteReport(results, breakdown, len(groups), total)


def vote(
    batch: LogitBatch,
    backend: HomomorphicBackend | None = None,
    sign: CompositeSign | SignConfig | None = None,
    *,
    method: str = "secpe",
    n_jobs: int = 1,
) -> list[VoteResult]:
    """Encrypted aggregate-then-argmax label for every example in ``batch``."""
    return run_vote(batch, backend, sign, method=method, n_jobs=n_jobs).results


def oracle_vote(batch: LogitBatch) -> list[int]:
    """Plaintext reference: argmax of the summed logits, ties to the first index."""
    if not len(batch):
        return []
    return [int(v) for v in np.argmax(batch.tensor().sum(axis=1), axis=1)]


def make_synthetic_batch(
    m: int,
    n: int,
    n_examples: int,
    *,
    gap: float = 2.0**-6,
    bounds: NormBounds = NormBounds(-8.0, 8.0),
    spread: float = 0.5,
    seed: int = 0,
    id_prefix: str = "ex",
) -> LogitBatch:
    """Random per-prompt logits whose mean has a clear winner.

    After normalization the winning class sits in ``[0.5, 0.95]`` and every
    other class at least ``gap`` below it. Each prompt adds zero-mean noise
    of at most ``spread`` raw units, so single prompts may disagree with the
    ensemble while the mean stays exactly as drawn.
    """
    rng = np.random.default_rng(seed)
    if not 0 < gap < 0.45:
        raise ValueError(f"gap must be in (0, 0.45), got {gap}")
    width = bounds.d_max - bounds.d_min
    out = []
    for k in range(n_examples):
        top = rng.uniform(0.5, 0.95)
        mean_norm = rng.uniform(0.05, top - gap, size=n)
        mean_norm[rng.integers(n)] = top
        mean = bounds.d_min + mean_norm * width
        margin = min(spread, 0.05 * width)
        noise = rng.uniform(-margin / 2, margin / 2, size=(m, n))
        noise -= noise.mean(axis=0, keepdims=True)
        out.append(Example(f"{id_prefix}{k:04d}", mean[None, :] + noise))
    return LogitBatch(m, n, bounds, tuple(out))


def write_results(results: Iterable[VoteResult], path: str | Path) -> None:
    """JSON lines, one result per example, in input order."""
    with open(path, "w") as fh:
        for r in results:
            fh.write(r.to_json() + "\n")
