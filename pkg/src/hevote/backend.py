"""SIMD homomorphic-vector backends.

Two implementations share one interface:

* :class:`ExactBackend` keeps slot values in float64 with no noise. It is the
  reference every kernel is checked against.
* :class:`SimulatedBackend` models a leveled RNS-CKKS deployment: it injects
  Gaussian noise on multiplications and rotations, tracks the remaining
  multiplicative level of every vector, and inserts bootstraps when a vector
  runs out of levels.

Both backends count operations and accumulate an abstract cost so that kernels
can be compared without real cryptography.  Nothing here is secure.
"""

from __future__ import annotations

import contextlib
import itertools
import json
import sys
import threading
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, NamedTuple, Sequence, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PlainOperand = Union[float, int, Sequence[float], np.ndarray]


class BackendError(Exception):
    """Base class for backend failures."""


class SlotOverflowError(BackendError, ArithmeticError):
    """A slot value left the encodable magnitude."""


class DepthExhaustedError(BackendError):
    """A vector has no level left and auto-bootstrap is disabled."""


class NotEncryptedError(BackendError, TypeError):
    """A ciphertext operation received a plaintext vector."""


@dataclass(frozen=True)
class BackendParams:
    """Ring and level configuration plus the noise model.

    Defaults follow the N=2^16, L=35, K=14 deployment, which leaves 21 levels
    after each bootstrap.
    """

    ring_degree: int = 65536
    max_level: int = 35
    bootstrap_cost: int = 14
    scale_precision: int = 40
    noise_std_per_mul: float = 2.0**-30
    noise_std_per_rot: float = 2.0**-32
    max_magnitude: float = 2.0**20
    reserve_level: int = 1
    auto_bootstrap: bool = True
    # recorded only; the simulator has no modulus
    modulus_bits: int = 1763

    def __post_init__(self):
        n = self.ring_degree
        if n < 2 or n & (n - 1):
            raise ValueError(f"ring_degree must be a power of two >= 2, got {n}")
        if not self.max_level > self.bootstrap_cost >= 0:
            raise ValueError("need max_level > bootstrap_cost >= 0")
        if self.reserve_level < 0:
            raise ValueError("reserve_level must be non-negative")
        if self.effective_depth - self.reserve_level < 1:
            raise ValueError("no usable level between a bootstrap and the reserve")
        if self.noise_std_per_mul < 0 or self.noise_std_per_rot < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if self.max_magnitude <= 0:
            raise ValueError("max_magnitude must be positive")

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def effective_depth(self) -> int:
        """Levels available on a fresh or freshly bootstrapped vector."""
        return self.max_level - self.bootstrap_cost


@dataclass(frozen=True)
class CostModel:
    """Abstract per-operation costs (relative units)."""

    cost_add: float = 1.0
    cost_mul_plain: float = 4.0
    cost_mul_ct: float = 16.0
    cost_rot: float = 16.0
    cost_bootstrap: float = 400.0

    def __post_init__(self):
        values = [getattr(self, f.name) for f in fields(self)]
        if any(v < 0 for v in values):
            raise ValueError("costs must be non-negative")
        if not self.cost_bootstrap >= self.cost_mul_ct >= self.cost_add:
            raise ValueError("need cost_bootstrap >= cost_mul_ct >= cost_add")

    def price(self, counters: "OpCounters") -> float:
        """Cost of a set of counts under this model."""
        return (
            (counters.n_add + counters.n_sub) * self.cost_add
            + counters.n_mul_plain * self.cost_mul_plain
            + counters.n_mul_ct * self.cost_mul_ct
            + counters.n_rot * self.cost_rot
            + counters.n_bootstrap * self.cost_bootstrap
        )


@dataclass
class OpCounters:
    n_add: int = 0
    n_sub: int = 0
    n_mul_ct: int = 0
    n_mul_plain: int = 0
    n_rot: int = 0
    n_sign: int = 0
    n_bootstrap: int = 0
    modeled_cost: float = 0.0

    def __sub__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})

    def __add__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SlotVector:
    """One (simulated) ciphertext: a full row of slots plus bookkeeping.

    ``slots`` is a read-only float64 array of length ``slot_count``.
    """

    slots: np.ndarray
    level: int
    noise_est: float = 0.0
    encrypted: bool = True
    uid: int = field(default=-1, compare=False)

    def __len__(self) -> int:
        return self.slots.shape[0]


class TraceEntry(NamedTuple):
    op: str
    inputs: tuple
    output: int
    arg: int = 0


def load_backend_params(path: Union[str, Path]) -> tuple[BackendParams, CostModel]:
    """Read backend parameters and a cost model from a TOML or JSON file.

    Keys are the field names of :class:`BackendParams` and :class:`CostModel`
    at top level (``cost_*`` keys go to the cost model). Unknown keys raise.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        raw = json.loads(text)
    else:
        raw = tomllib.loads(text)
    return params_from_mapping(raw)


def params_from_mapping(raw: dict[str, Any]) -> tuple[BackendParams, CostModel]:
    param_keys = {f.name for f in fields(BackendParams)}
    cost_keys = {f.name for f in fields(CostModel)}
    unknown = set(raw) - param_keys - cost_keys
    if unknown:
        raise ValueError(f"unknown backend config keys: {sorted(unknown)}")
    params = BackendParams(**{k: v for k, v in raw.items() if k in param_keys})
    costs = CostModel(**{k: v for k, v in raw.items() if k in cost_keys})
    return params, costs


class HomomorphicBackend:
    """Shared accounting for both backends.

    Operations never mutate their inputs. Counters are guarded by a lock so a
    backend can be shared between worker threads.
    """

    name = "base"

    def __init__(
        self,
        params: BackendParams | None = None,
        cost_model: CostModel | None = None,
        *,
        record_trace: bool = False,
    ):
        self.params = params if params is not None else BackendParams()
        self.cost_model = cost_model if cost_model is not None else CostModel()
        self.record_trace = record_trace
        self.trace: list[TraceEntry] = []
        self._counters = OpCounters()
        self._lock = threading.Lock()
        self._ids = itertools.count()
        self._scopes = threading.local()

    # -- accounting -------------------------------------------------------

    @property
    def counters(self) -> OpCounters:
        """Snapshot of the counters."""
        with self._lock:
            return replace(self._counters)

    def reset_counters(self) -> None:
        with self._lock:
            self._counters = OpCounters()
            self.trace = []

    def _count(self, name: str, cost: float) -> None:
        with self._lock:
            setattr(self._counters, name, getattr(self._counters, name) + 1)
            self._counters.modeled_cost += cost
        # scopes are thread-local, so no lock is needed for them
        for scope in getattr(self._scopes, "stack", ()):
            setattr(scope, name, getattr(scope, name) + 1)
            scope.modeled_cost += cost

    @contextlib.contextmanager
    def measure(self):
        """Count only the operations issued by the current thread inside the block.

        Yields an :class:`OpCounters` that fills up while the block runs. Scopes
        nest, and other threads sharing the backend do not leak into them.
        """
        stack = self._scopes.__dict__.setdefault("stack", [])
        scope = OpCounters()
        stack.append(scope)
        try:
            yield scope
        finally:
            # identity, not equality: nested scopes may hold equal counts
            del stack[next(i for i, s in enumerate(stack) if s is scope)]

    def record_sign(self) -> None:
        """Register one evaluation of the sign approximation."""
        self._count("n_sign", 0.0)

    def _log(self, op: str, inputs: tuple, output: SlotVector, arg: int = 0) -> None:
        if self.record_trace:
            with self._lock:
                self.trace.append(TraceEntry(op, tuple(v.uid for v in inputs), output.uid, arg))

    # -- construction helpers ---------------------------------------------

    def _new(self, slots: np.ndarray, level: int, noise: float, encrypted: bool = True) -> SlotVector:
        limit = self.params.max_magnitude
        peak = float(np.max(np.abs(slots))) if slots.size else 0.0
        if not np.isfinite(peak) or peak > limit:
            raise SlotOverflowError(f"slot magnitude {peak:.6g} exceeds encodable bound {limit:.6g}")
        slots.setflags(write=False)
        return SlotVector(slots, level, noise, encrypted, next(self._ids))

    def _pad(self, values: PlainOperand) -> np.ndarray:
        arr = np.asarray(values, dtype=np.float64)
        n = self.params.slot_count
        if arr.ndim == 0:
            return np.full(n, float(arr))
        arr = arr.ravel()
        if arr.shape[0] > n:
            raise ValueError(f"{arr.shape[0]} values do not fit in {n} slots")
        out = np.zeros(n)
        out[: arr.shape[0]] = arr
        return out

    def _plain(self, c: PlainOperand) -> np.ndarray:
        if isinstance(c, SlotVector):
            if c.encrypted:
                raise TypeError("plaintext operand expected, got a ciphertext")
            return c.slots
        arr = np.asarray(c, dtype=np.float64)
        if arr.ndim == 0:
            return arr
        return self._pad(arr)

    @staticmethod
    def _check_ct(*cts: SlotVector) -> None:
        for ct in cts:
            if not isinstance(ct, SlotVector):
                raise TypeError(f"expected SlotVector, got {type(ct).__name__}")
            if not ct.encrypted:
                raise NotEncryptedError("ciphertext operation on a plaintext vector")

    # -- client side ------------------------------------------------------

    def encrypt(self, values: PlainOperand) -> SlotVector:
        slots = self._pad(values)
        ct = self._new(slots, self.params.effective_depth, 0.0)
        self._log("encrypt", (), ct)
        return ct

    def encode(self, values: PlainOperand) -> SlotVector:
        """Plaintext slot vector, usable as the operand of ``*_plain`` ops."""
        return self._new(self._pad(values), self.params.effective_depth, 0.0, encrypted=False)

    def decrypt(self, ct: SlotVector) -> np.ndarray:
        self._check_ct(ct)
        return np.array(ct.slots)

    # -- level management -------------------------------------------------

    def bootstrap(self, a: SlotVector) -> SlotVector:
        self._check_ct(a)
        out = self._bootstrap(a)
        self._log("bootstrap", (a,), out)
        return out

    def _bootstrap(self, a: SlotVector) -> SlotVector:
        std = self.params.noise_std_per_mul
        slots = self._perturb(a.slots, std)
        self._count("n_bootstrap", self.cost_model.cost_bootstrap)
        return self._new(slots, self.params.effective_depth, std if self._noisy else 0.0)

    def ensure_level(self, a: SlotVector, depth: int) -> SlotVector:
        """Bootstrap ``a`` unless it can absorb ``depth`` more levels."""
        self._check_ct(a)
        out = a
        if a.level - depth < self.params.reserve_level:
            out = self._bootstrap(a)
        self._log("ensure", (a,), out, depth)
        return out

    def _spend(self, a: SlotVector, levels: int = 1) -> SlotVector:
        if a.level - levels >= self.params.reserve_level:
            return a
        if not self.params.auto_bootstrap:
            raise DepthExhaustedError(
                f"level {a.level} cannot absorb {levels} more (reserve {self.params.reserve_level})"
            )
        return self._bootstrap(a)

    # -- arithmetic -------------------------------------------------------

    @property
    def _noisy(self) -> bool:
        return False

    def _perturb(self, slots: np.ndarray, std: float) -> np.ndarray:
        return np.array(slots)

    def add(self, a: SlotVector, b: SlotVector) -> SlotVector:
        self._check_ct(a, b)
        out = self._new(a.slots + b.slots, min(a.level, b.level), a.noise_est + b.noise_est)
        self._count("n_add", self.cost_model.cost_add)
        self._log("add", (a, b), out)
        return out

    def sub(self, a: SlotVector, b: SlotVector) -> SlotVector:
        self._check_ct(a, b)
        out = self._new(a.slots - b.slots, min(a.level, b.level), a.noise_est + b.noise_est)
        self._count("n_sub", self.cost_model.cost_add)
        self._log("sub", (a, b), out)
        return out

    def add_plain(self, a: SlotVector, c: PlainOperand) -> SlotVector:
        self._check_ct(a)
        out = self._new(a.slots + self._plain(c), a.level, a.noise_est)
        self._count("n_add", self.cost_model.cost_add)
        self._log("add_plain", (a,), out)
        return out

    def mul(self, a: SlotVector, b: SlotVector) -> SlotVector:
        self._check_ct(a, b)
        a2 = self._spend(a)
        # squaring refreshes the shared operand once, not twice
        b2 = a2 if b is a else self._spend(b)
        std = self.params.noise_std_per_mul
        noise = (
            float(np.max(np.abs(a2.slots))) * b2.noise_est
            + float(np.max(np.abs(b2.slots))) * a2.noise_est
            + (std if self._noisy else 0.0)
        )
        slots = self._perturb(a2.slots * b2.slots, std)
        out = self._new(slots, min(a2.level, b2.level) - 1, noise)
        self._count("n_mul_ct", self.cost_model.cost_mul_ct)
        self._log("mul", (a, b), out)
        return out

    def mul_plain(self, a: SlotVector, c: PlainOperand) -> SlotVector:
        self._check_ct(a)
        a2 = self._spend(a)
        c_arr = self._plain(c)
        std = self.params.noise_std_per_mul
        noise = float(np.max(np.abs(c_arr))) * a2.noise_est + (std if self._noisy else 0.0)
        slots = self._perturb(a2.slots * c_arr, std)
        out = self._new(slots, a2.level - 1, noise)
        self._count("n_mul_plain", self.cost_model.cost_mul_plain)
        self._log("mul_plain", (a,), out)
        return out

    def rotate(self, a: SlotVector, s: int) -> SlotVector:
        """Cyclic left rotation by ``s`` slots; negative ``s`` rotates right."""
        self._check_ct(a)
        s = int(s)
        if abs(s) >= self.params.slot_count:
            raise ValueError(f"rotation {s} out of range for {self.params.slot_count} slots")
        std = self.params.noise_std_per_rot
        slots = self._perturb(np.roll(a.slots, -s), std)
        out = self._new(slots, a.level, a.noise_est + (std if self._noisy else 0.0))
        self._count("n_rot", self.cost_model.cost_rot)
        self._log("rotate", (a,), out, s)
        return out

    def rotate_left(self, a: SlotVector, s: int) -> SlotVector:
        return self.rotate(a, s)

    def rotate_right(self, a: SlotVector, s: int) -> SlotVector:
        return self.rotate(a, -s)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(slot_count={self.params.slot_count})"


class ExactBackend(HomomorphicBackend):
    """Noise-free reference backend; levels and counts are still tracked."""

    name = "exact"


class SimulatedBackend(HomomorphicBackend):
    """Leveled CKKS stand-in with additive Gaussian noise per mul/rotation.

    Noise is drawn independently per slot from ``N(0, std^2)`` where ``std`` is
    ``noise_std_per_mul`` for ciphertext/plaintext multiplications and
    bootstraps, and ``noise_std_per_rot`` for rotations. With both set to zero
    the simulator reproduces :class:`ExactBackend` bit for bit.
    """

    name = "sim"

    def __init__(
        self,
        params: BackendParams | None = None,
        cost_model: CostModel | None = None,
        *,
        seed: int | np.random.Generator | None = None,
        record_trace: bool = False,
    ):
        super().__init__(params, cost_model, record_trace=record_trace)
        self.rng = np.random.default_rng(seed)
        self._rng_lock = threading.Lock()

    @property
    def _noisy(self) -> bool:
        return True

    def _perturb(self, slots: np.ndarray, std: float) -> np.ndarray:
        if std == 0.0:
            return np.array(slots)
        with self._rng_lock:
            noise = self.rng.normal(0.0, std, size=slots.shape)
        return slots + noise


def make_backend(
    kind: str,
    params: BackendParams | None = None,
    cost_model: CostModel | None = None,
    *,
    seed: int | None = None,
    record_trace: bool = False,
) -> HomomorphicBackend:
    """Build a backend by name (``"exact"`` or ``"sim"``)."""
    if kind == "exact":
        return ExactBackend(params, cost_model, record_trace=record_trace)
    if kind in ("sim", "simulated"):
        return SimulatedBackend(params, cost_model, seed=seed, record_trace=record_trace)
    raise ValueError(f"unknown backend {kind!r}; expected 'exact' or 'sim'")
