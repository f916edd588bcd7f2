"""SecPE vs Phoenix argmax benchmark over window sizes."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .argmax import ARGMAX_METHODS, PackingLayout
from .backend import BackendParams, CostModel, HomomorphicBackend, make_backend
from .sign import CompositeSign, SignConfig, as_sign

CSV_COLUMNS = ("method", "n", "backend", "sign_ops", "rotations", "mults", "bootstraps", "modeled_cost", "wall_ms")
DEFAULT_DIMS = (4, 8, 16, 32, 64, 128, 256, 512, 1024)


@dataclass(frozen=True)
class BenchRecord:
    method: str
    n: int
    backend: str
    sign_ops: int
    rotations: int
    mults: int
    bootstraps: int
    modeled_cost: float
    wall_ms: float

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def check_dims(dims: Iterable[int], slot_count: int) -> list[int]:
    """Window sizes must be powers of two in ``[2, slot_count / 2]``."""
    out = []
    for n in dims:
        n = int(n)
        if n < 2 or n & (n - 1) or n > slot_count // 2:
            raise ValueError(f"dimension {n} is not a power of two in [2, {slot_count // 2}]")
        out.append(n)
    if not out:
        raise ValueError("no dimensions given")
    return out


def bench_one(
    backend: HomomorphicBackend,
    method: str,
    n: int,
    sign: CompositeSign,
    rng: np.random.Generator,
) -> BenchRecord:
    """Run one argmax pass over a fully packed ciphertext of random windows."""
    layout = PackingLayout(n, backend.params.slot_count)
    ct = backend.encrypt(layout.place(rng.uniform(0.0, 1.0, size=(layout.copies, n))))
    start = time.perf_counter()
    with backend.measure() as used:
        ARGMAX_METHODS[method](backend, ct, layout, sign)
    wall = (time.perf_counter() - start) * 1e3
    return BenchRecord(
        method=method,
        n=n,
        backend=backend.name,
        sign_ops=used.n_sign,
        rotations=used.n_rot,
        mults=used.n_mul_ct,
        bootstraps=used.n_bootstrap,
        modeled_cost=float(used.modeled_cost),
        wall_ms=round(wall, 3),
    )


def run_bench(
    dims: Sequence[int] = DEFAULT_DIMS,
    methods: Sequence[str] = ("secpe", "phoenix"),
    backend: str = "sim",
    *,
    seed: int,
    params: BackendParams | None = None,
    cost_model: CostModel | None = None,
    sign: CompositeSign | SignConfig | None = None,
    n_jobs: int = 1,
    include_wall: bool = True,
) -> list[BenchRecord]:
    """One record per ``(method, n)`` cell, sorted by method then ``n``.

    Each cell gets its own backend and random stream derived from ``seed``,
    so results do not depend on scheduling. ``include_wall=False`` zeroes
    ``wall_ms`` for byte-identical output across runs.
    """
    params = params if params is not None else BackendParams()
    dims = check_dims(dims, params.slot_count)
    for method in methods:
        if method not in ARGMAX_METHODS:
            raise ValueError(f"unknown method {method!r}")
    sign = as_sign(sign)
    cells = [(method, n) for method in methods for n in dims]
    seeds = np.random.SeedSequence(seed).spawn(len(cells))

    def run(idx: int) -> BenchRecord:
        method, n = cells[idx]
        ss = seeds[idx]
        be = make_backend(backend, params, cost_model, seed=ss.spawn(1)[0].generate_state(1)[0])
        rec = bench_one(be, method, n, sign, np.random.default_rng(ss))
        return rec if include_wall else _zero_wall(rec)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(run, range(len(cells))))
    else:
        records = [run(i) for i in range(len(cells))]
    return sorted(records, key=lambda r: (r.method, r.n))


def _zero_wall(rec: BenchRecord) -> BenchRecord:
    return BenchRecord(**{**rec.__dict__, "wall_ms": 0.0})


def speedups(records: Iterable[BenchRecord]) -> dict[int, float]:
    """Modeled-cost ratio phoenix / secpe per window size."""
    cost = {(r.method, r.n): r.modeled_cost for r in records}
    return {n: cost[("phoenix", n)] / cost[("secpe", n)] for (m, n) in sorted(cost) if m == "secpe" and ("phoenix", n) in cost}


def records_to_csv(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def write_csv(records: Iterable[BenchRecord], path: str | Path) -> None:
    Path(path).write_text(records_to_csv(records))
