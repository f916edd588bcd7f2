import inspect
import json

import numpy as np
import pytest

from hevote.argmax import NormBounds, PackingLayout
from hevote.backend import BackendParams, ExactBackend, SimulatedBackend
from hevote.ensemble import (
    DimensionMismatchError,
    Example,
    LayoutMismatchError,
    LogitBatch,
    Packed,
    SchemaError,
    aggregate,
    dump_logits,
    encrypt_prompts,
    labels_from_one_hot,
    load_logits,
    make_synthetic_batch,
    oracle_vote,
    parse_logits,
    run_vote,
    serve_pass,
    vote,
    write_results,
)
from hevote.sign import build_sign


def doc(examples, m=3, n=4, d_min=-1.0, d_max=1.0):
    return {"m": m, "n": n, "d_min": d_min, "d_max": d_max, "examples": examples}


@pytest.fixture
def be():
    return ExactBackend(BackendParams(ring_degree=1024))


class TestLoad:
    def test_round_trip(self, tmp_path, rng):
        raw = doc([{"id": f"e{i}", "logits": rng.uniform(-1, 1, (3, 4)).tolist()} for i in range(2)])
        path = tmp_path / "b.json"
        path.write_text(json.dumps(raw))
        batch = load_logits(path)
        assert len(batch) == 2 and (batch.m, batch.n) == (3, 4)
        dump_logits(batch, tmp_path / "c.json")
        again = load_logits(tmp_path / "c.json")
        np.testing.assert_array_equal(again.tensor(), batch.tensor())
        assert again.ids == ["e0", "e1"]

    def test_single_prompt(self):
        batch = parse_logits(doc([{"id": "a", "logits": [[0.1, 0.2]]}], m=1, n=2))
        assert batch.tensor().shape == (1, 1, 2)

    def test_malformed_row_names_example(self):
        bad = doc([{"id": "good", "logits": [[0, 0, 0, 0]] * 3}, {"id": "broken", "logits": [[0, 0, 0, 0], [0, 0, 0], [0, 0, 0, 0]]}])
        with pytest.raises(DimensionMismatchError, match="broken"):
            parse_logits(bad)

    def test_bounds_violation_names_example(self):
        with pytest.raises(SchemaError, match="hot"):
            parse_logits(doc([{"id": "hot", "logits": [[0, 0, 0, 5.0]] * 3}]))

    @pytest.mark.parametrize(
        "raw",
        [
            [],
            {"m": 1, "n": 2, "d_min": 0, "examples": []},
            {"m": True, "n": 2, "d_min": 0, "d_max": 1, "examples": []},
            {"m": 1, "n": 2, "d_min": 1, "d_max": 0, "examples": []},
            {"m": 1, "n": 2, "d_min": 0, "d_max": 1, "examples": [{"id": 3, "logits": [[0, 0]]}]},
            {"m": 1, "n": 2, "d_min": 0, "d_max": 1, "examples": [{"id": "a", "logits": [["x", 0]]}]},
            {"m": 1, "n": 2, "d_min": 0, "d_max": 1, "examples": [{"id": "a", "logits": [[0, 0]]}] * 2},
        ],
    )
    def test_schema_errors(self, raw):
        with pytest.raises(SchemaError):
            parse_logits(raw)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{not json")
        with pytest.raises(SchemaError):
            load_logits(p)


class TestAggregate:
    def test_single_prompt_identity(self, be, rng):
        layout = PackingLayout(4, be.params.slot_count)
        x = Packed(be.encrypt(layout.place(rng.uniform(-1, 1, (2, 4)))), layout)
        out = aggregate(be, [x], 1)
        assert out.ct is x.ct

    def test_disagreeing_prompts(self, be):
        layout = PackingLayout(2, be.params.slot_count)
        logits = np.array([[[0.9, 0.0], [0.0, 0.6]]])  # prompt 0 votes class 0, prompt 1 class 1
        mean = aggregate(be, encrypt_prompts(be, logits, layout))
        np.testing.assert_allclose(layout.extract(be.decrypt(mean.ct), 1), [[0.45, 0.3]])

    def test_forty_paths_within_noise(self, rng):
        be = SimulatedBackend(BackendParams(ring_degree=1024), seed=5)
        layout = PackingLayout(8, be.params.slot_count)
        logits = rng.uniform(-3, 3, (layout.copies, 40, 8))
        mean = aggregate(be, encrypt_prompts(be, logits, layout), 40)
        np.testing.assert_allclose(layout.extract(be.decrypt(mean.ct)), logits.mean(axis=1), atol=1e-6)

    def test_layout_mismatch(self, be):
        a = Packed(be.encrypt([0.0]), PackingLayout(4, be.params.slot_count))
        b = Packed(be.encrypt([0.0]), PackingLayout(8, be.params.slot_count))
        with pytest.raises(LayoutMismatchError):
            aggregate(be, [a, b])

    def test_m_must_match(self, be):
        a = Packed(be.encrypt([0.0]), PackingLayout(4, be.params.slot_count))
        with pytest.raises(ValueError):
            aggregate(be, [a], 2)


class TestVote:
    def test_worked_example(self, be):
        batch = LogitBatch(3, 2, NormBounds(0, 3), (Example("q", np.array([[1.0, 3.0], [2.0, 3.0], [3.0, 1.0]])),))
        (res,) = vote(batch, be)
        assert res.label == 1 == oracle_vote(batch)[0]
        np.testing.assert_array_equal(res.one_hot, [0, 1])

    def test_identical_prompts_match_single(self, be, rng):
        single = make_synthetic_batch(1, 4, 20, seed=3, spread=0.0)
        copies = LogitBatch(5, 4, single.bounds, tuple(Example(e.id, np.repeat(e.logits, 5, axis=0)) for e in single.examples))
        assert [r.label for r in vote(copies, be)] == [r.label for r in vote(single, be)] == oracle_vote(single)

    def test_sixty_four_examples_one_pass(self):
        be = ExactBackend()
        batch = make_synthetic_batch(3, 256, 64, seed=11)
        report = run_vote(batch, be)
        assert report.passes == 1
        assert report.counters.n_sign == 9
        assert [r.label for r in report.results] == oracle_vote(batch)

    @pytest.mark.parametrize("m, n", [(1, 2), (3, 4), (5, 7), (40, 16)])
    def test_matches_oracle(self, m, n, be):
        batch = make_synthetic_batch(m, n, 60, seed=m * 100 + n)
        assert [r.label for r in vote(batch, be)] == oracle_vote(batch)

    def test_simulator_agreement(self):
        be = SimulatedBackend(BackendParams(ring_degree=2**14), seed=8)
        batch = make_synthetic_batch(5, 4, 2000, seed=21)
        labels = [r.label for r in vote(batch, be)]
        agree = np.mean(np.array(labels) == oracle_vote(batch))
        assert agree >= 0.999

    def test_prompt_order_irrelevant(self, be, rng):
        batch = make_synthetic_batch(7, 8, 30, seed=5)
        perm = rng.permutation(7)
        shuffled = LogitBatch(7, 8, batch.bounds, tuple(Example(e.id, e.logits[perm]) for e in batch.examples))
        assert [r.label for r in vote(batch, be)] == [r.label for r in vote(shuffled, be)]

    def test_threads_keep_order(self):
        be = ExactBackend(BackendParams(ring_degree=256))
        batch = make_synthetic_batch(3, 4, 100, seed=9)
        serial = run_vote(batch, be)
        parallel = run_vote(batch, ExactBackend(BackendParams(ring_degree=256)), n_jobs=3)
        assert [r.id for r in parallel.results] == batch.ids
        assert [r.label for r in parallel.results] == [r.label for r in serial.results]
        assert parallel.counters == serial.counters

    def test_phoenix_method(self, be):
        batch = make_synthetic_batch(3, 4, 20, seed=2)
        assert [r.label for r in vote(batch, be, method="phoenix")] == oracle_vote(batch)

    def test_empty(self, be):
        report = run_vote(LogitBatch(2, 3, NormBounds(0, 1)), be)
        assert report.results == [] and report.passes == 0

    def test_unknown_method(self, be):
        with pytest.raises(ValueError):
            vote(make_synthetic_batch(1, 2, 1), be, method="sort")

    def test_results_jsonl(self, be, tmp_path):
        batch = make_synthetic_batch(2, 3, 4, seed=1)
        out = tmp_path / "r.jsonl"
        write_results(vote(batch, be), out)
        lines = [json.loads(line) for line in out.read_text().splitlines()]
        assert [d["id"] for d in lines] == batch.ids
        assert [d["label"] for d in lines] == oracle_vote(batch)
        assert all(sum(d["one_hot"]) >= 1 and d["counters"]["n_sign"] > 0 for d in lines)


class TestServerNeverDecrypts:
    SERVER = {"serve_pass", "aggregate", "normalize", "secpe_argmax", "phoenix_argmax", "hom_max", "quick_max", "sign_eval"}

    class SpyBackend(ExactBackend):
        def __init__(self, *a, **kw):
            super().__init__(*a, **kw)
            self.calls = []

        def decrypt(self, ct):
            callers = {frame.function for frame in inspect.stack()[1:]}
            self.calls.append((ct.uid, callers))
            return super().decrypt(ct)

    def test_only_final_decrypt(self):
        be = self.SpyBackend(BackendParams(ring_degree=256))
        batch = make_synthetic_batch(4, 4, 50, seed=4)
        report = run_vote(batch, be)
        assert len(be.calls) == report.passes
        for _, callers in be.calls:
            assert not (callers & self.SERVER)

    def test_server_pass_alone_never_decrypts(self):
        class Sealed(ExactBackend):
            def decrypt(self, ct):
                raise AssertionError("server attempted to decrypt")

        be = Sealed(BackendParams(ring_degree=256))
        layout = PackingLayout(4, be.params.slot_count)
        batch = make_synthetic_batch(3, 4, layout.copies, seed=6)
        prompts = encrypt_prompts(be, batch.tensor(), layout)
        z, costs = serve_pass(be, prompts, batch.bounds, build_sign())
        assert z.encrypted and costs.argmax > costs.aggregate


class TestHelpers:
    def test_label_first_one(self):
        assert labels_from_one_hot(np.array([[0, 1, 1], [1, 0, 0]])).tolist() == [1, 0]

    def test_label_fallback(self):
        labels = labels_from_one_hot(np.array([[0, 0, 0]]), np.array([[0.1, 0.4, 0.3]]))
        assert labels.tolist() == [1]

    def test_oracle_first_index_ties(self):
        batch = LogitBatch(1, 3, NormBounds(0, 1), (Example("t", np.array([[0.5, 0.5, 0.1]])),))
        assert oracle_vote(batch) == [0]

    def test_synthetic_gap(self):
        batch = make_synthetic_batch(5, 16, 50, gap=2**-5, seed=2)
        mean = batch.bounds.apply(batch.tensor().mean(axis=1))
        top2 = np.sort(mean, axis=1)[:, -2:]
        assert np.all(top2[:, 1] - top2[:, 0] >= 2**-5 - 1e-12)
        assert batch.bounds.contains(batch.tensor())
