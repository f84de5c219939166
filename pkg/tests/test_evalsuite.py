import collections
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capenrich.corpus import CaptionSet, tokenize
from capenrich.embed import EmbeddingTable, toy_text_embed
from capenrich.errors import InputError
from capenrich.evalsuite import (
    MetricReport,
    RetrievalPool,
    bleu4,
    build_hard_pool,
    build_naive_pool,
    cider_d,
    div_n,
    graph_tuples,
    load_pool,
    mbleu4,
    mean_recall,
    rank_pool,
    recall_at_k,
    save_pool,
    self_cider,
    spice_lite,
    write_report_csv,
    write_report_json,
)


class TestBleu4:
    def test_identity(self):
        cap = tokenize("a man riding a wave on a surfboard")
        assert bleu4(cap, [cap]) == pytest.approx(1.0, abs=1e-12)

    def test_empty_candidate(self):
        assert bleu4([], [["a", "dog"]]) == 0.0

    def test_needs_references(self):
        with pytest.raises(InputError):
            bleu4(["a"], [])

    def test_clipping(self):
        # seven copies of "the" against a reference holding one
        cand = ["the"] * 7
        score = bleu4(cand, [["the", "cat"]])
        # p1 = 1/7 clipped, higher orders floor at 1e-9, c > r so bp = 1
        want = math.exp(
            (math.log(1 / 7) + 3 * math.log(1e-9)) / 4.0
        )
        assert score == pytest.approx(want, rel=1e-12)

    def test_brevity_penalty(self):
        ref = [f"w{i}" for i in range(10)]
        cand = ref[:5]
        # prefix of the reference: all precisions 1, bp = exp(1 - 10/5)
        assert bleu4(cand, [ref]) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_bp_tie_picks_shorter_reference(self):
        cand = ["a", "b", "c"]
        refs = [["a", "b"], ["a", "b", "c", "d"]]
        # both references are one token away; the shorter one wins and
        # c >= r kills the penalty, leaving only the empty 4-gram floor
        assert bleu4(cand, refs) == pytest.approx(1e-9 ** 0.25, rel=1e-12)

    def test_floor_keeps_score_positive(self):
        score = bleu4(["x", "y"], [["a", "b", "c", "d", "e"]])
        assert 0.0 < score < 1e-2

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.sampled_from("abcdef"), min_size=1, max_size=8),
        st.lists(
            st.lists(st.sampled_from("abcdef"), min_size=1, max_size=8),
            min_size=1,
            max_size=3,
        ),
    )
    def test_range(self, cand, refs):
        assert 0.0 <= bleu4(cand, refs) <= 1.0 + 1e-12


def _oracle_cider(cands, refs, max_n=4, sigma=6.0):
    """Brute-force consensus score, written against the formulas alone."""
    ids = sorted(refs)
    big_n = len(ids)
    df = collections.Counter()
    for iid in ids:
        union = set()
        for ref in refs[iid]:
            for n in range(1, max_n + 1):
                for i in range(len(ref) - n + 1):
                    union.add(tuple(ref[i : i + n]))
        for g in union:
            df[g] += 1

    def weights(tokens, n):
        cnt = collections.Counter(
            tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
        )
        return {
            g: c * (math.log(big_n) - math.log(max(1.0, float(df[g]))))
            for g, c in cnt.items()
        }

    per = {}
    for iid in ids:
        cand = cands[iid]
        acc = 0.0
        for ref in refs[iid]:
            pair = 0.0
            gauss = math.exp(-((len(cand) - len(ref)) ** 2) / (2 * sigma**2))
            for n in range(1, max_n + 1):
                cw = weights(cand, n)
                rw = weights(ref, n)
                num = sum(min(cw[g], rw[g]) * rw[g] for g in cw if g in rw)
                cn = math.sqrt(sum(v * v for v in cw.values()))
                rn = math.sqrt(sum(v * v for v in rw.values()))
                pair += (num / (cn * rn) if cn > 0 and rn > 0 else 0.0) * gauss
            acc += pair / max_n
        per[iid] = 10.0 * acc / len(refs[iid])
    return per, sum(per.values()) / len(per)


class TestCiderD:
    def test_perfect_distinct_corpus_scores_ten(self):
        cands = {
            "a": ["w1", "w2", "w3", "w4", "w5"],
            "b": ["v1", "v2", "v3", "v4", "v5"],
        }
        refs = {k: [list(v)] for k, v in cands.items()}
        per, mean = cider_d(cands, refs)
        assert per == {"a": pytest.approx(10.0, abs=1e-12), "b": pytest.approx(10.0, abs=1e-12)}
        assert mean == pytest.approx(10.0, abs=1e-12)

    def test_matches_brute_force_on_random_corpora(self):
        rng = np.random.default_rng(42)
        words = [f"t{i}" for i in range(12)]
        for _ in range(5):
            refs = {}
            cands = {}
            for i in range(6):
                iid = f"img{i}"
                refs[iid] = [
                    [words[rng.integers(12)] for _ in range(rng.integers(3, 9))]
                    for _ in range(rng.integers(1, 4))
                ]
                cands[iid] = [words[rng.integers(12)] for _ in range(rng.integers(2, 9))]
            per, mean = cider_d(cands, refs)
            oper, omean = _oracle_cider(cands, refs)
            assert mean == pytest.approx(omean, abs=1e-9)
            for iid in refs:
                assert per[iid] == pytest.approx(oper[iid], abs=1e-9), iid

    def test_length_penalty_lowers_score(self):
        ref = ["a", "dog", "on", "a", "mat"]
        exact = {"i": list(ref)}
        padded = {"i": list(ref) + ["x"] * 9}
        refs = {"i": [list(ref)], "j": [["other", "words", "here", "now"]]}
        exact["j"] = ["zz"]
        padded["j"] = ["zz"]
        _, m1 = cider_d(exact, refs)
        _, m2 = cider_d(padded, refs)
        assert m2 < m1

    def test_validation(self):
        with pytest.raises(InputError, match="ids differ"):
            cider_d({"a": ["x"]}, {"b": [["x"]]})
        with pytest.raises(InputError, match="empty"):
            cider_d({}, {})
        with pytest.raises(InputError, match="no references"):
            cider_d({"a": ["x"]}, {"a": []})


class TestSpiceLite:
    def test_hand_f1(self):
        cand = tokenize("a red dog")
        refs = [tokenize("the dog is red"), tokenize("a dog on a mat")]
        # cand tuples {(dog), (dog,red)} vs union of 5 reference tuples:
        # {(dog), (dog,red), (mat), (dog,on,mat)} -> p=1, r=1/2
        assert spice_lite(cand, refs) == pytest.approx(2 / 3, abs=1e-12)

    def test_empty_sides(self):
        assert spice_lite([], [[]]) == 1.0
        assert spice_lite(tokenize("a dog"), [[]]) == 0.0
        assert spice_lite([], [tokenize("a dog")]) == 0.0

    def test_needs_references(self):
        with pytest.raises(InputError):
            spice_lite(["a"], [])

    def test_graph_tuples_lemmatized(self):
        assert graph_tuples(tokenize("two small dogs")) == {
            ("dog",),
            ("dog", "small"),
        }
        assert graph_tuples(tokenize("a dog sitting on the grass")) == {
            ("dog",),
            ("grass",),
            ("dog", "sitt on", "grass"),
        }


def _unit(v):
    return v / np.linalg.norm(v)


def _pool_fixture():
    rng = np.random.default_rng(3)
    ids = [f"p{i}" for i in range(6)]
    vecs = np.stack([_unit(rng.normal(size=16)) for _ in ids])
    return RetrievalPool("naive", ids, vecs)


class TestRetrieval:
    def test_rank_pool_matches_exhaustive_sort(self):
        pool = _pool_fixture()
        rng = np.random.default_rng(7)
        for _ in range(10):
            q = rng.normal(size=16)
            got = rank_pool(q, pool)
            cos = pool.vectors @ (q / np.linalg.norm(q))
            want = [pool.ids[j] for j in sorted(range(6), key=lambda j: (-cos[j], pool.ids[j]))]
            assert got == want

    def test_exact_ties_break_id_ascending(self):
        v = _unit(np.ones(8))
        pool = RetrievalPool("naive", ["b", "a"], np.stack([v, v]))
        assert rank_pool(np.ones(8), pool) == ["a", "b"]

    def test_zero_query_rejected(self):
        with pytest.raises(InputError):
            rank_pool(np.zeros(16), _pool_fixture())

    def test_recall_at_k(self):
        pool = _pool_fixture()
        q = pool.vectors[2] + 1e-6
        got = recall_at_k(q, "p2", pool, ks=(1, 5))
        assert got == {1: True, 5: True}
        with pytest.raises(InputError):
            recall_at_k(q, "ghost", pool)

    def test_mean_recall(self):
        pool = _pool_fixture()
        queries = [(pool.vectors[0], "p0"), (pool.vectors[1], "p3")]
        got = mean_recall(queries, pool, ks=(1, 6))
        assert got[1] == 0.5
        assert got[6] == 1.0
        with pytest.raises(InputError):
            mean_recall([], pool)

    def test_pool_validation(self):
        with pytest.raises(InputError, match="kind"):
            RetrievalPool("weird", ["a"], np.ones((1, 4)))
        with pytest.raises(InputError, match="length"):
            RetrievalPool("naive", ["a"], np.ones((2, 4)))
        with pytest.raises(InputError, match="duplicate"):
            RetrievalPool("naive", ["a", "a"], np.ones((2, 4)))


def _table_of(ids, dim=16, salt=""):
    vecs = np.stack([toy_text_embed([f"{salt}{i}"], dim=dim) for i in ids])
    return EmbeddingTable(list(ids), vecs)


class TestPoolBuilders:
    def test_naive_pool_keeps_request_order(self):
        table = _table_of(["a", "b", "c"])
        pool = build_naive_pool(table, ["c", "a"])
        assert pool.ids == ["c", "a"]
        assert np.array_equal(pool.vectors[0], table.vec("c"))

    def test_naive_pool_validation(self):
        table = _table_of(["a", "b"])
        with pytest.raises(InputError, match="duplicate"):
            build_naive_pool(table, ["a", "a"])
        with pytest.raises(InputError, match="no embedding"):
            build_naive_pool(table, ["a", "z"])

    def _hard_inputs(self, per=2):
        targets = _table_of(["t0", "t1"])
        reservoir = _table_of([f"r{i}" for i in range(8)], salt="res")
        caps = {
            "t0": CaptionSet(image_id="t0", captions=["a dog"], split="test"),
            "t1": CaptionSet(image_id="t1", captions=["a cat"], split="test"),
        }
        return targets, reservoir, caps

    def test_hard_pool_layout_and_determinism(self):
        targets, reservoir, caps = self._hard_inputs()
        p1 = build_hard_pool(targets, reservoir, caps, per_target=2, seed=0)
        p2 = build_hard_pool(targets, reservoir, caps, per_target=2, seed=0)
        assert p1.kind == "hard"
        assert p1.ids[:2] == ["t0", "t1"]
        tail = p1.ids[2:]
        assert tail == sorted(tail)
        assert set(tail) <= set(reservoir.ids)
        assert p1.ids == p2.ids
        assert np.array_equal(p1.vectors, p2.vectors)

    def test_hard_pool_includes_nearest_distractor(self):
        targets = _table_of(["t0"])
        near = targets.vec("t0") + np.full(16, 1e-3)
        rng = np.random.default_rng(0)
        res_ids = ["near", "far0", "far1"]
        res_vecs = np.stack([_unit(near)] + [_unit(rng.normal(size=16)) for _ in range(2)])
        reservoir = EmbeddingTable(res_ids, res_vecs)
        caps = {"t0": CaptionSet(image_id="t0", captions=["a dog"], split="test")}
        pool = build_hard_pool(targets, reservoir, caps, per_target=1)
        assert "near" in pool.ids

    def test_hard_pool_per_target_covers_whole_reservoir(self):
        targets, reservoir, caps = self._hard_inputs()
        pool = build_hard_pool(targets, reservoir, caps, per_target=99)
        assert set(pool.ids) == set(targets.ids) | set(reservoir.ids)

    def test_hard_pool_validation(self):
        targets, reservoir, caps = self._hard_inputs()
        with pytest.raises(InputError, match="per_target"):
            build_hard_pool(targets, reservoir, caps, per_target=0)
        with pytest.raises(InputError, match="no captions"):
            build_hard_pool(targets, reservoir, {}, per_target=1)
        with pytest.raises(InputError, match="dims differ"):
            build_hard_pool(targets, _table_of(["r0"], dim=32), caps)
        overlapping = _table_of(["t0", "r9"], salt="res")
        with pytest.raises(InputError, match="shares ids"):
            build_hard_pool(targets, overlapping, caps)

    def test_save_load_round_trip(self, tmp_path):
        pool = _pool_fixture()
        path = tmp_path / "pool.json"
        save_pool(pool, str(path))
        back = load_pool(str(path))
        assert back.kind == pool.kind
        assert back.ids == pool.ids
        assert np.array_equal(back.vectors, pool.vectors)

    def test_load_pool_errors(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_pool(str(tmp_path / "nope.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(InputError, match="malformed"):
            load_pool(str(bad))
        bad.write_text(json.dumps({"kind": "naive", "ids": ["a"]}))
        with pytest.raises(InputError, match="bad pool"):
            load_pool(str(bad))
        bad.write_text(
            json.dumps({"kind": "naive", "ids": ["a"], "dim": 4, "vectors": [[1.0, 0.0]]})
        )
        with pytest.raises(InputError, match="shape"):
            load_pool(str(bad))


class TestDiversity:
    def test_div_n_exact_values(self):
        assert div_n([["a", "b"], ["a", "c"]], 2) == 1.0
        assert div_n([["a", "b"], ["a", "b"]], 2) == 0.5
        assert div_n([["a", "a", "b"]], 1) == pytest.approx(2 / 3)

    def test_div_n_no_grams_warns(self):
        with pytest.warns(UserWarning, match="no 2-grams"):
            assert div_n([["a"]], 2) == 0.0

    def test_div_n_validation(self):
        with pytest.raises(InputError):
            div_n([["a"]], 0)

    def test_mbleu4_identical_is_one(self):
        caps = [tokenize("a man riding a wave")] * 3
        assert mbleu4(caps) == pytest.approx(1.0, abs=1e-12)

    def test_mbleu4_disjoint_is_tiny(self):
        caps = [["a", "b", "c", "d"], ["e", "f", "g", "h"], ["i", "j", "k", "l"]]
        assert mbleu4(caps) < 1e-2

    def test_mbleu4_needs_two(self):
        with pytest.raises(InputError):
            mbleu4([["a"]])

    def test_self_cider_endpoints(self):
        same = [["a", "b", "c", "d"]] * 3
        assert self_cider(same) == 0.0
        disjoint = [["a", "b", "c", "d"], ["e", "f", "g", "h"], ["i", "j", "k", "l"]]
        assert self_cider(disjoint) == pytest.approx(1.0, abs=1e-12)

    def test_self_cider_needs_two(self):
        with pytest.raises(InputError):
            self_cider([["a"]])

    def test_self_cider_degenerate_warns(self):
        with pytest.warns(UserWarning, match="degenerate"):
            assert self_cider([[], []]) == 0.0

    def test_self_cider_matches_dense_kernel_oracle(self):
        # rebuild the kernel from explicit dense count vectors, then run
        # the same spectral formula through eigh instead of eigvalsh
        rng = np.random.default_rng(9)
        words = [f"w{i}" for i in range(6)]
        for _ in range(8):
            k = int(rng.integers(2, 5))
            caps = [
                [words[rng.integers(6)] for _ in range(rng.integers(1, 8))]
                for _ in range(k)
            ]
            kern = np.zeros((k, k))
            for i in range(k):
                for j in range(k):
                    acc = 0.0
                    pen = math.exp(-((len(caps[i]) - len(caps[j])) ** 2) / 72.0)
                    for n in range(1, 5):
                        grams = sorted(
                            {
                                tuple(c[p : p + n])
                                for c in caps
                                for p in range(len(c) - n + 1)
                            }
                        )
                        mat = np.zeros((k, len(grams)))
                        for r, cap in enumerate(caps):
                            for p in range(len(cap) - n + 1):
                                mat[r, grams.index(tuple(cap[p : p + n]))] += 1.0
                        ni, nj = np.linalg.norm(mat[i]), np.linalg.norm(mat[j])
                        if ni > 0 and nj > 0:
                            clipped = float(np.minimum(mat[i], mat[j]) @ mat[j])
                            acc += clipped / (ni * nj) * pen
                    kern[i, j] = acc / 4.0
            kern = (kern + kern.T) / 2.0
            eig, _ = np.linalg.eigh(kern)
            roots = np.sqrt(np.clip(eig, 0.0, None))
            total = roots.sum()
            if total == 0.0:
                continue
            want = -math.log(roots[-1] / total) / math.log(k)
            assert self_cider(caps) == pytest.approx(want, abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.lists(st.sampled_from("abcd"), min_size=1, max_size=6),
            min_size=2,
            max_size=5,
        )
    )
    def test_self_cider_range(self, caps):
        score = self_cider(caps)
        assert -1e-12 <= score <= 1.0 + 1e-12


class TestReports:
    def test_report_add_coerces(self):
        rep = MetricReport()
        rep.add("x", np.float64(0.5))
        assert rep.scalars == {"x": 0.5}
        assert isinstance(rep.scalars["x"], float)

    def test_json_layout(self, tmp_path):
        rep = MetricReport(scalars={"b": 1.5, "a": 2.0}, per_image={"i": {"m": 0.25}})
        path = tmp_path / "r.json"
        write_report_json(rep, str(path))
        text = path.read_text()
        assert text.endswith("\n")
        obj = json.loads(text)
        assert obj == {"scalars": {"a": 2.0, "b": 1.5}, "per_image": {"i": {"m": 0.25}}}
        # sorted keys put per_image first
        assert text.index("per_image") < text.index("scalars")

    def test_csv_layout(self, tmp_path):
        rep = MetricReport(scalars={"b": 1.5, "a": 2.0, "c": 0.1})
        path = tmp_path / "r.csv"
        write_report_csv(rep, str(path))
        assert path.read_text() == "metric,value\na,2.0\nb,1.5\nc,0.1\n"
