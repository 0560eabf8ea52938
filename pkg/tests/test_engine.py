import numpy as np
import pytest

from iriscap.dataset import build_plan
from iriscap.engine import MissingTemplateError, SystemConfig, resume, run_nn
from iriscap.matcher import match_with_elimination, pair_seed
from iriscap.store import (
    GENUINE,
    IMPOSTER,
    ConfigMismatchError,
    IncompleteStoreError,
    ScoreStore,
    StoreError,
)
from iriscap.synth import PopulationParams, generate_population
from iriscap.template import TemplateGeometry, pack_template


def run(pop_plan, path, **kw):
    pop, plan = pop_plan
    cfg = kw.pop("config", SystemConfig())
    return run_nn(plan, pop.templates, cfg, path, **kw)


def same_records(x, y):
    # byte comparison: exact, and NaN scores of empty-overlap pairs compare equal
    return x.sorted_records().tobytes() == y.sorted_records().tobytes()


class TestRun:
    def test_counts_and_values(self, small_population, tmp_path):
        pop, plan = small_population
        store = run(small_population, tmp_path / "s.store", chunk_size=10)
        assert store.complete and len(store.imposters) == 66 and len(store.genuine) == 36
        samples = plan.samples()
        spec = SystemConfig().shift_spec
        for rec in store.records[::7]:
            a, b = samples[rec["a"]], samples[rec["b"]]
            assert (rec["kind"] == GENUINE) == (a.identity_id == b.identity_id)
            ms = match_with_elimination(pop.templates[a.sample_id], pop.templates[b.sample_id],
                                        spec, 100, 0)
            assert (rec["hd"], rec["best_shift"], rec["compared_bits"]) == \
                (ms.hd, ms.best_shift, ms.compared_bits)

    def test_elimination_values(self, small_population, tmp_path):
        pop, plan = small_population
        cfg = SystemConfig(feature_level=25, experiment_seed=9)
        store = run(small_population, tmp_path / "s.store", config=cfg)
        samples = plan.samples()
        for rec in store.records[::5]:
            a, b = samples[rec["a"]].sample_id, samples[rec["b"]].sample_id
            ms = match_with_elimination(pop.templates[a], pop.templates[b], cfg.shift_spec, 25,
                                        pair_seed(9, a, b))
            assert (rec["hd"], rec["best_shift"], rec["compared_bits"], rec["disagreeing_bits"]) \
                == (ms.hd, ms.best_shift, ms.compared_bits, ms.disagreeing_bits)

    def test_worker_and_chunk_invariance(self, small_population, tmp_path):
        one = run(small_population, tmp_path / "a.store", workers=1, chunk_size=64)
        eight = run(small_population, tmp_path / "b.store", workers=8, chunk_size=7)
        assert same_records(one, eight)
        reopened = ScoreStore.open(tmp_path / "b.store")
        assert reopened.complete and same_records(reopened, one)

    def test_single_identity(self, tmp_path):
        pop = generate_population(PopulationParams(n_identities=1, seed=1))
        store = run_nn(build_plan(pop.records), pop.templates, SystemConfig(), tmp_path / "s")
        assert len(store.imposters) == 0 and len(store.genuine) == 3

    def test_missing_template(self, small_population, tmp_path):
        pop, plan = small_population
        partial = dict(pop.templates)
        del partial["id03_s1"]
        with pytest.raises(MissingTemplateError, match="id03_s1"):
            run_nn(plan, partial, SystemConfig(), tmp_path / "s")

    def test_loader_callable(self, small_population, tmp_path):
        pop, plan = small_population
        store = run_nn(plan, lambda r: pop.templates[r.sample_id], SystemConfig(), tmp_path / "s")
        assert same_records(store, run(small_population, tmp_path / "t"))

    def test_wrong_geometry(self, small_population, tmp_path):
        with pytest.raises(ValueError, match="geometry"):
            run(small_population, tmp_path / "s", config=SystemConfig(dimension_tag="D1"))

    def test_empty_overlap_recorded(self, tmp_path):
        geo = TemplateGeometry.stripped("D2")
        z = np.zeros(geo.shape, dtype=bool)
        pop = generate_population(PopulationParams(n_identities=2, seed=1))
        templates = dict(pop.templates)
        templates["id0_s0"] = pack_template(z, z, geo, "id0", "id0_s0")
        store = run_nn(build_plan(pop.records), templates, SystemConfig(), tmp_path / "s")
        imp = store.imposters
        assert imp["compared_bits"][0] == 0 and np.isnan(imp["hd"][0])

    def test_csv_export(self, small_population, tmp_path):
        store = run(small_population, tmp_path / "s")
        store.to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "identity_a,identity_b,kind,hd,best_shift,compared_bits"
        assert len(lines) == 1 + 66 + 36
        assert lines[1].startswith("id00,id01,imposter,")
        assert lines[-1].split(",")[2] == "genuine"


class TestResume:
    def test_kill_and_resume(self, small_population, tmp_path):
        pop, plan = small_population
        full = run(small_population, tmp_path / "full.store", chunk_size=8)
        half = full.n_chunks // 2
        part = run(small_population, tmp_path / "part.store", chunk_size=8, max_chunks=half)
        assert part.watermark == half and not part.complete
        with pytest.raises(IncompleteStoreError):
            ScoreStore.open(tmp_path / "part.store").require_complete()
        done = resume(tmp_path / "part.store", plan, pop.templates)
        assert done.complete and same_records(done, full)
        assert (tmp_path / "part.store").read_bytes() == (tmp_path / "full.store").read_bytes()

    def test_resume_complete_is_noop(self, small_population, tmp_path):
        pop, plan = small_population
        run(small_population, tmp_path / "s", chunk_size=16)
        before = (tmp_path / "s").read_bytes()
        resume(tmp_path / "s", plan, pop.templates, workers=4)
        assert (tmp_path / "s").read_bytes() == before

    def test_config_mismatch(self, small_population, tmp_path):
        pop, plan = small_population
        run(small_population, tmp_path / "s", max_chunks=0)
        with pytest.raises(ConfigMismatchError):
            resume(tmp_path / "s", plan, pop.templates, SystemConfig(experiment_seed=1))
        with pytest.raises(ConfigMismatchError):
            run(small_population, tmp_path / "s", resume=True, chunk_size=99)

    def test_truncated_tail(self, small_population, tmp_path):
        pop, plan = small_population
        full = run(small_population, tmp_path / "full", chunk_size=10)
        path = tmp_path / "cut"
        run(small_population, path, chunk_size=10, max_chunks=5)
        raw = path.read_bytes()
        # simulate a crash in the middle of writing chunk 4
        path.write_bytes(raw[:len(raw) - 200])
        reopened = ScoreStore.open(path)
        assert reopened.watermark == 4
        done = resume(path, plan, pop.templates)
        assert same_records(done, full)
        assert path.read_bytes() == (tmp_path / "full").read_bytes()

    def test_corrupt_chunk_crc(self, small_population, tmp_path):
        path = tmp_path / "s"
        run(small_population, path, chunk_size=10, max_chunks=3)
        raw = bytearray(path.read_bytes())
        raw[-60] ^= 0xFF  # inside the last chunk body
        path.write_bytes(bytes(raw))
        assert ScoreStore.open(path).watermark == 2

    def test_not_a_store(self, tmp_path):
        (tmp_path / "x").write_bytes(b"nope" + b"\0" * 20)
        with pytest.raises(StoreError):
            ScoreStore.open(tmp_path / "x")


def test_store_key_ignores_operating_point():
    a = SystemConfig(operating_point=0.1)
    b = SystemConfig(operating_point=0.001)
    assert a.store_key() == b.store_key() and a.label() == "D2_single_ALLQ_f100"
    with pytest.raises(ValueError):
        SystemConfig(feature_level=30)
    assert IMPOSTER != GENUINE
