import hashlib
from pathlib import Path

import numpy as np
import pytest

from matrir import dataset, dsp, materials

CAT = materials.default_catalog()


def tiny_config(out_dir, seed=0):
    return dataset.DatasetConfig(
        out_dir=str(out_dir),
        seed=seed,
        n_seen_scenes=4,
        n_unseen_scenes=3,
        n_val_scenes=1,
        n_seen_configs=14,
        n_unseen_configs=3,
        n_pairing_configs=3,
        n_train=100,
        n_val_samples=6,
        n_eval_per_split=8,
        n_matc_poses=1,
        single_material_poses=2,
        image_size=32,
        room_xy_range=(3.2, 5.0),
        room_z_range=(2.6, 3.4),
    )


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    cfg = tiny_config(out)
    man = dataset.build_dataset(cfg, CAT)
    return cfg, man


class TestPlan:
    def test_invariants_hold(self, built):
        _, man = built
        dataset.check_manifest_invariants(man, CAT)

    def test_no_training_scene_in_eval(self, built):
        _, man = built
        seen = set(man.seen_scenes)
        for split in ("us", "uu", "uk", "matc", "val"):
            for r in man.records(split):
                assert r.scene_seed not in seen

    def test_no_unseen_config_in_train(self, built):
        _, man = built
        bad = set(man.unseen_configs) | set(man.pairing_configs)
        for r in man.records("train"):
            assert r.config_id not in bad
        for r in man.records("us"):
            assert r.config_id not in bad

    def test_single_material_coverage(self, built):
        cfg, man = built
        same_ids = {dataset.all_same_config_id(m) for m in range(len(CAT))}
        per_scene = {}
        for r in man.records("train"):
            if r.config_id in same_ids:
                per_scene.setdefault(r.scene_seed, set()).add(r.config_id)
        for scene in man.seen_scenes:
            assert per_scene.get(scene) == same_ids

    def test_leakage_detected(self, built):
        _, man = built
        # corrupt a copy: move a training scene record into the eval split
        bad = dataset.SplitManifest.from_json(man.root, man.to_json())
        r = bad.samples["us"][0]
        bad.samples["us"][0] = dataset.SampleRecord(
            r.sample_id, r.split, bad.seen_scenes[0], r.pose_variant,
            r.config_id, r.rel_dir,
        )
        with pytest.raises(dataset.LeakageError):
            dataset.check_manifest_invariants(bad, CAT)

    def test_invalid_counts_rejected(self, tmp_path):
        cfg = tiny_config(tmp_path)
        cfg.n_unseen_scenes = 1
        with pytest.raises(dataset.DatasetError):
            dataset.plan_manifest(cfg, CAT)
        cfg2 = tiny_config(tmp_path)
        cfg2.n_seen_configs = 5
        with pytest.raises(dataset.DatasetError):
            dataset.plan_manifest(cfg2, CAT)

    def test_paper_scale_plan_shapes(self, tmp_path):
        # reference shape for documentation: the full protocol plans without
        # building (76+8 scenes, 2405/268 configurations)
        cfg = dataset.DatasetConfig(
            out_dir=str(tmp_path), n_seen_scenes=76, n_unseen_scenes=8,
            n_val_scenes=3, n_seen_configs=2405, n_unseen_configs=268,
            n_pairing_configs=100, n_train=20000, n_eval_per_split=2000,
        )
        man = dataset.plan_manifest(cfg, CAT)
        dataset.check_manifest_invariants(man, CAT)
        assert len(man.seen_scenes) == 76
        assert len(man.test_scenes) == 5
        assert len(man.seen_configs) == 2405


class TestFiles:
    def test_sample_files_exist_and_load(self, built):
        _, man = built
        r = man.records("train")[0]
        d = man.sample_dir(r)
        for name in ("V.png", "D.png", "M.png", "rir.wav", "spec.bin"):
            assert (d / name).exists(), name
        v, depth, mask = dataset.load_observation(d)
        assert v.shape == (32, 32, 3)
        assert depth.shape == (32, 32)
        assert mask.max() < len(CAT)
        rir = dataset.load_rir(d)
        assert rir.samples.shape == (2, 8000)
        spec = dataset.load_spectrogram(d)
        assert spec.magnitudes.shape == (2, 256, 256)

    def test_spectrogram_matches_rir(self, built):
        _, man = built
        r = man.records("uu")[0]
        d = man.sample_dir(r)
        rir = dataset.load_rir(d)
        spec = dataset.load_spectrogram(d)
        recomputed = dsp.stft(rir)
        # stored as float32; wav round-trip is float32 too
        np.testing.assert_allclose(
            spec.magnitudes, recomputed.magnitudes, atol=2e-4, rtol=1e-3
        )

    def test_mask_matches_config(self, built):
        _, man = built
        r = man.records("matc")[0]
        d = man.sample_dir(r)
        _, _, mask = dataset.load_observation(d)
        cfg_tuple = man.configs[r.config_id]
        assert set(np.unique(mask)) <= set(cfg_tuple)

    def test_manifest_round_trip(self, built):
        _, man = built
        loaded = dataset.load_manifest(man.root)
        assert loaded.to_json() == man.to_json()
        assert dataset.load_catalog(man.root) == CAT


class TestDeterminism:
    def test_byte_identical_rebuild(self, tmp_path):
        cfg_a = tiny_config(tmp_path / "a", seed=7)
        cfg_b = tiny_config(tmp_path / "b", seed=7)
        for c in (cfg_a, cfg_b):
            c.n_train = 50
            c.single_material_poses = 1
            c.n_eval_per_split = 4
        man_a = dataset.build_dataset(cfg_a, CAT)
        man_b = dataset.build_dataset(cfg_b, CAT)
        assert man_a.to_json() == man_b.to_json()
        for r in man_a.records("train")[:3] + man_a.records("uu")[:2]:
            for name in ("V.png", "D.png", "M.png", "rir.wav", "spec.bin"):
                ha = hashlib.sha256((man_a.sample_dir(r) / name).read_bytes()).hexdigest()
                hb = hashlib.sha256((man_b.sample_dir(r) / name).read_bytes()).hexdigest()
                assert ha == hb, (r.sample_id, name)
