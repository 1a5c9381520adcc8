"""Dataset builder: scenes x material configurations -> on-disk samples.

A sample is one (scene geometry, pose variant, configuration) triple with the
rendered observation, simulated binaural RIR and its spectrogram. Scene
identity for the seen/unseen protocol is the geometry seed; pose variants
never cross the split boundary. Configurations are material tuples over the
nine paintable surface slots (six walls + up to three boxes).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import dsp, fileio
from .ism import adaptive_max_order, simulate_rir
from .materials import MaterialSpec, catalog_from_json, catalog_to_json, default_catalog, palette_array
from .scenes import MaterialAssignment, SceneSpec, WALL_NAMES, generate_scene, render_observation

N_CONFIG_SLOTS = 9  # 6 walls + up to 3 boxes
MANIFEST_NAME = "manifest.json"
CATALOG_NAME = "catalog.json"
SPLIT_NAMES = ("train", "val", "us", "uu", "uk", "matc")


class DatasetError(ValueError):
    pass


class LeakageError(DatasetError):
    pass


@dataclass
class DatasetConfig:
    out_dir: str
    seed: int = 0
    n_seen_scenes: int = 40
    n_unseen_scenes: int = 5
    n_val_scenes: int = 2
    n_seen_configs: int = 120
    n_unseen_configs: int = 20
    n_pairing_configs: int = 20
    n_train: int = 8000
    n_val_samples: int = 200
    n_eval_per_split: int = 500
    n_matc_poses: int = 2
    single_material_poses: int = 2
    image_size: int = 128
    room_xy_range: tuple = (2.4, 9.0)
    room_z_range: tuple = (2.4, 5.0)
    max_order: int = 0  # 0 = adaptive per scene

    def validate(self, n_materials: int):
        if self.n_unseen_scenes < 2 or self.n_val_scenes < 1:
            raise DatasetError("need at least 2 unseen scenes (1 val + 1 test)")
        if self.n_unseen_scenes <= self.n_val_scenes:
            raise DatasetError("unseen scenes must exceed validation scenes")
        if self.n_seen_configs < n_materials + 1:
            raise DatasetError(
                "seen configurations must cover all single-material tuples"
            )
        if min(self.n_unseen_configs, self.n_pairing_configs) < 1:
            raise DatasetError("need unseen and pairing configurations")
        if min(self.n_train, self.n_val_samples, self.n_eval_per_split) < 1:
            raise DatasetError("sample counts must be positive")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    split: str
    scene_seed: int
    pose_variant: int
    config_id: str
    rel_dir: str


@dataclass
class SplitManifest:
    root: Path
    seed: int
    image_size: int
    seen_scenes: list
    val_scenes: list
    test_scenes: list
    configs: dict  # id -> tuple of material ids
    seen_configs: list
    unseen_configs: list
    pairing_configs: list
    samples: dict  # split -> list[SampleRecord]
    room_xy_range: tuple = (2.4, 9.0)
    room_z_range: tuple = (2.4, 5.0)
    max_order: int = 0

    @property
    def unseen_scenes(self):
        return self.val_scenes + self.test_scenes

    def records(self, split: str):
        return self.samples[split]

    def sample_dir(self, record: SampleRecord) -> Path:
        return self.root / record.rel_dir

    def scene_for(self, record: SampleRecord) -> SceneSpec:
        return generate_scene(
            record.scene_seed,
            record.pose_variant,
            xy_range=tuple(self.room_xy_range),
            z_range=tuple(self.room_z_range),
        )

    def assignment_for(self, record: SampleRecord, scene: SceneSpec) -> MaterialAssignment:
        return assignment_from_config(scene, self.configs[record.config_id])

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": 1,
                "seed": self.seed,
                "image_size": self.image_size,
                "scenes": {
                    "seen": self.seen_scenes,
                    "unseen_val": self.val_scenes,
                    "unseen_test": self.test_scenes,
                },
                "configs": {k: list(v) for k, v in self.configs.items()},
                "config_splits": {
                    "seen": self.seen_configs,
                    "unseen": self.unseen_configs,
                    "pairings": self.pairing_configs,
                },
                "sim": {
                    "room_xy_range": list(self.room_xy_range),
                    "room_z_range": list(self.room_z_range),
                    "max_order": self.max_order,
                },
                "samples": {
                    split: [asdict(r) for r in recs]
                    for split, recs in self.samples.items()
                },
            },
            indent=1,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, root: Path, text: str) -> "SplitManifest":
        d = json.loads(text)
        samples = {
            split: [SampleRecord(**r) for r in recs]
            for split, recs in d["samples"].items()
        }
        return cls(
            root=Path(root),
            seed=d["seed"],
            image_size=d["image_size"],
            seen_scenes=d["scenes"]["seen"],
            val_scenes=d["scenes"]["unseen_val"],
            test_scenes=d["scenes"]["unseen_test"],
            configs={k: tuple(v) for k, v in d["configs"].items()},
            seen_configs=d["config_splits"]["seen"],
            unseen_configs=d["config_splits"]["unseen"],
            pairing_configs=d["config_splits"]["pairings"],
            samples=samples,
            room_xy_range=tuple(d["sim"]["room_xy_range"]),
            room_z_range=tuple(d["sim"]["room_z_range"]),
            max_order=d["sim"]["max_order"],
        )


def assignment_from_config(scene: SceneSpec, config: tuple) -> MaterialAssignment:
    mapping = {w: config[i] for i, w in enumerate(WALL_NAMES)}
    for bi in range(len(scene.boxes)):
        mapping[f"box{bi}"] = config[6 + bi]
    return MaterialAssignment(mapping)


def all_same_config_id(material_id: int) -> str:
    return f"cfg_same{material_id:02d}"


def _generate_configs(rng, n_materials, cfg: DatasetConfig):
    """Seen/unseen/pairing configuration universe. Single-material tuples are
    always part of the seen set (they anchor the material metrics)."""
    configs = {}
    seen, unseen, pairings = [], [], []
    taken = set()
    for m in range(n_materials):
        t = (m,) * N_CONFIG_SLOTS
        cid = all_same_config_id(m)
        configs[cid] = t
        seen.append(cid)
        taken.add(t)

    def draw_tuple():
        for _ in range(10_000):
            t = tuple(int(x) for x in rng.integers(0, n_materials, N_CONFIG_SLOTS))
            if t not in taken:
                taken.add(t)
                return t
        raise DatasetError("configuration space exhausted")

    for i in range(cfg.n_seen_configs - n_materials):
        cid = f"cfg_s{i:04d}"
        configs[cid] = draw_tuple()
        seen.append(cid)
    for i in range(cfg.n_unseen_configs):
        cid = f"cfg_u{i:04d}"
        configs[cid] = draw_tuple()
        unseen.append(cid)
    for i in range(cfg.n_pairing_configs):
        for _ in range(10_000):
            a, b = rng.choice(len(seen), size=2, replace=False)
            ta, tb = configs[seen[a]], configs[seen[b]]
            t = ta[:6] + tb[6:]  # walls from one seen config, boxes from another
            if t not in taken:
                taken.add(t)
                break
        else:
            raise DatasetError("could not derive unseen pairings")
        cid = f"cfg_p{i:04d}"
        configs[cid] = t
        pairings.append(cid)
    return configs, seen, unseen, pairings


def _scene_seeds(seed: int, count: int):
    ss = np.random.SeedSequence(seed)
    raw = ss.generate_state(count * 2, dtype=np.uint32)
    out, taken = [], set()
    for v in raw:
        v = int(v) % (2**31)
        if v not in taken:
            taken.add(v)
            out.append(v)
        if len(out) == count:
            return out
    raise DatasetError("could not derive unique scene seeds")


def _draw_samples(rng, split, scene_seeds, config_ids, count, taken, max_variant=64):
    records = []
    attempts = 0
    while len(records) < count:
        attempts += 1
        if attempts > 100 * count + 10_000:
            raise DatasetError(f"cannot draw {count} unique samples for {split}")
        scene = int(scene_seeds[rng.integers(0, len(scene_seeds))])
        cid = config_ids[rng.integers(0, len(config_ids))]
        variant = int(rng.integers(0, max_variant))
        key = (scene, variant, cid)
        if key in taken:
            continue
        taken.add(key)
        records.append((scene, variant, cid))
    return records


def plan_manifest(cfg: DatasetConfig, catalog: list[MaterialSpec]) -> SplitManifest:
    """Deterministic sample plan satisfying the split invariants."""
    cfg.validate(len(catalog))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xDA7A]))
    n_scenes = cfg.n_seen_scenes + cfg.n_unseen_scenes
    seeds = _scene_seeds(cfg.seed, n_scenes)
    seen = seeds[: cfg.n_seen_scenes]
    unseen = seeds[cfg.n_seen_scenes :]
    val = unseen[: cfg.n_val_scenes]
    test = unseen[cfg.n_val_scenes :]

    configs, seen_cfg, unseen_cfg, pairing_cfg = _generate_configs(
        rng, len(catalog), cfg
    )

    taken: set = set()
    train: list = []
    # guaranteed single-material coverage on every seen scene (anchors the
    # matcher and the material judges, which train on this split only)
    for scene in seen:
        for m in range(len(catalog)):
            for k in range(cfg.single_material_poses):
                key = (scene, k, all_same_config_id(m))
                taken.add(key)
                train.append(key)
    fill = cfg.n_train - len(train)
    if fill < 0:
        raise DatasetError(
            f"n_train={cfg.n_train} below the guaranteed single-material "
            f"block ({len(train)}); raise n_train or lower coverage"
        )
    train += _draw_samples(rng, "train", seen, seen_cfg, fill, taken)

    val_recs = _draw_samples(rng, "val", val, seen_cfg, cfg.n_val_samples, taken)
    us = _draw_samples(rng, "us", test, seen_cfg, cfg.n_eval_per_split, taken)
    uu = _draw_samples(rng, "uu", test, unseen_cfg, cfg.n_eval_per_split, taken)
    uk = _draw_samples(rng, "uk", test, pairing_cfg, cfg.n_eval_per_split, taken)
    matc = [
        (scene, k, all_same_config_id(m))
        for scene in test
        for m in range(len(catalog))
        for k in range(cfg.n_matc_poses)
    ]

    samples = {}
    for split, recs in (
        ("train", train), ("val", val_recs), ("us", us), ("uu", uu),
        ("uk", uk), ("matc", matc),
    ):
        samples[split] = [
            SampleRecord(
                sample_id=f"{split}_{i:06d}",
                split=split,
                scene_seed=scene,
                pose_variant=variant,
                config_id=cid,
                rel_dir=f"samples/{split}_{i:06d}",
            )
            for i, (scene, variant, cid) in enumerate(recs)
        ]

    return SplitManifest(
        root=Path(cfg.out_dir),
        seed=cfg.seed,
        image_size=cfg.image_size,
        seen_scenes=list(seen),
        val_scenes=list(val),
        test_scenes=list(test),
        configs=configs,
        seen_configs=seen_cfg,
        unseen_configs=unseen_cfg,
        pairing_configs=pairing_cfg,
        samples=samples,
        room_xy_range=cfg.room_xy_range,
        room_z_range=cfg.room_z_range,
        max_order=cfg.max_order,
    )


def check_manifest_invariants(man: SplitManifest, catalog=None):
    """Raise LeakageError on any violation of the split protocol."""
    seen = set(man.seen_scenes)
    val = set(man.val_scenes)
    test = set(man.test_scenes)
    if seen & (val | test):
        raise LeakageError("seen and unseen scenes overlap")
    if val & test:
        raise LeakageError("validation and test scenes overlap")
    cs, cu, cp = map(set, (man.seen_configs, man.unseen_configs, man.pairing_configs))
    if cs & cu or cs & cp or cu & cp:
        raise LeakageError("configuration id splits overlap")
    tuples_s = {man.configs[c] for c in cs}
    tuples_u = {man.configs[c] for c in cu}
    tuples_p = {man.configs[c] for c in cp}
    if tuples_s & tuples_u or (tuples_s | tuples_u) & tuples_p:
        raise LeakageError("configuration tuples leak across splits")

    allowed = {
        "train": (seen, cs),
        "val": (val, cs),
        "us": (test, cs),
        "uu": (test, cu),
        "uk": (test, cp),
        "matc": (test, cs),
    }
    for split, recs in man.samples.items():
        scenes_ok, cfgs_ok = allowed[split]
        for r in recs:
            if r.scene_seed not in scenes_ok:
                raise LeakageError(f"{split} sample {r.sample_id} uses a foreign scene")
            if r.config_id not in cfgs_ok:
                raise LeakageError(f"{split} sample {r.sample_id} uses a foreign config")
    for split in ("us", "uu", "uk", "matc", "val"):
        for r in man.samples.get(split, []):
            if r.scene_seed in seen:
                raise LeakageError(f"eval sample {r.sample_id} leaks a training scene")


def _write_observation(sample_dir: Path, obs, catalog):
    Image.fromarray(obs.image, mode="RGB").save(sample_dir / "V.png")
    depth16 = np.round(obs.depth * 65535.0).astype(np.uint16)
    Image.fromarray(depth16).save(sample_dir / "D.png")  # 16-bit grayscale
    pal = Image.fromarray(obs.mask.astype(np.uint8), mode="P")
    palette = palette_array(catalog)
    flat = np.zeros((256, 3), dtype=np.uint8)
    flat[: len(palette)] = palette
    pal.putpalette(flat.reshape(-1).tolist())
    pal.save(sample_dir / "M.png")


def load_observation(sample_dir: Path):
    """(V uint8 HxWx3, depth float HxW in [0,1], mask int HxW)."""
    v = np.asarray(Image.open(sample_dir / "V.png").convert("RGB"))
    d = np.asarray(Image.open(sample_dir / "D.png")).astype(np.float64) / 65535.0
    m = np.asarray(Image.open(sample_dir / "M.png")).astype(np.int64)
    return v, d, m


def load_rir(sample_dir: Path) -> dsp.RIRWaveform:
    samples, rate = fileio.wav_read(sample_dir / "rir.wav")
    return dsp.RIRWaveform(samples, rate, samples.shape[1] / rate)


def load_spectrogram(sample_dir: Path) -> dsp.Spectrogram:
    return fileio.specbin_read(sample_dir / "spec.bin")


def build_sample(man: SplitManifest, record: SampleRecord, catalog) -> None:
    scene = man.scene_for(record)
    assignment = man.assignment_for(record, scene)
    obs = render_observation(scene, assignment, catalog, size=man.image_size)
    order = man.max_order or adaptive_max_order(scene)
    rir = simulate_rir(scene, assignment, catalog, max_order=order)
    spec = dsp.stft(rir)

    sample_dir = man.sample_dir(record)
    sample_dir.mkdir(parents=True, exist_ok=True)
    _write_observation(sample_dir, obs, catalog)
    fileio.wav_write(sample_dir / "rir.wav", rir.samples, rir.sample_rate, "float32")
    fileio.specbin_write(sample_dir / "spec.bin", spec)


def build_dataset(
    cfg: DatasetConfig, catalog=None, progress=None
) -> SplitManifest:
    """Generate the full dataset on disk; single-writer, deterministic.

    Samples are simulated grouped by scene geometry so the image-source
    lattice cache is effective; the manifest order is independent of the
    simulation order.
    """
    catalog = catalog or default_catalog()
    man = plan_manifest(cfg, catalog)
    check_manifest_invariants(man, catalog)

    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / CATALOG_NAME).write_text(catalog_to_json(catalog))

    todo = [r for recs in man.samples.values() for r in recs]
    todo.sort(key=lambda r: (r.scene_seed, r.pose_variant, r.config_id, r.sample_id))
    for i, record in enumerate(todo):
        build_sample(man, record, catalog)
        if progress and (i + 1) % 50 == 0:
            progress(i + 1, len(todo))

    (root / MANIFEST_NAME).write_text(man.to_json())
    return man


def load_manifest(root) -> SplitManifest:
    root = Path(root)
    return SplitManifest.from_json(root, (root / MANIFEST_NAME).read_text())


def load_catalog(root) -> list[MaterialSpec]:
    return catalog_from_json(Path(root) / CATALOG_NAME)
