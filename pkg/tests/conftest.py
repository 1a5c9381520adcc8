import pytest

from matrir import dataset, materials

CATALOG = materials.default_catalog()


def small_dataset_config(out_dir, seed=0):
    """Small but structurally complete dataset for unit tests."""
    return dataset.DatasetConfig(
        out_dir=str(out_dir),
        seed=seed,
        n_seen_scenes=6,
        n_unseen_scenes=3,
        n_val_scenes=1,
        n_seen_configs=16,
        n_unseen_configs=4,
        n_pairing_configs=4,
        n_train=96,
        n_val_samples=8,
        n_eval_per_split=10,
        n_matc_poses=1,
        single_material_poses=1,
        image_size=32,
        room_xy_range=(3.2, 5.0),
        room_z_range=(2.6, 3.4),
    )


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_ds")
    cfg = small_dataset_config(out)
    man = dataset.build_dataset(cfg, CATALOG)
    return man


@pytest.fixture(scope="session")
def catalog():
    return CATALOG
