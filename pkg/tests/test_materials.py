import numpy as np

from matrir import materials


def test_catalog_has_eleven_classes():
    assert len(materials.default_catalog()) == 11


def test_catalog_ids_contiguous():
    cat = materials.default_catalog()
    assert [m.id for m in cat] == list(range(len(cat)))


def test_absorption_sanity_ordering():
    by_name = {m.name: m for m in materials.default_catalog()}
    assert all(a >= 0.8 for a in by_name["sound-proof"].absorption)
    # hard reflectors stay below 0.1 in the low bands
    for name in ("steel", "glass"):
        assert by_name[name].absorption[0] <= 0.1
        assert by_name[name].absorption[1] <= 0.1


def test_absorption_floor_keeps_simulation_stable():
    for m in materials.default_catalog():
        assert min(m.absorption) >= 0.01


def test_display_colors_distinct():
    cat = materials.default_catalog()
    colors = {m.display_color for m in cat}
    assert len(colors) == len(cat)


def test_json_round_trip():
    cat = materials.default_catalog()
    back = materials.catalog_from_json(materials.catalog_to_json(cat))
    assert back == cat


def test_absorption_matrix_shape():
    mat = materials.absorption_matrix(materials.default_catalog())
    assert mat.shape == (11, 6)
    assert np.all((mat >= 0) & (mat <= 1))
