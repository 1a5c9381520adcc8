import numpy as np
import pytest

from matrir import dsp, ism, materials, scenes

CAT = materials.default_catalog()


def uniform_catalog(alpha):
    return [materials.MaterialSpec(0, "uniform", (alpha,) * 6, (1, 2, 3))]


def small_room(seed=1):
    return scenes.SceneSpec(
        (4.0, 3.2, 2.8), (), scenes.Pose((2.0, 1.5, 1.4), 0.3), seed
    )


class TestPhysics:
    def test_perfect_absorption_keeps_only_direct_path(self):
        sc = small_room()
        rir = ism.simulate_rir(sc, scenes.all_same_assignment(sc, 0), uniform_catalog(1.0))
        for ch in rir.samples:
            peak_idx = int(np.abs(ch).argmax())
            # direct path: 0.09 m at 343 m/s is 4 samples
            assert peak_idx == 4
            rest = np.delete(np.abs(ch), peak_idx)
            assert rest.max() < 1e-9 * np.abs(ch[peak_idx])

    @pytest.mark.parametrize("alpha", [0.15, 0.25, 0.35])
    def test_uniform_absorption_tracks_sabine(self, alpha):
        sc = small_room()
        rir = ism.simulate_rir(
            sc, scenes.all_same_assignment(sc, 0), uniform_catalog(alpha),
            max_order=ism.adaptive_max_order(sc),
        )
        rt = dsp.estimate_rt60(rir)
        sab = ism.sabine_rt60(sc, alpha)
        assert abs(rt - sab) / sab < 0.25

    def test_doubling_dimensions_raises_rt60(self):
        alpha = 0.3
        sc1 = small_room()
        sc2 = scenes.SceneSpec(
            tuple(2 * d for d in sc1.room_dims), (), scenes.Pose((4.0, 3.0, 2.8), 0.3), 2
        )
        r1 = ism.simulate_rir(sc1, scenes.all_same_assignment(sc1, 0),
                              uniform_catalog(alpha), max_order=ism.adaptive_max_order(sc1))
        r2 = ism.simulate_rir(sc2, scenes.all_same_assignment(sc2, 0),
                              uniform_catalog(alpha), max_order=ism.adaptive_max_order(sc2))
        assert dsp.estimate_rt60(r2) > dsp.estimate_rt60(r1)

    def test_energy_monotone_in_absorption(self):
        sc = scenes.generate_scene(42, xy_range=(3.5, 6.0), z_range=(2.6, 3.5))
        base = {s: 8 for s in sc.surfaces}  # wood
        e0 = (ism.simulate_rir(sc, scenes.MaterialAssignment(base), CAT).samples ** 2).sum()
        for surf in sc.surfaces:
            raised = dict(base)
            raised[surf] = 6  # acoustic tile absorbs more in every band
            e = (ism.simulate_rir(sc, scenes.MaterialAssignment(raised), CAT).samples ** 2).sum()
            assert e <= e0

    def test_equal_area_swap_symmetry(self):
        sc = scenes.SceneSpec((4.0, 4.0, 4.0), (), scenes.Pose((2.0, 2.0, 2.0), 0.0), 11)
        order = ism.adaptive_max_order(sc)
        for s1, s2 in (("floor", "wall_x0"), ("floor", "ceiling"), ("wall_y0", "wall_y1")):
            m1 = {s: 2 for s in sc.surfaces}
            m1[s1] = 6
            m2 = {s: 2 for s in sc.surfaces}
            m2[s2] = 6
            r1 = ism.simulate_rir(sc, scenes.MaterialAssignment(m1), CAT, max_order=order)
            r2 = ism.simulate_rir(sc, scenes.MaterialAssignment(m2), CAT, max_order=order)
            t1, t2 = dsp.estimate_rt60(r1), dsp.estimate_rt60(r2)
            assert abs(t1 - t2) / t1 < 0.01

    def test_near_zero_absorption_rejected(self):
        sc = small_room()
        with pytest.raises(ism.SimulationError):
            ism.simulate_rir(sc, scenes.all_same_assignment(sc, 0), uniform_catalog(0.001))

    def test_box_absorption_shortens_decay(self):
        sc = small_room()
        box = scenes.Box((0.6, 0.6, 0.0), (1.0, 1.0, 1.0))
        sc_box = scenes.SceneSpec(sc.room_dims, (box,), sc.pose, 12)
        a_plain = scenes.all_same_assignment(sc, 1)
        a_box = scenes.MaterialAssignment(
            {**{w: 1 for w in scenes.WALL_NAMES}, "box0": 5}  # absorbing box
        )
        r_plain = ism.simulate_rir(sc, a_plain, CAT, max_order=40)
        r_box = ism.simulate_rir(sc_box, a_box, CAT, max_order=40)
        e_plain = (r_plain.samples**2).sum()
        e_box = (r_box.samples**2).sum()
        assert e_box < e_plain


class TestDeterminismAndBackends:
    def test_simulation_determinism(self):
        sc = scenes.generate_scene(3, xy_range=(3.0, 5.0), z_range=(2.5, 3.2))
        assign = scenes.all_same_assignment(sc, 2)
        a = ism.simulate_rir(sc, assign, CAT)
        b = ism.simulate_rir(sc, assign, CAT)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_backends_bit_identical(self, monkeypatch):
        if ism.kernel_backend() != "compiled":
            pytest.skip("compiled kernel unavailable")
        sc = scenes.generate_scene(5, xy_range=(3.0, 5.0), z_range=(2.5, 3.2))
        assign = scenes.MaterialAssignment(
            {s: (i * 3 + 1) % 11 for i, s in enumerate(sc.surfaces)}
        )
        compiled = ism.simulate_rir(sc, assign, CAT)
        monkeypatch.setenv("MATRIR_FORCE_PURE", "1")
        ism._ENUM_CACHE.clear()
        pure = ism.simulate_rir(sc, assign, CAT)
        np.testing.assert_array_equal(compiled.samples, pure.samples)

    def test_filters_sum_to_delta(self):
        filters, mid = ism.build_band_filters()
        total = filters.sum(axis=0)
        expected = np.zeros_like(total)
        expected[mid] = 1.0
        np.testing.assert_allclose(total, expected, atol=1e-12)

    def test_binaural_channels_differ(self):
        sc = scenes.generate_scene(8, xy_range=(3.0, 5.0), z_range=(2.5, 3.2))
        rir = ism.simulate_rir(sc, scenes.all_same_assignment(sc, 2), CAT)
        assert not np.array_equal(rir.samples[0], rir.samples[1])

    def test_output_shape_and_finiteness(self):
        sc = small_room()
        rir = ism.simulate_rir(sc, scenes.all_same_assignment(sc, 3), CAT)
        assert rir.samples.shape == (2, 8000)
        assert np.all(np.isfinite(rir.samples))
