"""Benchmark: compiled image-source kernel vs the pure-numpy fallback.

Runs the accumulation kernel on realistic workloads (the per-image inner loop
is the hot path when building datasets) and the full simulate_rir pipeline
with each backend. Results print as a small table; both backends must agree
bit for bit.

    python benchmarks/bench_ism.py
"""
from __future__ import annotations

import os
import time

import numpy as np

from matrir import ism, materials, scenes

try:
    from matrir import _ism as ext
except ImportError:
    ext = None


def _timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_workload(scene, assignment, catalog, max_order):
    alpha = ism._wall_absorption(scene, assignment, catalog)
    refl = np.ascontiguousarray(np.sqrt(1.0 - alpha))
    max_dist = ism.SPEED_OF_SOUND * 0.516 + 1.0
    ism._ENUM_CACHE.clear()
    images, exponents, total_order, signs = ism._enumerate_images(
        scene, max_order, max_dist
    )
    pow_table, max_pow = ism.reflection_pow_table(refl, max_order)
    rx = np.ascontiguousarray(ism.receiver_positions(scene)[0])
    extra = np.zeros(6)
    amp_floor = 1e-7 / (4.0 * np.pi * 0.09)
    args = (images, exponents, total_order, signs, pow_table, rx, 16000.0,
            ism.SPEED_OF_SOUND, extra, max_pow, amp_floor)
    return args, len(images)


def main():
    catalog = materials.default_catalog()
    rows = []
    cases = [
        ("small hard room (steel)", scenes.SceneSpec(
            (3.2, 3.4, 2.6), (), scenes.Pose((1.5, 1.5, 1.4), 0.2), 3), 4),
        ("medium room (mixed)", scenes.SceneSpec(
            (5.0, 4.2, 3.0), (), scenes.Pose((2.4, 2.0, 1.5), 0.9), 5), 2),
        ("large room (brick)", scenes.SceneSpec(
            (9.5, 8.0, 4.5), (), scenes.Pose((4.0, 3.5, 1.6), 0.4), 7), 2),
    ]
    print(f"{'case':<28}{'images':>10}{'compiled':>12}{'pure':>12}{'speedup':>9}  equal")
    for name, scene, mat in cases:
        assignment = scenes.all_same_assignment(scene, mat)
        order = ism.adaptive_max_order(scene)
        args, n_images = kernel_workload(scene, assignment, catalog, order)
        length = 8000 + 127

        if ext is not None:
            out_c = np.zeros((6, length))
            t_c = _timeit(lambda: ext.accumulate_bands(*args[:5], args[5], *args[6:], out_c * 0))
            out_c = np.zeros((6, length))
            ext.accumulate_bands(*args[:5], args[5], *args[6:], out_c)
        else:
            t_c, out_c = float("nan"), None
        out_p = np.zeros((6, length))
        t_p = _timeit(lambda: ism.accumulate_bands_py(*args[:5], args[5], *args[6:], out_p * 0))
        out_p = np.zeros((6, length))
        ism.accumulate_bands_py(*args[:5], args[5], *args[6:], out_p)
        equal = out_c is not None and np.array_equal(out_c, out_p)
        speed = t_p / t_c if t_c == t_c else float("nan")
        print(f"{name:<28}{n_images:>10}{t_c*1e3:>10.1f}ms{t_p*1e3:>10.1f}ms{speed:>8.1f}x  {equal}")
        rows.append((name, t_c, t_p))

    print("\nfull simulate_rir (one binaural RIR):")
    scene, mat = cases[0][1], cases[0][2]
    assignment = scenes.all_same_assignment(scene, mat)
    order = ism.adaptive_max_order(scene)

    def run():
        ism._ENUM_CACHE.clear()
        ism.simulate_rir(scene, assignment, catalog, max_order=order)

    t_full_c = _timeit(run, repeats=2)
    os.environ["MATRIR_FORCE_PURE"] = "1"
    t_full_p = _timeit(run, repeats=2)
    del os.environ["MATRIR_FORCE_PURE"]
    print(f"  compiled {t_full_c*1e3:.0f} ms   pure {t_full_p*1e3:.0f} ms   "
          f"speedup {t_full_p/t_full_c:.1f}x")


if __name__ == "__main__":
    main()
