"""Binaural shoebox room simulation via the image-source method.

Specular reflections come from the six walls; occluder boxes contribute
absorption area (a per-band exponential decay term) but no reflections.
Per-band wall attenuation sqrt(1 - alpha) is applied to six octave-band
impulse trains which are bandpass-filtered and summed into the broadband RIR.

The per-image accumulation loop is the hot kernel: a compiled extension
(matrir._ism) is used when available, with a numpy fallback that produces
bit-identical output. Set MATRIR_FORCE_PURE=1 to force the fallback.
"""
from __future__ import annotations

import os
from itertools import product

import numpy as np
from scipy.signal import fftconvolve

from .dsp import RIRWaveform, RIR_DURATION, SAMPLE_RATE
from .materials import MaterialSpec, N_BANDS, absorption_matrix
from .scenes import MaterialAssignment, SceneSpec, WALL_NAMES

SPEED_OF_SOUND = 343.0
EAR_SPACING = 0.18
FILTER_TAPS = 255
DEFAULT_MAX_ORDER = 30
DEFAULT_AMP_FLOOR_REL = 1e-7
MIN_MEAN_ABSORPTION = 5e-3

try:  # compiled kernel; optional
    from . import _ism as _ism_ext
except ImportError:  # pragma: no cover - depends on build environment
    _ism_ext = None


class SimulationError(ValueError):
    pass


def kernel_backend() -> str:
    if _ism_ext is None or os.environ.get("MATRIR_FORCE_PURE") == "1":
        return "python"
    return "compiled"


def reflection_pow_table(refl: np.ndarray, max_order: int):
    """Shared (walls, bands, order+1) table of refl**k plus the cull bound
    max(refl)**k. Both kernel backends read the same table, which keeps them
    bit-identical."""
    ks = np.arange(max_order + 1, dtype=np.float64)
    table = np.power(refl[:, :, None], ks[None, None, :])
    max_pow = np.power(float(refl.max()), ks)
    return np.ascontiguousarray(table), np.ascontiguousarray(max_pow)


def accumulate_bands_py(
    images,
    exponents,
    total_order,
    signs,
    pow_table,
    rx,
    fs,
    c,
    extra_decay,
    max_pow,
    amp_floor,
    out,
):
    """Numpy reference implementation of the accumulation kernel.

    Arithmetic (operation order, table lookups, bincount accumulation order)
    mirrors the compiled loop exactly, so both backends agree bit for bit.
    """
    length = out.shape[1]
    diff = images - rx[None, :]
    d = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2)
    delay = np.rint(fs * d / c).astype(np.int64)
    base = 1.0 / (4.0 * np.pi * d)
    keep = delay < length
    if amp_floor > 0.0:
        bound = max_pow[total_order] * base
        keep &= (total_order == 0) | (bound >= amp_floor)
    if not np.any(keep):
        return out
    e = exponents[keep]
    dk = delay[keep]
    bk = base[keep]
    sk = signs[keep]
    dd = d[keep]
    for b in range(out.shape[0]):
        p = pow_table[0, b][e[:, 0]]
        for w in range(1, e.shape[1]):
            p = p * pow_table[w, b][e[:, w]]
        if extra_decay[b] == 0.0:
            amp = (p * bk) * sk
        else:
            amp = (p * (bk * np.exp(-extra_decay[b] * dd))) * sk
        out[b] += np.bincount(dk, weights=amp, minlength=length)
    return out


def _accumulate(images, exponents, total_order, signs, pow_table, rx, fs, c,
                extra_decay, max_pow, amp_floor, out):
    if kernel_backend() == "compiled":
        return _ism_ext.accumulate_bands(
            images, exponents, total_order, signs, pow_table, rx, fs, c,
            extra_decay, max_pow, amp_floor, out,
        )
    return accumulate_bands_py(
        images, exponents, total_order, signs, pow_table, rx, fs, c,
        extra_decay, max_pow, amp_floor, out,
    )


def band_edges_hz() -> np.ndarray:
    """Geometric midpoints between adjacent octave-band centers."""
    centers = np.array([125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0])
    return np.sqrt(centers[:-1] * centers[1:])


def build_band_filters(sample_rate: int = SAMPLE_RATE, taps: int = FILTER_TAPS):
    """Linear-phase FIR bank whose six filters sum exactly to a unit impulse.

    Returns (filters (6, taps), group_delay). Lowpass prototypes are
    hann-windowed sincs; bands telescope (LP differences, top band = delta
    minus the last LP) so uniform per-band gains pass through unchanged.
    """
    if taps % 2 == 0:
        raise ValueError("taps must be odd for integer group delay")
    mid = taps // 2
    n = np.arange(taps) - mid
    window = np.hanning(taps)

    def lowpass(fc):
        h = 2.0 * fc / sample_rate * np.sinc(2.0 * fc / sample_rate * n)
        return h * window

    lps = [lowpass(fc) for fc in band_edges_hz()]
    delta = np.zeros(taps)
    delta[mid] = 1.0
    filters = [lps[0]]
    for k in range(1, len(lps)):
        filters.append(lps[k] - lps[k - 1])
    filters.append(delta - lps[-1])
    return np.stack(filters), mid


_FILTER_CACHE: dict = {}


def _band_filters_cached(sample_rate: int):
    if sample_rate not in _FILTER_CACHE:
        _FILTER_CACHE[sample_rate] = build_band_filters(sample_rate)
    return _FILTER_CACHE[sample_rate]


def receiver_positions(scene: SceneSpec) -> np.ndarray:
    """Two omni receivers spaced EAR_SPACING m, perpendicular to the yaw."""
    p = np.asarray(scene.pose.position)
    yaw = scene.pose.yaw
    perp = np.array([-np.sin(yaw), np.cos(yaw), 0.0])
    return np.stack([p + 0.5 * EAR_SPACING * perp, p - 0.5 * EAR_SPACING * perp])


def _wall_absorption(scene, assignment, catalog) -> np.ndarray:
    table = absorption_matrix(catalog)
    return np.stack([table[assignment.mapping[w]] for w in WALL_NAMES])


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def _image_signs(ns, q, order, seed) -> np.ndarray:
    """Deterministic pseudo-random polarity per image source.

    Purely positive reflection amplitudes make co-binned late images add
    coherently, which builds a low-frequency floor that halves the measured
    decay rate (the randomized-sign image method avoids exactly this). The
    hash is invariant under the shoebox symmetry group (per-axis mirror
    n -> q - n and axis permutation), so symmetric rooms keep exactly
    symmetric responses. The direct path keeps +1; both ears see the same
    sign for a given image.
    """
    total = np.zeros(len(ns), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for d in range(3):
            a = ns[:, d]
            b = q[d] - ns[:, d]
            lo = (np.minimum(a, b) + 512).astype(np.uint64)
            hi = (np.maximum(a, b) + 512).astype(np.uint64)
            total = total + _splitmix64((lo << np.uint64(11)) | hi)
        mixed = _splitmix64(
            total ^ _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        )
    signs = np.where((mixed & np.uint64(1)).astype(bool), 1.0, -1.0)
    return np.where(order == 0, 1.0, signs)


_ENUM_CACHE: dict = {}


def _enumerate_images(scene: SceneSpec, max_order: int, max_dist: float):
    """All image sources within max_order and max_dist of the pose.

    Returns (positions (n, 3), wall-hit exponents (n, 6), total order (n,),
    signs (n,)). Wall exponent columns follow WALL_NAMES order. The most
    recent result is cached (pose variants and repeated assignments on one
    scene reuse the same lattice).
    """
    key = (scene.room_dims, scene.pose.position, scene.seed, max_order,
           round(max_dist, 6))
    if key in _ENUM_CACHE:
        return _ENUM_CACHE[key]

    dims = np.asarray(scene.room_dims)
    src = np.asarray(scene.pose.position)
    n_max = [
        min(int(np.ceil((max_dist + d) / (2.0 * d))), max_order // 2 + 1)
        for d in dims
    ]
    grids = np.meshgrid(
        *[np.arange(-m, m + 1, dtype=np.int64) for m in n_max], indexing="ij"
    )
    ns = np.stack([g.ravel() for g in grids], axis=1)  # (k, 3)
    abs_n = np.abs(ns)
    abs_nm1 = np.abs(ns - 1)
    order_hi = abs_n.sum(axis=1)
    limit_sq = (max_dist + 1.0) ** 2

    pos_chunks, exp_chunks, order_chunks, sign_chunks = [], [], [], []
    for qi, q in enumerate(product((0, 1), repeat=3)):
        qa = np.asarray(q, dtype=np.int64)
        e_lo = np.where(qa[None, :] == 1, abs_nm1, abs_n)
        order = e_lo.sum(axis=1) + order_hi
        keep = order <= max_order
        if not np.any(keep):
            continue
        kept_ns = ns[keep]
        pos = (1.0 - 2.0 * qa)[None, :] * src[None, :] + 2.0 * kept_ns * dims[None, :]
        diff = pos - src[None, :]
        near = (diff**2).sum(axis=1) <= limit_sq
        if not np.any(near):
            continue
        pos = pos[near]
        kept_ns = kept_ns[near]
        kept_order = order[keep][near]
        e_lo_k, e_hi_k = e_lo[keep][near], abs_n[keep][near]
        # exponent columns: x0, x1, y0, y1, floor(z0), ceiling(z1)
        exps = np.stack(
            [e_lo_k[:, 0], e_hi_k[:, 0], e_lo_k[:, 1], e_hi_k[:, 1],
             e_lo_k[:, 2], e_hi_k[:, 2]],
            axis=1,
        )
        pos_chunks.append(pos)
        exp_chunks.append(exps)
        order_chunks.append(kept_order)
        sign_chunks.append(_image_signs(kept_ns, q, kept_order, scene.seed))
    result = (
        np.ascontiguousarray(np.concatenate(pos_chunks), dtype=np.float64),
        np.ascontiguousarray(np.concatenate(exp_chunks), dtype=np.int64),
        np.ascontiguousarray(np.concatenate(order_chunks), dtype=np.int64),
        np.ascontiguousarray(np.concatenate(sign_chunks), dtype=np.float64),
    )
    _ENUM_CACHE.clear()  # keep exactly one geometry resident
    _ENUM_CACHE[key] = result
    return result


def adaptive_max_order(scene: SceneSpec, duration: float = RIR_DURATION) -> int:
    """Reflection order needed to cover the RIR window in this room."""
    needed = int(np.ceil(SPEED_OF_SOUND * duration / min(scene.room_dims))) + 1
    return int(np.clip(needed, DEFAULT_MAX_ORDER, 100))


def simulate_rir(
    scene: SceneSpec,
    assignment: MaterialAssignment,
    catalog: list[MaterialSpec],
    max_order: int = DEFAULT_MAX_ORDER,
    sample_rate: int = SAMPLE_RATE,
    duration: float = RIR_DURATION,
    amp_floor_rel: float = DEFAULT_AMP_FLOOR_REL,
) -> RIRWaveform:
    """Binaural RIR of the scene under the given material assignment."""
    assignment.validate(scene, len(catalog))
    scene.validate()

    alpha = _wall_absorption(scene, assignment, catalog)  # (6 walls, 6 bands)
    refl = np.ascontiguousarray(np.sqrt(1.0 - alpha))

    lx, ly, lz = scene.room_dims
    wall_areas = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])
    table = absorption_matrix(catalog)
    box_area_alpha = np.zeros(N_BANDS)
    for i, box in enumerate(scene.boxes):
        box_area_alpha += box.surface_area * table[assignment.mapping[f"box{i}"]]
    mean_alpha = (wall_areas[:, None] * alpha).sum(axis=0) + box_area_alpha
    mean_alpha /= wall_areas.sum() + sum(b.surface_area for b in scene.boxes)
    if mean_alpha.min() < MIN_MEAN_ABSORPTION:
        raise SimulationError(
            "near-zero absorption: the field would not decay within the window"
        )
    # Box absorption as a Sabine-equivalent amplitude decay per meter traveled.
    extra_decay = np.ascontiguousarray(box_area_alpha / (8.0 * scene.volume))

    n_samples = int(round(duration * sample_rate))
    filters, group_delay = _band_filters_cached(sample_rate)
    train_len = n_samples + group_delay
    max_dist = SPEED_OF_SOUND * (train_len / sample_rate) + 1.0

    images, exponents, total_order, signs = _enumerate_images(
        scene, max_order, max_dist
    )
    direct = 1.0 / (4.0 * np.pi * (EAR_SPACING / 2.0))
    amp_floor = direct * amp_floor_rel
    pow_table, max_pow = reflection_pow_table(refl, max_order)

    channels = []
    for rx in receiver_positions(scene):
        trains = np.zeros((N_BANDS, train_len))
        _accumulate(
            images, exponents, total_order, signs, pow_table,
            np.ascontiguousarray(rx, dtype=np.float64),
            float(sample_rate), SPEED_OF_SOUND, extra_decay,
            max_pow, amp_floor, trains,
        )
        ch = np.zeros(n_samples)
        for b in range(N_BANDS):
            full = fftconvolve(trains[b], filters[b])
            ch += full[group_delay : group_delay + n_samples]
        channels.append(ch)
    return RIRWaveform(np.stack(channels), sample_rate, duration)


def sabine_rt60(scene: SceneSpec, mean_absorption: float) -> float:
    """Sabine prediction 0.161 V / (alpha * S) with boxes included in S."""
    area = scene.wall_area + sum(b.surface_area for b in scene.boxes)
    return 0.161 * scene.volume / (mean_absorption * area)
