# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loop of the image-source simulator.

Accumulates per-band impulse trains for one receiver. Wall attenuation comes
from a shared precomputed power table (refl ** hit_count), so the arithmetic
(operation order, libm calls) is identical to the pure-numpy fallback in
matrir.ism and both backends produce bit-equal output.
"""
from libc.math cimport exp, lrint, sqrt, M_PI

import numpy as np

cimport numpy as cnp

cnp.import_array()


def accumulate_bands(
    double[:, ::1] images,
    cnp.int64_t[:, ::1] exponents,
    cnp.int64_t[::1] total_order,
    double[::1] signs,
    double[:, :, ::1] pow_table,
    double[::1] rx,
    double fs,
    double c,
    double[::1] extra_decay,
    double[::1] max_pow,
    double amp_floor,
    double[:, ::1] out,
):
    cdef Py_ssize_t n = images.shape[0]
    cdef Py_ssize_t n_walls = exponents.shape[1]
    cdef Py_ssize_t n_bands = out.shape[0]
    cdef Py_ssize_t length = out.shape[1]
    cdef Py_ssize_t i, b, w
    cdef double dx, dy, dz, d, base, p, amp, s, rx0, rx1, rx2
    cdef long long delay, order

    rx0 = rx[0]
    rx1 = rx[1]
    rx2 = rx[2]
    with nogil:
        for i in range(n):
            dx = images[i, 0] - rx0
            dy = images[i, 1] - rx1
            dz = images[i, 2] - rx2
            d = sqrt(dx * dx + dy * dy + dz * dz)
            delay = <long long>lrint(fs * d / c)
            if delay >= length:
                continue
            base = 1.0 / (4.0 * M_PI * d)
            order = total_order[i]
            if order > 0 and amp_floor > 0.0:
                if max_pow[order] * base < amp_floor:
                    continue
            s = signs[i]
            for b in range(n_bands):
                p = pow_table[0, b, exponents[i, 0]]
                for w in range(1, n_walls):
                    p = p * pow_table[w, b, exponents[i, w]]
                if extra_decay[b] == 0.0:
                    amp = (p * base) * s
                else:
                    amp = (p * (base * exp(-extra_decay[b] * d))) * s
                out[b, delay] += amp
    return np.asarray(out)
