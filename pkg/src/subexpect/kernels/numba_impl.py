"""Numba-compiled kernels (default backend).

Each kernel mirrors its twin in ``numpy_impl`` operation for operation so the
two backends produce bit-identical output.  Paths are independent, so the
path loops run under ``prange``; results do not depend on the thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

NAME = "numba"

KIND_CONSTANT = 0
KIND_THRESHOLD = 1
KIND_RANDOMIZED = 2
KIND_SCRIPTED = 3
KIND_FEEDBACK = 4


@njit(cache=True)
def gheat_march(u, lam, sig_lo_sq, sig_hi_sq, nt, store_at, out):
    nx = u.shape[0]
    unew = np.empty(nx)
    ptr = 0
    if ptr < store_at.shape[0] and store_at[ptr] == 0:
        out[ptr, :] = u
        ptr += 1
    for k in range(1, nt + 1):
        unew[0] = u[0]
        unew[nx - 1] = u[nx - 1]
        for j in range(1, nx - 1):
            d = u[j + 1] - 2.0 * u[j] + u[j - 1]
            unew[j] = u[j] + lam * (
                0.5 * (sig_hi_sq * max(d, 0.0) + sig_lo_sq * min(d, 0.0))
            )
        u[:] = unew
        if ptr < store_at.shape[0] and store_at[ptr] == k:
            out[ptr, :] = u
            ptr += 1
    return u


@njit(cache=True)
def tree_backward(v, depth, q_lo, q_hi):
    for k in range(depth, 0, -1):
        for j in range(2 * k - 1):
            d = v[j + 2] - 2.0 * v[j + 1] + v[j]
            v[j] = v[j + 1] + (q_hi * max(d, 0.0) + q_lo * min(d, 0.0))
    return v[0]


@njit(cache=True)
def _select(kind, ipar, fpar, table, s, k, n_total, u_val):
    if kind == KIND_CONSTANT:
        return ipar[0]
    if kind == KIND_THRESHOLD:
        if s < fpar[0]:
            return ipar[0]
        return ipar[1]
    if kind == KIND_RANDOMIZED:
        for i in range(fpar.shape[0]):
            if fpar[i] >= u_val:
                return np.int64(i)
        return np.int64(fpar.shape[0] - 1)
    if kind == KIND_SCRIPTED:
        return ipar[k % ipar.shape[0]]
    # feedback: fpar = [x_scale, x0, inv_dx]
    tb = k * table.shape[0] // n_total
    if tb > table.shape[0] - 1:
        tb = table.shape[0] - 1
    xb = np.int64((s * fpar[0] - fpar[1]) * fpar[2])
    if xb < 0:
        xb = 0
    if xb > table.shape[1] - 1:
        xb = table.shape[1] - 1
    return table[tb, xb]


@njit(cache=True, parallel=True)
def fold_final(z, u, k0, n_total, means, sigmas, em2,
               kind, ipar, fpar, table, s, maxstep, maxabs, bn):
    n_paths = z.shape[0]
    chunk = z.shape[1]
    has_u = u.shape[0] > 0
    for p in prange(n_paths):
        sp = s[p]
        msp = maxstep[p]
        map_ = maxabs[p]
        bnp = bn[p]
        for k in range(chunk):
            u_val = u[p, k] if has_u else 0.0
            idx = _select(kind, ipar, fpar, table, sp, k0 + k, n_total, u_val)
            x = means[idx] + sigmas[idx] * z[p, k]
            if x > msp:
                msp = x
            sp += x
            a = abs(sp)
            if a > map_:
                map_ = a
            bnp += em2[idx]
        s[p] = sp
        maxstep[p] = msp
        maxabs[p] = map_
        bn[p] = bnp


@njit(cache=True, parallel=True)
def fold_lil(z, u, k0, n_total, means, sigmas,
             kind, ipar, fpar, table, inv_a,
             vmax_from, tail_from, ck_local, ck_slot, ck_out,
             bin_lo, inv_bin_w, visited,
             s, vmax, vmin, tvmin, tvmax):
    n_paths = z.shape[0]
    chunk = z.shape[1]
    has_u = u.shape[0] > 0
    n_bins = visited.shape[1]
    for p in prange(n_paths):
        sp = s[p]
        vmx = vmax[p]
        vmn = vmin[p]
        tmx = tvmax[p]
        tmn = tvmin[p]
        ptr = 0
        for k in range(chunk):
            u_val = u[p, k] if has_u else 0.0
            idx = _select(kind, ipar, fpar, table, sp, k0 + k, n_total, u_val)
            sp += means[idx] + sigmas[idx] * z[p, k]
            n = k0 + k + 1
            v = sp * inv_a[k]
            if n >= vmax_from:
                if v > vmx:
                    vmx = v
                if v < vmn:
                    vmn = v
            if n >= tail_from:
                if v > tmx:
                    tmx = v
                if v < tmn:
                    tmn = v
                xb = np.int64((v - bin_lo) * inv_bin_w)
                if xb < 0:
                    xb = 0
                if xb > n_bins - 1:
                    xb = n_bins - 1
                visited[p, xb] = True
            if ptr < ck_local.shape[0] and ck_local[ptr] == k:
                ck_out[p, ck_slot[ptr]] = v
                ptr += 1
        s[p] = sp
        vmax[p] = vmx
        vmin[p] = vmn
        tvmax[p] = tmx
        tvmin[p] = tmn
