"""Pure-numpy kernel implementations (fallback backend).

Semantics and arithmetic order match ``numba_impl`` exactly; see that module
for the authoritative contract of each kernel.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

# Policy kind codes shared by both backends.
KIND_CONSTANT = 0
KIND_THRESHOLD = 1
KIND_RANDOMIZED = 2
KIND_SCRIPTED = 3
KIND_FEEDBACK = 4


def gheat_march(u, lam, sig_lo_sq, sig_hi_sq, nt, store_at, out):
    """Explicit monotone march of u_t = G(u_xx); boundary nodes frozen.

    u: initial profile (mutated in place), lam = dt/dx**2, store_at: sorted
    step indices (0 = initial) whose slices are written to out row by row.
    """
    ptr = 0
    if ptr < store_at.shape[0] and store_at[ptr] == 0:
        out[ptr, :] = u
        ptr += 1
    for k in range(1, nt + 1):
        d = u[2:] - 2.0 * u[1:-1] + u[:-2]
        u[1:-1] = u[1:-1] + lam * (
            0.5 * (sig_hi_sq * np.maximum(d, 0.0) + sig_lo_sq * np.minimum(d, 0.0))
        )
        if ptr < store_at.shape[0] and store_at[ptr] == k:
            out[ptr, :] = u
            ptr += 1
    return u


def tree_backward(v, depth, q_lo, q_hi):
    """Backward induction on the recombining trinomial lattice.

    v holds the 2*depth+1 terminal values; each sweep maximizes the one-step
    expectation over the endpoint volatilities, which reduces to applying the
    generator to the discrete second difference.  Returns the root value.
    """
    for k in range(depth, 0, -1):
        w = v[: 2 * k + 1]
        d = w[2:] - 2.0 * w[1:-1] + w[:-2]
        v[: 2 * k - 1] = w[1:-1] + (
            q_hi * np.maximum(d, 0.0) + q_lo * np.minimum(d, 0.0)
        )
    return v[0]


def _select(kind, ipar, fpar, table, s, k, n_total, u_k):
    """Vectorized policy member selection; mirrors the scalar numba version."""
    n_paths = s.shape[0]
    if kind == KIND_CONSTANT:
        return np.full(n_paths, ipar[0], dtype=np.int64)
    if kind == KIND_THRESHOLD:
        return np.where(s < fpar[0], ipar[0], ipar[1])
    if kind == KIND_RANDOMIZED:
        idx = np.searchsorted(fpar, u_k, side="left")
        return np.minimum(idx, fpar.shape[0] - 1).astype(np.int64)
    if kind == KIND_SCRIPTED:
        return np.full(n_paths, ipar[k % ipar.shape[0]], dtype=np.int64)
    # feedback: fpar = [x_scale, x0, inv_dx]
    tb = min(k * table.shape[0] // n_total, table.shape[0] - 1)
    xb = ((s * fpar[0] - fpar[1]) * fpar[2]).astype(np.int64)
    xb = np.clip(xb, 0, table.shape[1] - 1)
    return table[tb, xb]


def fold_final(z, u, k0, n_total, means, sigmas, em2,
               kind, ipar, fpar, table, s, maxstep, maxabs, bn):
    """Advance paths through one innovation chunk, updating running state.

    z: (n_paths, chunk) standardized innovations; u: policy uniforms (or
    empty); state vectors s (running sum), maxstep (max step value), maxabs
    (max |S_k|), bn (sum of chosen-member second moments) updated in place.
    """
    chunk = z.shape[1]
    for k in range(chunk):
        u_k = u[:, k] if u.shape[0] else None
        idx = _select(kind, ipar, fpar, table, s, k0 + k, n_total, u_k)
        x = means[idx] + sigmas[idx] * z[:, k]
        np.maximum(maxstep, x, out=maxstep)
        s += x
        np.maximum(maxabs, np.abs(s), out=maxabs)
        bn += em2[idx]


def fold_lil(z, u, k0, n_total, means, sigmas,
             kind, ipar, fpar, table, inv_a,
             vmax_from, tail_from, ck_local, ck_slot, ck_out,
             bin_lo, inv_bin_w, visited,
             s, vmax, vmin, tvmin, tvmax):
    """LIL fold: running extrema of S_n / a_n, tail-window visits, checkpoints.

    inv_a[k] must equal 1 / a(k0 + k + 1) for the chunk; ck_local / ck_slot
    give the chunk-local checkpoint steps and their output columns.
    """
    chunk = z.shape[1]
    ptr = 0
    for k in range(chunk):
        u_k = u[:, k] if u.shape[0] else None
        idx = _select(kind, ipar, fpar, table, s, k0 + k, n_total, u_k)
        x = means[idx] + sigmas[idx] * z[:, k]
        s += x
        n = k0 + k + 1
        v = s * inv_a[k]
        if n >= vmax_from:
            np.maximum(vmax, v, out=vmax)
            np.minimum(vmin, v, out=vmin)
        if n >= tail_from:
            np.maximum(tvmax, v, out=tvmax)
            np.minimum(tvmin, v, out=tvmin)
            xb = ((v - bin_lo) * inv_bin_w).astype(np.int64)
            np.clip(xb, 0, visited.shape[1] - 1, out=xb)
            visited[np.arange(s.shape[0]), xb] = True
        if ptr < ck_local.shape[0] and ck_local[ptr] == k:
            ck_out[:, ck_slot[ptr]] = v
            ptr += 1
