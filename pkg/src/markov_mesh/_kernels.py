"""Compiled inner loops over lattice cells.

Every kernel takes the template as parallel ``off_r``/``off_c`` arrays and
the conditional log-odds either as a lookup ``table`` indexed by neighbor
bitmask (when the template is small) or as ``(lam_masks, beta)`` pairs.
Randomness is always drawn by the caller and passed in, so results depend
only on the caller's generator.
"""
import numpy as np
from numba import njit

TABLE_MAX_BITS = 16


@njit(cache=True)
def theta_table(lam_masks, beta, nbits):
    size = 1 << nbits
    table = np.zeros(size)
    for k in range(lam_masks.shape[0]):
        table[lam_masks[k]] += beta[k]
    for b in range(nbits):
        bit = 1 << b
        for mask in range(size):
            if mask & bit:
                table[mask] += table[mask ^ bit]
    return table


@njit(cache=True, inline="always")
def _theta(mask, table, lam_masks, beta):
    if table.shape[0] > 0:
        return table[mask]
    acc = 0.0
    for k in range(lam_masks.shape[0]):
        lm = lam_masks[k]
        if mask & lm == lm:
            acc += beta[k]
    return acc


@njit(cache=True, inline="always")
def _softplus(t):
    if t > 0:
        return t + np.log1p(np.exp(-t))
    return np.log1p(np.exp(t))


@njit(cache=True, inline="always")
def _mask_at(values, i, j, off_r, off_c):
    m, n = values.shape
    mask = 0
    for b in range(off_r.shape[0]):
        r = i + off_r[b]
        c = j + off_c[b]
        if 0 <= r < m and 0 <= c < n and values[r, c] != 0:
            mask |= 1 << b
    return mask


@njit(cache=True)
def node_masks(values, off_r, off_c):
    m, n = values.shape
    out = np.empty(m * n, dtype=np.int64)
    for i in range(m):
        for j in range(n):
            out[i * n + j] = _mask_at(values, i, j, off_r, off_c)
    return out


@njit(cache=True)
def softplus_table(table):
    out = np.empty_like(table)
    for k in range(table.shape[0]):
        out[k] = _softplus(table[k])
    return out


@njit(cache=True, inline="always")
def _factor_diff(mu, b, y, table, sp_table, lam_masks, beta):
    on = mu | (1 << b)
    off = mu & ~(1 << b)
    if sp_table.shape[0] > 0:
        return y * (table[on] - table[off]) - (sp_table[on] - sp_table[off])
    t1 = _theta(on, table, lam_masks, beta)
    t0 = _theta(off, table, lam_masks, beta)
    return y * (t1 - t0) - (_softplus(t1) - _softplus(t0))


@njit(cache=True)
def flip_log_ratio_sp(values, i, j, off_r, off_c, table, sp_table, lam_masks, beta):
    m, n = values.shape
    d = _theta(_mask_at(values, i, j, off_r, off_c), table, lam_masks, beta)
    for b in range(off_r.shape[0]):
        ui = i - off_r[b]
        uj = j - off_c[b]
        if 0 <= ui < m and 0 <= uj < n:
            mu = _mask_at(values, ui, uj, off_r, off_c)
            d += _factor_diff(mu, b, values[ui, uj], table, sp_table, lam_masks, beta)
    return d


@njit(cache=True)
def flip_log_ratio(values, i, j, off_r, off_c, table, lam_masks, beta):
    m, n = values.shape
    d = _theta(_mask_at(values, i, j, off_r, off_c), table, lam_masks, beta)
    for b in range(off_r.shape[0]):
        ui = i - off_r[b]
        uj = j - off_c[b]
        if 0 <= ui < m and 0 <= uj < n:
            mu = _mask_at(values, ui, uj, off_r, off_c)
            t1 = _theta(mu | (1 << b), table, lam_masks, beta)
            t0 = _theta(mu & ~(1 << b), table, lam_masks, beta)
            d += values[ui, uj] * (t1 - t0) - (_softplus(t1) - _softplus(t0))
    return d


@njit(cache=True)
def gibbs_sweep(values, rows, cols, uniforms, off_r, off_c, table, lam_masks, beta):
    sp_table = softplus_table(table)
    for k in range(rows.shape[0]):
        i = rows[k]
        j = cols[k]
        d = flip_log_ratio_sp(values, i, j, off_r, off_c, table, sp_table, lam_masks, beta)
        # P(x=1) = 1/(1+exp(-d)), evaluated without overflow
        if d >= 0:
            p = 1.0 / (1.0 + np.exp(-d))
        else:
            e = np.exp(d)
            p = e / (1.0 + e)
        values[i, j] = 1 if uniforms[k] < p else 0


@njit(cache=True)
def simulate_raster(values, uniforms, off_r, off_c, table, lam_masks, beta):
    m, n = values.shape
    for i in range(m):
        for j in range(n):
            t = _theta(_mask_at(values, i, j, off_r, off_c), table, lam_masks, beta)
            if t >= 0:
                p = 1.0 / (1.0 + np.exp(-t))
            else:
                e = np.exp(t)
                p = e / (1.0 + e)
            values[i, j] = 1 if uniforms[i * n + j] < p else 0
