"""Pure numpy implementations of the hot loops.

These are the reference semantics for the compiled kernels: same arithmetic
order, same tie-breaks, same random stream, hence identical results.
"""

from __future__ import annotations

import math

import numpy as np


def micro_run(
    markers,
    pos,
    goals,
    speeds,
    width,
    height,
    perception,
    social_distance,
    distancing,
    dt,
    frames,
    arrival,
    generator,
    trace=None,
):
    """Advance the marker-competition crowd ``frames`` times in place.

    Returns the number of frames in which some pair is closer than
    ``social_distance``.
    """
    mx = markers[:, 0][:, None]
    my = markers[:, 1][:, None]
    n = pos.shape[0]
    R2 = perception * perception
    sd2 = social_distance * social_distance
    a2 = arrival * arrival
    iu, ju = np.triu_indices(n, 1)
    violating = 0
    for f in range(frames):
        dx = mx - pos[:, 0][None, :]
        dy = my - pos[:, 1][None, :]
        d2 = dx * dx + dy * dy
        elig = d2 < R2
        if distancing:
            # blocked by the bubble of any higher-priority (lower-index) agent
            insd = (d2 < sd2).astype(np.int64)
            elig &= (np.cumsum(insd, axis=1) - insd) == 0
        has = elig.any(axis=1)
        owner = np.argmin(np.where(elig, d2, np.inf), axis=1)
        j = np.nonzero(has)[0]
        i = owner[j]
        ddx = dx[j, i]
        ddy = dy[j, i]
        gx = goals[:, 0] - pos[:, 0]
        gy = goals[:, 1] - pos[:, 1]
        gn = np.sqrt(gx * gx + gy * gy)
        dn = np.sqrt(ddx * ddx + ddy * ddy)
        denom = dn * gn[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = np.where(denom > 0.0, (ddx * gx[i] + ddy * gy[i]) / denom, 0.0)
        w = (1.0 + cos) / (1.0 + dn)
        sw = np.bincount(i, weights=w, minlength=n)
        sx = np.bincount(i, weights=w * ddx, minlength=n)
        sy = np.bincount(i, weights=w * ddy, minlength=n)
        for k in range(n):
            if sw[k] > 0.0:
                Mx = sx[k] / sw[k]
                My = sy[k] / sw[k]
                mn = math.sqrt(Mx * Mx + My * My)
                if mn > 0.0:
                    step = min(mn, speeds[k] * dt)
                    s = step / mn
                    pos[k, 0] = min(max(pos[k, 0] + Mx * s, 0.0), width)
                    pos[k, 1] = min(max(pos[k, 1] + My * s, 0.0), height)
        for k in range(n):
            ex = goals[k, 0] - pos[k, 0]
            ey = goals[k, 1] - pos[k, 1]
            if ex * ex + ey * ey < a2:
                goals[k, 0] = generator.random() * width
                goals[k, 1] = generator.random() * height
        if n > 1:
            px = pos[iu, 0] - pos[ju, 0]
            py = pos[iu, 1] - pos[ju, 1]
            if np.any(px * px + py * py < sd2):
                violating += 1
        if trace is not None:
            trace[f] = pos
    return violating


def macro_claim(own, ox, oy, side, cx, cy, radius, k, cid):
    """Claim up to ``k`` free cells nearest to (cx, cy) within ``radius``.

    ``own`` is the 2-D ownership grid (row = y index); ties on distance go to
    the lower flat index.  Returns the claimed flat indices in claim order.
    """
    ny, nx = own.shape
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    i0 = max(int(math.floor((cx - radius - ox) / side)), 0)
    i1 = min(int(math.floor((cx + radius - ox) / side)), nx - 1)
    j0 = max(int(math.floor((cy - radius - oy) / side)), 0)
    j1 = min(int(math.floor((cy + radius - oy) / side)), ny - 1)
    if i1 < i0 or j1 < j0:
        return np.empty(0, dtype=np.int64)
    ix = np.arange(i0, i1 + 1)
    jy = np.arange(j0, j1 + 1)
    dx = ox + (ix + 0.5) * side - cx
    dy = oy + (jy + 0.5) * side - cy
    d2 = (dx * dx)[None, :] + (dy * dy)[:, None]
    flat = jy[:, None] * nx + ix[None, :]
    free = own[j0 : j1 + 1, i0 : i1 + 1] == -1
    ok = free & (d2 <= radius * radius)
    cand_d2 = d2[ok]
    cand_idx = flat[ok]
    order = np.lexsort((cand_idx, cand_d2))[:k]
    chosen = cand_idx[order].astype(np.int64)
    own.reshape(-1)[chosen] = cid
    return chosen


def macro_release(own, cells):
    own.reshape(-1)[cells] = -1
