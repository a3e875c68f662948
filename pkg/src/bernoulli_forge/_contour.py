"""Marching squares on an x-periodic node grid and stitching into periodic arcs.

Edges are numbered as follows: horizontal edge H(i, j) joins nodes (j, i) and
(j, i+1 mod nx) and has id ``j*nx + i``; vertical edge V(i, j) joins (j, i)
and (j+1, i) and has id ``ny*nx + j*nx + i``.
"""

from __future__ import annotations

import numpy as np

from .errors import DisconnectedLevelSet
from .geom import PeriodicArc


def sign_change_edges(pos: np.ndarray):
    """Ids of horizontal and vertical edges whose endpoints differ in ``pos``."""
    ny, nx = pos.shape
    h = pos != np.roll(pos, -1, axis=1)
    v = pos[:-1] != pos[1:]
    hj, hi = np.nonzero(h)
    vj, vi = np.nonzero(v)
    return (hj, hi), (vj, vi)


def cell_links(pos: np.ndarray, center_pos_fn=None):
    """Pairs of edge ids joined by the contour inside each cell."""
    ny, nx = pos.shape
    NH = ny * nx
    b0 = pos[:-1, :]
    b1 = np.roll(pos, -1, axis=1)[:-1, :]
    b2 = np.roll(pos, -1, axis=1)[1:, :]
    b3 = pos[1:, :]
    J, I = np.meshgrid(np.arange(ny - 1), np.arange(nx), indexing="ij")
    e_bot = J * nx + I
    e_top = (J + 1) * nx + I
    e_left = NH + J * nx + I
    e_right = NH + J * nx + (I + 1) % nx
    cb = b0 != b1
    cr = b1 != b2
    ct = b2 != b3
    cl = b3 != b0
    n = cb.astype(int) + cr + ct + cl
    links = []
    two = n == 2
    if np.any(two):
        es = np.stack([e_bot, e_right, e_top, e_left], axis=-1)[two]
        cs = np.stack([cb, cr, ct, cl], axis=-1)[two]
        order = np.argsort(~cs, axis=1, kind="stable")[:, :2]
        pair = np.take_along_axis(es, order, axis=1)
        links.append(pair)
    four = n == 4
    if np.any(four):
        jj, ii = np.nonzero(four)
        if center_pos_fn is None:
            cpos = b0[four]
        else:
            cpos = center_pos_fn(jj, ii)
        same = cpos == b0[four]
        eb, er, et, el = e_bot[four], e_right[four], e_top[four], e_left[four]
        # centre joined to corners 0 and 2: cut off corners 1 and 3
        p1 = np.where(same, eb, el)
        p2 = np.where(same, er, eb)
        p3 = np.where(same, et, er)
        p4 = np.where(same, el, et)
        links.append(np.column_stack([p1, p2]))
        links.append(np.column_stack([p3, p4]))
    if not links:
        return np.empty((0, 2), dtype=int)
    return np.vstack(links)


def stitch(links: np.ndarray, points: dict, period: float, min_sep: float) -> list[np.ndarray]:
    """Walk the edge graph and return the periodic components (unwrapped, left to right).

    ``points`` maps edge id -> (x, y).  Closed loops are discarded; an open
    chain means the contour left the grid window.
    """
    nbr: dict[int, list[int]] = {}
    for a, b in links.tolist():
        nbr.setdefault(a, []).append(b)
        nbr.setdefault(b, []).append(a)
    seen = set()
    comps = []
    for start in sorted(nbr):
        if start in seen:
            continue
        if len(nbr[start]) != 2:
            # find a chain end and report
            raise DisconnectedLevelSet("contour leaves the grid window")
        path = [start]
        seen.add(start)
        prev, cur = start, nbr[start][0]
        while cur != start:
            if cur in seen or len(nbr.get(cur, ())) != 2:
                raise DisconnectedLevelSet("contour leaves the grid window or branches")
            seen.add(cur)
            path.append(cur)
            a, b = nbr[cur]
            nxt = b if a == prev else a
            if a == b:
                nxt = a
            prev, cur = cur, nxt
        pts = np.array([points[e] for e in path])
        # unwrap x by continuity
        x = pts[:, 0].copy()
        dx = np.diff(x)
        dx -= period * np.round(dx / period)
        x[1:] = x[0] + np.cumsum(dx)
        close = pts[0, 0] - pts[-1, 0]
        close -= period * np.round(close / period)
        shift = x[-1] + close - x[0]
        pts[:, 0] = x
        k = int(np.round(shift / period))
        if k == 0:
            continue
        if abs(k) != 1:
            raise DisconnectedLevelSet("contour winds more than once per period")
        if k < 0:
            pts = pts[::-1].copy()
            pts = np.vstack([pts[-1:], pts[:-1]])
            x = pts[:, 0]
            dx = np.diff(x)
            dx -= period * np.round(dx / period)
            pts[1:, 0] = x[0] + np.cumsum(dx)
        comps.append(_dedupe(pts, period, min_sep))
    return comps


def _dedupe(pts: np.ndarray, period: float, min_sep: float) -> np.ndarray:
    keep = [0]
    for k in range(1, len(pts)):
        if np.hypot(*(pts[k] - pts[keep[-1]])) > min_sep:
            keep.append(k)
    out = pts[keep]
    while len(out) > 3 and np.hypot(*(out[0] + (period, 0.0) - out[-1])) <= min_sep:
        out = out[:-1]
    return out


def single_arc(comps: list[np.ndarray], period: float) -> PeriodicArc:
    if len(comps) == 0:
        raise DisconnectedLevelSet("no periodic component found")
    if len(comps) > 1:
        raise DisconnectedLevelSet(f"{len(comps)} periodic components found")
    return PeriodicArc(comps[0], period)
