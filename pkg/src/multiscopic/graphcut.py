"""Disparity labeling by alpha-expansion graph cuts with an explicit
occlusion label.

The energy over a labeling f (integer disparity per pixel, or OCCLUDED) is

    E(f) = sum_p c_gc(p, f_p)                        (assigned pixels)
         + K * #{p : f_p = OCCLUDED}
         + sum_{4-neighbor pairs} w(p,q) * V(f_p, f_q)

with V(a, b) = min(|a - b|, d_cutoff), V(OCCLUDED, .) = 0, and
w(p,q) = lambda1 where the center intensities differ by less than theta
(penalize breaks inside smooth regions more) else lambda2.  Uniqueness is
structural: a labeling assigns exactly one label per center pixel.

Each expansion move solves one min-cut exactly.  Convention: a pixel on the
source side of the cut keeps its label, on the sink side it switches to
alpha.  The move graph pays theta_p(keep) on the p->t arc, theta_p(switch)
on s->p, and encodes each pairwise table through an arc or an auxiliary
node depending on the current labels (see _add_pair_terms).  OCCLUDED is
never an expansion alpha: V(OCCLUDED, .) = 0 breaks the metric property the
auxiliary gadget needs, so occlusions are introduced by a greedy per-pixel
pass that only ever lowers the energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costvol import BlockMatchParams, CostVolume, multiscopic_volumes
from .errors import InputError
from .fusion import FusionStrategy, fuse, wta_disparity
from .imagery import INVALID_DISPARITY, Direction, Image, MultiscopicSet, DisparityMap
from .maxflow import FlowGraph, max_flow

OCCLUDED = -1

# Acceptance margin for float energies: a move must beat this to be kept.
_IMPROVE_EPS = 1e-9


@dataclass
class GcParams:
    """Energy weights and solver controls."""

    k_occlusion: float = 10.0
    lambda1: float = 9.0
    lambda2: float = 3.0
    theta: float = 8.0
    d_cutoff: int = 5
    upscale: int = 2
    max_sweeps: int = 8
    rng_seed: int = 0
    # Re-derive pair weights from all views at the current labeling between
    # sweeps.  Breaks the fixed-weight monotonicity guarantee; off by default.
    recheck_smoothness_weights: bool = False

    def __post_init__(self):
        if not self.lambda1 >= self.lambda2 >= 0:
            raise InputError("need lambda1 >= lambda2 >= 0")
        if not self.theta > 0:
            raise InputError("theta must be positive")
        if self.d_cutoff < 1:
            raise InputError("d_cutoff must be >= 1")
        if self.upscale not in (1, 2, 4):
            raise InputError(f"upscale must be 1, 2 or 4, got {self.upscale}")
        if self.max_sweeps < 1:
            raise InputError("max_sweeps must be >= 1")


def pair_weights(center: Image, p: GcParams) -> tuple[np.ndarray, np.ndarray]:
    """lambda1/lambda2 weights for horizontal and vertical neighbor pairs.

    Returns (w_h, w_v): w_h[y, x] weights the pair (x,y)-(x+1,y) and
    w_v[y, x] the pair (x,y)-(x,y+1).
    """
    a = center.pixels
    w_h = np.where(np.abs(a[:, :-1] - a[:, 1:]) < p.theta, p.lambda1, p.lambda2)
    w_v = np.where(np.abs(a[:-1, :] - a[1:, :]) < p.theta, p.lambda1, p.lambda2)
    return w_h.astype(np.float64), w_v.astype(np.float64)


def _check_labels(labels: np.ndarray, vol: CostVolume) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (vol.height, vol.width):
        raise InputError(f"labeling shape {labels.shape} does not match volume")
    assigned = labels != OCCLUDED
    bad = assigned & ((labels < vol.d_min) | (labels > vol.d_max))
    if np.any(bad):
        raise InputError("labeling contains disparities outside the volume range")
    return labels.astype(np.int64)


def _pair_smoothness(fa: np.ndarray, fb: np.ndarray, w: np.ndarray, cutoff: int) -> np.ndarray:
    both = (fa != OCCLUDED) & (fb != OCCLUDED)
    v = np.minimum(np.abs(fa - fb), cutoff)
    return np.where(both, w * v, 0.0)


def gc_energy(
    labels: np.ndarray,
    c_gc: CostVolume,
    center: Image,
    p: GcParams,
    weights: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Total labeling energy (data + occlusion + smoothness), in float64."""
    labels = _check_labels(labels, c_gc)
    assigned = labels != OCCLUDED
    yy, xx = np.nonzero(assigned)
    data = float(
        c_gc.costs[labels[yy, xx] - c_gc.d_min, yy, xx].astype(np.float64).sum()
    )
    occ = p.k_occlusion * float(np.count_nonzero(~assigned))
    w_h, w_v = pair_weights(center, p) if weights is None else weights
    smooth = float(
        _pair_smoothness(labels[:, :-1], labels[:, 1:], w_h, p.d_cutoff).sum()
        + _pair_smoothness(labels[:-1, :], labels[1:, :], w_v, p.d_cutoff).sum()
    )
    return data + occ + smooth


def _add_pair_terms(
    g: FlowGraph,
    cap_t: np.ndarray,
    p_idx: np.ndarray,
    q_idx: np.ndarray,
    fp: np.ndarray,
    fq: np.ndarray,
    w: np.ndarray,
    alpha: int,
    cutoff: int,
    next_aux: int,
) -> int:
    """Encode w*V pairwise tables into the move graph; returns next free node.

    For each pair the binary table is A = V(fp,fq), B = V(fp,alpha),
    C = V(alpha,fq), D = V(alpha,alpha) = 0 (all scaled by w), where bit 1
    means "switch to alpha".  Case analysis keeps every capacity
    non-negative without any reparameterization:

    * a pixel already at alpha contributes a pure keep-cost on its partner;
    * an OCCLUDED partner leaves a one-directional cross term (single arc);
    * equal labels give a symmetric cut term (undirected arc);
    * differing assigned labels need the auxiliary-node gadget, valid here
      because V restricted to disparities is a truncated-linear metric.
    """
    occ_p = fp == OCCLUDED
    occ_q = fq == OCCLUDED
    va = np.where(occ_p | occ_q, 0.0, np.minimum(np.abs(fp - fq), cutoff)) * w
    vb = np.where(occ_p, 0.0, np.minimum(np.abs(fp - alpha), cutoff)) * w
    vc = np.where(occ_q, 0.0, np.minimum(np.abs(alpha - fq), cutoff)) * w

    live = (va != 0.0) | (vb != 0.0) | (vc != 0.0)
    sink = g.sink
    for i in np.nonzero(live)[0]:
        a, b, c = va[i], vb[i], vc[i]
        pi, qi = int(p_idx[i]), int(q_idx[i])
        if fp[i] == alpha:
            cap_t[qi] += a  # E = A*(1 - x_q)
        elif fq[i] == alpha:
            cap_t[pi] += a  # E = A*(1 - x_p)
        elif fp[i] == OCCLUDED:
            g.add_edge(qi, pi, c)  # E = C * x_p * (1 - x_q)
        elif fq[i] == OCCLUDED:
            g.add_edge(pi, qi, b)  # E = B * (1 - x_p) * x_q
        elif fp[i] == fq[i]:
            g.add_edge(pi, qi, b, b)  # E = B * [x_p != x_q]
        else:
            aux = next_aux
            next_aux += 1
            g.add_edge(pi, aux, b, b)
            g.add_edge(aux, qi, c, c)
            g.add_edge(aux, sink, a)
    return next_aux


def expansion_move(
    labels: np.ndarray,
    alpha: int,
    c_gc: CostVolume,
    center: Image,
    p: GcParams,
    weights: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Optimal single expansion: each pixel keeps its label or takes alpha.

    Returns a new labeling attaining the minimum energy over all 2^N
    keep/switch assignments (exact via min-cut).
    """
    labels = _check_labels(labels, c_gc)
    if not c_gc.d_min <= alpha <= c_gc.d_max:
        raise InputError(f"alpha {alpha} outside volume range")
    height, width = labels.shape
    n_px = height * width
    w_h, w_v = pair_weights(center, p) if weights is None else weights

    flat = labels.ravel()
    assigned = flat != OCCLUDED
    yy, xx = np.divmod(np.arange(n_px), width)
    keep = np.full(n_px, p.k_occlusion, dtype=np.float64)
    keep[assigned] = c_gc.costs[
        flat[assigned] - c_gc.d_min, yy[assigned], xx[assigned]
    ].astype(np.float64)
    switch = c_gc.costs[alpha - c_gc.d_min].astype(np.float64).ravel()

    # Count auxiliary nodes up front to size the graph.
    f_hp = labels[:, :-1].ravel()
    f_hq = labels[:, 1:].ravel()
    f_vp = labels[:-1, :].ravel()
    f_vq = labels[1:, :].ravel()

    def needs_aux(fa, fb):
        return (
            (fa != fb)
            & (fa != OCCLUDED)
            & (fb != OCCLUDED)
            & (fa != alpha)
            & (fb != alpha)
        )

    n_aux = int(needs_aux(f_hp, f_hq).sum() + needs_aux(f_vp, f_vq).sum())
    source = n_px
    sink = n_px + 1
    g = FlowGraph(n_px + 2 + n_aux, source, sink)

    cap_t = keep  # pairwise keep-costs accumulate here before t-links go in
    ids = np.arange(n_px).reshape(height, width)
    next_aux = n_px + 2
    next_aux = _add_pair_terms(
        g, cap_t, ids[:, :-1].ravel(), ids[:, 1:].ravel(),
        f_hp, f_hq, w_h.ravel(), alpha, p.d_cutoff, next_aux,
    )
    next_aux = _add_pair_terms(
        g, cap_t, ids[:-1, :].ravel(), ids[1:, :].ravel(),
        f_vp, f_vq, w_v.ravel(), alpha, p.d_cutoff, next_aux,
    )
    for i in range(n_px):
        if switch[i] > 0.0:
            g.add_edge(source, i, switch[i])
        if cap_t[i] > 0.0:
            g.add_edge(i, sink, cap_t[i])

    _, source_side = max_flow(g)
    keep_mask = np.zeros(n_px, dtype=bool)
    for u in source_side:
        if u < n_px:
            keep_mask[u] = True
    out = np.where(keep_mask, flat, alpha)
    return out.reshape(height, width).astype(np.int64)


def occlusion_pass(
    labels: np.ndarray,
    c_gc: CostVolume,
    center: Image,
    p: GcParams,
    weights: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, int]:
    """Greedy raster-order pass switching pixels to OCCLUDED.

    A pixel flips when dropping its assignment strictly lowers the energy:
    K - c_gc(p, f_p) - sum of its current smoothness terms < 0.  Neighbors
    already flipped earlier in the scan are seen as OCCLUDED.  Returns the
    new labeling and the number of flips.
    """
    labels = _check_labels(labels, c_gc)
    height, width = labels.shape
    w_h, w_v = pair_weights(center, p) if weights is None else weights
    out = labels.copy()
    costs = c_gc.costs
    flips = 0
    for y in range(height):
        for x in range(width):
            f = out[y, x]
            if f == OCCLUDED:
                continue
            smooth = 0.0
            if x > 0 and out[y, x - 1] != OCCLUDED:
                smooth += w_h[y, x - 1] * min(abs(f - out[y, x - 1]), p.d_cutoff)
            if x + 1 < width and out[y, x + 1] != OCCLUDED:
                smooth += w_h[y, x] * min(abs(f - out[y, x + 1]), p.d_cutoff)
            if y > 0 and out[y - 1, x] != OCCLUDED:
                smooth += w_v[y - 1, x] * min(abs(f - out[y - 1, x]), p.d_cutoff)
            if y + 1 < height and out[y + 1, x] != OCCLUDED:
                smooth += w_v[y, x] * min(abs(f - out[y + 1, x]), p.d_cutoff)
            gain = p.k_occlusion - float(costs[f - c_gc.d_min, y, x]) - smooth
            if gain < -_IMPROVE_EPS:
                out[y, x] = OCCLUDED
                flips += 1
    return out, flips


def upscale_image(img: Image, factor: int) -> Image:
    """Bilinear upscale by an integer factor; out[i*f, j*f] == in[i, j]."""
    if factor == 1:
        return Image(img.pixels.copy())
    a = img.pixels.astype(np.float64)
    height, width = a.shape
    ys = np.arange(height * factor) / factor
    xs = np.arange(width * factor) / factor
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = a[y0][:, x0] * (1 - wx) + a[y0][:, x1] * wx
    bot = a[y1][:, x0] * (1 - wx) + a[y1][:, x1] * wx
    return Image((top * (1 - wy) + bot * wy).astype(np.float32))


def _recheck_weights(
    mset: MultiscopicSet, labels: np.ndarray, p: GcParams
) -> tuple[np.ndarray, np.ndarray]:
    """Full multi-view weight rule: compare corresponding pixels in every
    view at the current labels; lambda1 only when all views look similar."""
    height, width = labels.shape

    def sampled(img: Image, direction: Direction | None) -> tuple[np.ndarray, np.ndarray]:
        if direction is None:
            return img.pixels.astype(np.float64), np.ones_like(labels, dtype=bool)
        yy, xx = np.mgrid[0:height, 0:width]
        d = np.where(labels == OCCLUDED, 0, labels)
        unit_x, unit_y = direction.offset(1)
        ox, oy = d * unit_x, d * unit_y
        sy, sx = yy + oy, xx + ox
        ok = (labels != OCCLUDED) & (sy >= 0) & (sy < height) & (sx >= 0) & (sx < width)
        vals = img.pixels[np.clip(sy, 0, height - 1), np.clip(sx, 0, width - 1)]
        return vals.astype(np.float64), ok

    views = [sampled(mset.center, None)]
    views += [sampled(img, direction) for direction, img in mset.surround]

    def weight(sl_a, sl_b):
        maxdiff = np.zeros(labels[sl_a].shape, dtype=np.float64)
        for vals, ok in views:
            both = ok[sl_a] & ok[sl_b]
            maxdiff = np.maximum(maxdiff, np.where(both, np.abs(vals[sl_a] - vals[sl_b]), 0.0))
        return np.where(maxdiff < p.theta, p.lambda1, p.lambda2)

    w_h = weight(np.s_[:, :-1], np.s_[:, 1:])
    w_v = weight(np.s_[:-1, :], np.s_[1:, :])
    return w_h, w_v


def multiscopic_gc(
    mset: MultiscopicSet,
    p: GcParams | None = None,
    matcher: str = "bt",
    bm: BlockMatchParams | None = None,
    energy_trace: list | None = None,
) -> DisparityMap:
    """Full pipeline: upscale, BT volumes, heuristic fusion, WTA init, then
    alpha-expansion sweeps with greedy occlusion passes until convergence.

    The returned map is at the input resolution (disparities divided by the
    upscale factor); OCCLUDED pixels come out invalid.  A move is kept only
    if the recomputed energy strictly drops, so the energy trace (initial
    energy, then one entry after every move and occlusion pass) is
    non-increasing.
    """
    p = p or GcParams()
    bm = bm or BlockMatchParams()
    s = p.upscale
    up_center = upscale_image(mset.center, s)
    up_set = MultiscopicSet(
        up_center,
        [(direction, upscale_image(img, s)) for direction, img in mset.surround],
        mset.baseline_mm,
    )
    bm_up = BlockMatchParams(rho=bm.rho, d_min=bm.d_min * s, d_max=bm.d_max * s)
    volumes = multiscopic_volumes(up_set, matcher, bm_up)
    c_gc = fuse(volumes, FusionStrategy.HEURISTIC)

    init = wta_disparity(c_gc, subpixel=False)
    init_vals = np.where(init.valid_mask, init.values, 0)
    labels = np.where(init.valid_mask, np.rint(init_vals), OCCLUDED).astype(np.int64)

    weights = pair_weights(up_center, p)
    energy = gc_energy(labels, c_gc, up_center, p, weights)
    if energy_trace is not None:
        energy_trace.append(energy)

    rng = np.random.default_rng(p.rng_seed)
    all_alphas = np.arange(bm_up.d_min, bm_up.d_max + 1)
    for _ in range(p.max_sweeps):
        changed = False
        for alpha in rng.permutation(all_alphas):
            cand = expansion_move(labels, int(alpha), c_gc, up_center, p, weights)
            cand_energy = gc_energy(cand, c_gc, up_center, p, weights)
            if cand_energy < energy - _IMPROVE_EPS:
                labels = cand
                energy = cand_energy
                changed = True
            if energy_trace is not None:
                energy_trace.append(energy)
        labels, flips = occlusion_pass(labels, c_gc, up_center, p, weights)
        if flips:
            changed = True
            energy = gc_energy(labels, c_gc, up_center, p, weights)
        if energy_trace is not None:
            energy_trace.append(energy)
        if p.recheck_smoothness_weights:
            weights = _recheck_weights(up_set, labels, p)
            energy = gc_energy(labels, c_gc, up_center, p, weights)
        if not changed:
            break

    coarse = labels[::s, ::s]
    disp = np.where(
        coarse == OCCLUDED, INVALID_DISPARITY, coarse.astype(np.float32) / np.float32(s)
    ).astype(np.float32)
    return DisparityMap(disp)
