"""Independent reference implementations used to check the package from outside.

Nothing here imports the package's matching or scoring code. The brute-force
scorer walks cells in sorted key order and pairs in reference-index order,
and pairs cells with the same canonical sorted-monotone rule the package
documents, so agreement can be checked with exact float equality. The
permutation enumerator checks cost optimality separately.
"""

from itertools import permutations

import numpy as np


def exhaustive_min_pairs(pred_az, ref_az):
    """Minimum-total-|difference| pairing by enumerating permutations.

    Returns (pairs sorted by ref index, total cost). First permutation in
    lexicographic order wins ties. Use this for cost checks; several
    assignments can share the minimum, so the pairing itself is only
    canonical in the no-tie case.
    """
    n_p, n_r = len(pred_az), len(ref_az)
    if n_p == 0 or n_r == 0:
        return [], 0.0
    best = None
    best_cost = float("inf")
    if n_p <= n_r:
        for perm in permutations(range(n_r), n_p):
            cost = sum(abs(pred_az[i] - ref_az[perm[i]]) for i in range(n_p))
            if cost < best_cost:
                best_cost = cost
                best = [(i, perm[i]) for i in range(n_p)]
    else:
        for perm in permutations(range(n_p), n_r):
            cost = sum(abs(pred_az[perm[j]] - ref_az[j]) for j in range(n_r))
            if cost < best_cost:
                best_cost = cost
                best = [(perm[j], j) for j in range(n_r)]
    return sorted(best, key=lambda pr: pr[1]), best_cost


def canonical_pairs(pred_az, ref_az):
    """The canonical sorted-monotone minimum-cost pairing, derived recursively.

    Both sides are sorted by (azimuth, index); the smaller side aligns
    monotonically against an increasing position subset of the larger, the
    subset chosen by minimal total |difference| with the lexicographically
    first one winning ties. Costs accumulate left to right so float ties
    resolve identically to any other left-to-right implementation.
    """
    n_p, n_r = len(pred_az), len(ref_az)
    if n_p == 0 or n_r == 0:
        return []
    p_ord = sorted(range(n_p), key=lambda i: (pred_az[i], i))
    r_ord = sorted(range(n_r), key=lambda j: (ref_az[j], j))
    preds_small = n_p <= n_r
    if preds_small:
        small = [pred_az[i] for i in p_ord]
        big = [ref_az[j] for j in r_ord]
    else:
        small = [ref_az[j] for j in r_ord]
        big = [pred_az[i] for i in p_ord]
    k, m = len(small), len(big)
    state = {"cost": float("inf"), "pos": None}

    def walk(i, start, chosen):
        if i == k:
            total = 0.0
            for a, t in zip(small, chosen):
                total += abs(a - big[t])
            if total < state["cost"]:
                state["cost"] = total
                state["pos"] = list(chosen)
            return
        for t in range(start, m - (k - i) + 1):
            walk(i + 1, t + 1, chosen + [t])

    walk(0, 0, [])
    pos = state["pos"]
    if preds_small:
        pairs = [(p_ord[i], r_ord[pos[i]]) for i in range(k)]
    else:
        pairs = [(p_ord[pos[j]], r_ord[j]) for j in range(k)]
    return sorted(pairs, key=lambda pr: pr[1])


def brute_force_score(pred_cells, ref_cells, doa_threshold=20.0, rde_threshold=1.0,
                      class_count=13, with_flags=True, require_onscreen=False):
    """Definitional scorer over plain dict cells.

    Cells map (frame, class_id) -> list of (azimuth, distance, onscreen).
    Returns a dict with macro_f, macro_f_onoff, doa, rde, accuracy, and
    per-class (tp, fp, fn) triples for the spatial and onscreen-gated counts.
    """
    tp_s = [0] * class_count
    fp_s = [0] * class_count
    fn_s = [0] * class_count
    tp_o = [0] * class_count
    fp_o = [0] * class_count
    fn_o = [0] * class_count
    doa_sum = 0.0
    rde_sum = 0.0
    pairs = 0
    flag_hits = 0
    for key in sorted(set(pred_cells) | set(ref_cells)):
        _, cid = key
        p_list = pred_cells.get(key, [])
        r_list = ref_cells.get(key, [])
        matched = canonical_pairs([p[0] for p in p_list], [r[0] for r in r_list])
        for pi, ri in matched:
            p, r = p_list[pi], r_list[ri]
            daz = abs(p[0] - r[0])
            rde = abs(p[1] - r[1]) / r[1]
            doa_sum += daz
            rde_sum += rde
            pairs += 1
            ok = daz <= doa_threshold and rde <= rde_threshold
            if ok:
                tp_s[cid] += 1
            else:
                fp_s[cid] += 1
                fn_s[cid] += 1
            if with_flags:
                eq = p[2] == r[2]
                flag_hits += eq
                if ok and eq:
                    tp_o[cid] += 1
                else:
                    fp_o[cid] += 1
                    fn_o[cid] += 1
        extra_p = len(p_list) - len(matched)
        extra_r = len(r_list) - len(matched)
        fp_s[cid] += extra_p
        fn_s[cid] += extra_r
        if with_flags:
            fp_o[cid] += extra_p
            fn_o[cid] += extra_r

    def macro(tp, fp, fn):
        scores = []
        for c in range(class_count):
            denom = 2 * tp[c] + fp[c] + fn[c]
            if tp[c] + fp[c] + fn[c] > 0:
                scores.append(2.0 * tp[c] / denom)
        return float(np.mean(scores)) if scores else 1.0

    activity = bool(pred_cells) or bool(ref_cells)
    if pairs > 0:
        doa = doa_sum / pairs
        rde = rde_sum / pairs
        acc = flag_hits / pairs if with_flags else None
    else:
        doa = 180.0 if activity else 0.0
        rde = 1.0 if activity else 0.0
        acc = ((0.0 if activity else 1.0) if with_flags else None)
    primary = (tp_o, fp_o, fn_o) if require_onscreen else (tp_s, fp_s, fn_s)
    return {
        "macro_f": macro(*primary),
        "macro_f_onoff": macro(tp_o, fp_o, fn_o) if with_flags else None,
        "doa": doa,
        "rde": rde,
        "accuracy": acc,
        "pairs": pairs,
        "spatial_counts": [(tp_s[c], fp_s[c], fn_s[c]) for c in range(class_count)],
        "onoff_counts": [(tp_o[c], fp_o[c], fn_o[c]) for c in range(class_count)],
    }


def label_set_to_cells(label_set):
    """Flatten a package LabelSet into the plain-dict form the oracle takes."""
    cells = {}
    for (frame, cid), dets in label_set.cells():
        cells[(frame, cid)] = [(d.azimuth_deg, d.distance, d.onscreen) for d in dets]
    return cells


def random_label_cells(rng, num_frames=50, class_count=13, cell_prob=0.08,
                       max_per_cell=3, with_flags=True):
    """Random reference-style cells with continuous azimuths (ties have measure zero)."""
    cells = {}
    for frame in range(num_frames):
        for cid in range(class_count):
            if rng.random() < cell_prob:
                count = int(rng.integers(1, max_per_cell + 1))
                dets = []
                for _ in range(count):
                    az = float(rng.uniform(-90.0, 90.0))
                    dist = float(rng.uniform(0.3, 6.0))
                    flag = bool(rng.random() < 0.5) if with_flags else None
                    dets.append((az, dist, flag))
                cells[(frame, cid)] = dets
    return cells


def perturbed_prediction_cells(rng, ref_cells, keep_prob=0.8, spur_prob=0.05,
                               num_frames=50, class_count=13, with_flags=True):
    """Predictions derived from refs: jittered keeps, drops, and spurious extras."""
    cells = {}
    for key, dets in ref_cells.items():
        kept = []
        for az, dist, flag in dets:
            if rng.random() < keep_prob:
                naz = az + float(rng.normal(0.0, 15.0))
                # reflect at the fold boundaries; clipping would pile mass on
                # exactly +/-90 and make same-cell azimuth ties possible
                if naz > 90.0:
                    naz = 180.0 - naz
                elif naz < -90.0:
                    naz = -180.0 - naz
                ndist = float(max(0.05, dist * (1.0 + rng.normal(0.0, 0.4))))
                nflag = (flag if rng.random() < 0.8 else not flag) if with_flags else None
                kept.append((naz, ndist, nflag))
        if kept:
            cells[key] = kept
    for frame in range(num_frames):
        for cid in range(class_count):
            if rng.random() < spur_prob:
                key = (frame, cid)
                existing = cells.get(key, [])
                if len(existing) < 3:
                    flag = bool(rng.random() < 0.5) if with_flags else None
                    existing = existing + [(float(rng.uniform(-90.0, 90.0)),
                                            float(rng.uniform(0.3, 6.0)), flag)]
                    cells[key] = existing
    return cells
