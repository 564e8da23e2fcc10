import numpy as np
import pytest

from oracles import (
    brute_force_score,
    canonical_pairs,
    exhaustive_min_pairs,
    label_set_to_cells,
    perturbed_prediction_cells,
    random_label_cells,
)
from stereoseld.errors import ConfigError, ParseError, ValidationError
from stereoseld.metrics import (
    Detection,
    LabelSet,
    MetricsConfig,
    MetricsReport,
    apply_distance_bias,
    class_mean_distance,
    decode_multi_accdoa,
    encode_multi_accdoa,
    match_frame,
    parse_report_kv,
    rank_systems,
    score,
)


def _set_from_cells(cells, max_polyphony=3):
    out = LabelSet(max_polyphony)
    for (frame, cid), dets in sorted(cells.items()):
        for az, dist, flag in dets:
            out.add(frame, cid, Detection(az, dist, flag))
    return out


def _single(az, dist, flag=None, frame=0, cid=0):
    out = LabelSet()
    out.add(frame, cid, Detection(az, dist, flag))
    return out


def test_match_single_pair():
    pairs = match_frame([Detection(10.0, 1.0)], [Detection(12.0, 1.0)])
    assert pairs == [(0, 0)]


def test_match_crossed_pair():
    preds = [Detection(-80.0, 1.0), Detection(30.0, 1.0)]
    refs = [Detection(28.0, 1.0), Detection(-79.0, 1.0)]
    pairs = match_frame(preds, refs)
    assert set(pairs) == {(0, 1), (1, 0)}
    # sorted by reference index
    assert pairs == [(1, 0), (0, 1)]
    cost = sum(abs(preds[i].azimuth_deg - refs[j].azimuth_deg) for i, j in pairs)
    assert cost == 3.0


def test_match_empty_sides():
    assert match_frame([], [Detection(40.0, 1.0)]) == []
    assert match_frame([Detection(40.0, 1.0)], []) == []
    assert match_frame([], []) == []


def test_match_smaller_side_fully_matched():
    preds = [Detection(0.0, 1.0)]
    refs = [Detection(50.0, 1.0), Detection(-2.0, 1.0), Detection(80.0, 1.0)]
    pairs = match_frame(preds, refs)
    assert pairs == [(0, 1)]


def test_match_agrees_with_exhaustive_oracle():
    rng = np.random.default_rng(21)
    for _ in range(150):
        n_p = int(rng.integers(0, 5))
        n_r = int(rng.integers(0, 5))
        p_az = [float(a) for a in rng.uniform(-90.0, 90.0, size=n_p)]
        r_az = [float(a) for a in rng.uniform(-90.0, 90.0, size=n_r)]
        got = match_frame([Detection(a, 1.0) for a in p_az],
                          [Detection(a, 1.0) for a in r_az])
        want, want_cost = exhaustive_min_pairs(p_az, r_az)
        got_cost = sum(abs(p_az[i] - r_az[j]) for i, j in got)
        assert got_cost == pytest.approx(want_cost, abs=1e-12)
        assert len(got) == len(want)


def test_match_canonical_under_cost_ties():
    # two predictions on the same side of two references: crossed and
    # straight pairings cost the same, so only the canonical rule pins one
    cases = [
        ([30.0, 50.0], [0.0, 10.0]),
        ([-70.0, -60.0], [-20.0, -10.0]),
        ([10.0, 10.0], [0.0, 40.0]),
        ([0.0, 20.0], [5.0, 15.0]),
    ]
    for p_az, r_az in cases:
        got = match_frame([Detection(a, 1.0) for a in p_az],
                          [Detection(a, 1.0) for a in r_az])
        assert got == canonical_pairs(p_az, r_az)
    rng = np.random.default_rng(6)
    for _ in range(300):
        n_p = int(rng.integers(0, 5))
        n_r = int(rng.integers(0, 5))
        p_az = [float(a) for a in rng.uniform(-90.0, 90.0, size=n_p)]
        r_az = [float(a) for a in rng.uniform(-90.0, 90.0, size=n_r)]
        got = match_frame([Detection(a, 1.0) for a in p_az],
                          [Detection(a, 1.0) for a in r_az])
        assert got == canonical_pairs(p_az, r_az)


def test_score_perfect_self():
    refs = _set_from_cells(random_label_cells(np.random.default_rng(0)))
    rep = score(refs, refs)
    assert rep.macro_f == 1.0
    assert rep.macro_f_onoff == 1.0
    assert rep.doa_error_deg == 0.0
    assert rep.rel_dist_error == 0.0
    assert rep.onscreen_accuracy == 1.0


def test_score_single_tp_inside_gates():
    rep = score(_single(15.0, 3.0), _single(0.0, 2.0))
    assert rep.macro_f == 1.0
    assert rep.doa_error_deg == 15.0
    assert rep.rel_dist_error == 0.5
    assert rep.matched_pairs == 1
    assert rep.per_class[0].tp == 1


def test_score_azimuth_gate_failure_still_measured():
    rep = score(_single(25.0, 2.0), _single(0.0, 2.0))
    assert rep.macro_f == 0.0
    assert rep.doa_error_deg == 25.0
    assert (rep.per_class[0].tp, rep.per_class[0].fp, rep.per_class[0].fn) == (0, 1, 1)


def test_score_distance_gate_failure():
    # relative error (5 - 2) / 2 = 1.5 exceeds the threshold of 1
    rep = score(_single(0.0, 5.0), _single(0.0, 2.0))
    assert rep.macro_f == 0.0
    assert rep.rel_dist_error == 1.5
    # at exactly the threshold the pair passes
    rep = score(_single(0.0, 4.0), _single(0.0, 2.0))
    assert rep.macro_f == 1.0
    rep = score(_single(20.0, 2.0), _single(0.0, 2.0))
    assert rep.macro_f == 1.0


def test_score_unmatched_counts():
    preds = LabelSet()
    preds.add(0, 0, Detection(0.0, 1.0))
    preds.add(0, 0, Detection(50.0, 1.0))
    refs = _single(1.0, 1.0)
    rep = score(preds, refs)
    assert (rep.per_class[0].tp, rep.per_class[0].fp, rep.per_class[0].fn) == (1, 1, 0)
    rep = score(refs, preds)
    assert (rep.per_class[0].tp, rep.per_class[0].fp, rep.per_class[0].fn) == (1, 0, 1)


def test_flag_gate_affects_only_onoff_variant():
    rep = score(_single(5.0, 2.0, True), _single(0.0, 2.0, False))
    assert rep.macro_f == 1.0
    assert rep.macro_f_onoff == 0.0
    assert rep.onscreen_accuracy == 0.0
    agree = score(_single(5.0, 2.0, True), _single(0.0, 2.0, True))
    assert agree.macro_f_onoff == 1.0
    assert agree.onscreen_accuracy == 1.0


def test_require_onscreen_match_headline():
    cfg = MetricsConfig(require_onscreen_match=True)
    rep = score(_single(5.0, 2.0, True), _single(0.0, 2.0, False), cfg)
    assert rep.macro_f == 0.0
    assert (rep.per_class[0].fp, rep.per_class[0].fn) == (1, 1)
    with pytest.raises(ConfigError):
        score(_single(5.0, 2.0), _single(0.0, 2.0, False), cfg)


def test_flags_on_one_side_only():
    rep = score(_single(5.0, 2.0, True), _single(0.0, 2.0))
    assert rep.macro_f_onoff is None
    assert rep.onscreen_accuracy is None
    assert rep.macro_f == 1.0


def test_gate_independence_from_flags():
    rng = np.random.default_rng(8)
    refs = random_label_cells(rng)
    preds = perturbed_prediction_cells(rng, refs)
    flipped = {k: [(az, d, not f) for az, d, f in v] for k, v in preds.items()}
    a = score(_set_from_cells(preds), _set_from_cells(refs))
    b = score(_set_from_cells(flipped), _set_from_cells(refs))
    assert a.macro_f == b.macro_f
    assert a.doa_error_deg == b.doa_error_deg
    assert a.rel_dist_error == b.rel_dist_error
    assert a.onscreen_accuracy != b.onscreen_accuracy


def test_spurious_prediction_never_raises_f():
    rng = np.random.default_rng(14)
    for _ in range(30):
        refs = random_label_cells(rng, num_frames=10, cell_prob=0.15)
        preds = perturbed_prediction_cells(rng, refs, num_frames=10)
        base = score(_set_from_cells(preds), _set_from_cells(refs))
        frame = int(rng.integers(0, 10))
        cid = int(rng.integers(0, 13))
        if len(preds.get((frame, cid), [])) >= 3:
            continue
        spoiled = {k: list(v) for k, v in preds.items()}
        spoiled.setdefault((frame, cid), []).append(
            (float(rng.uniform(-90, 90)), float(rng.uniform(0.3, 6.0)), True))
        worse = score(_set_from_cells(spoiled), _set_from_cells(refs))
        for c in range(13):
            f_before = base.per_class[c].f_score
            f_after = worse.per_class[c].f_score
            if f_before is not None and f_after is not None:
                assert f_after <= f_before + 1e-12


def test_rde_scale_invariance():
    rng = np.random.default_rng(3)
    refs = random_label_cells(rng)
    preds = perturbed_prediction_cells(rng, refs)
    base = score(_set_from_cells(preds), _set_from_cells(refs))
    for c in (0.01, 3.7, 250.0):
        sp = {k: [(az, d * c, f) for az, d, f in v] for k, v in preds.items()}
        sr = {k: [(az, d * c, f) for az, d, f in v] for k, v in refs.items()}
        scaled = score(_set_from_cells(sp), _set_from_cells(sr))
        assert scaled.macro_f == base.macro_f
        assert scaled.rel_dist_error == pytest.approx(base.rel_dist_error, rel=1e-12)


def test_sentinels_no_activity():
    rep = score(LabelSet(), LabelSet())
    assert rep.macro_f == 1.0
    assert rep.doa_error_deg == 0.0
    assert rep.rel_dist_error == 0.0
    assert rep.onscreen_accuracy == 1.0
    assert rep.matched_pairs == 0


def test_sentinels_activity_without_pairs():
    refs = _single(10.0, 1.0, True)
    rep = score(LabelSet(), refs)
    assert rep.macro_f == 0.0
    assert rep.doa_error_deg == 180.0
    assert rep.rel_dist_error == 1.0
    assert rep.onscreen_accuracy == 0.0
    # class-disjoint sets also make no pairs
    preds = _single(10.0, 1.0, True, cid=1)
    rep = score(preds, refs)
    assert rep.matched_pairs == 0
    assert rep.doa_error_deg == 180.0


def test_macro_skips_inactive_classes():
    preds = LabelSet()
    preds.add(0, 0, Detection(0.0, 1.0))
    preds.add(0, 5, Detection(80.0, 1.0))
    refs = LabelSet()
    refs.add(0, 0, Detection(1.0, 1.0))
    rep = score(preds, refs)
    # class 0 scores 1, class 5 scores 0, the other eleven are skipped
    assert rep.macro_f == 0.5


def test_score_rejects_out_of_range_class():
    cfg = MetricsConfig(class_count=4)
    with pytest.raises(ValidationError):
        score(_single(0.0, 1.0, cid=7), LabelSet(), cfg)


def test_label_set_basics():
    ls = LabelSet()
    ls.add(3, 2, Detection(10.0, 1.0, True))
    ls.add(3, 2, Detection(-10.0, 2.0, False))
    assert ls.num_detections == 2
    assert ls.keys() == {(3, 2)}
    assert ls.classes_present() == [2]
    assert ls.all_flagged
    ls.add(0, 1, Detection(0.0, 1.0))
    assert not ls.all_flagged
    assert len(ls.get(3, 2)) == 2
    assert ls.get(9, 9) == []
    records = ls.to_records()
    assert LabelSet.from_records(records).cells() == ls.cells()


def test_label_set_polyphony_cap():
    ls = LabelSet()
    for i in range(3):
        ls.add(0, 0, Detection(float(i), 1.0))
    with pytest.raises(ValidationError):
        ls.add(0, 0, Detection(50.0, 1.0))
    with pytest.raises(ValidationError):
        ls.add(-1, 0, Detection(0.0, 1.0))
    with pytest.raises(ValidationError):
        ls.add(0, 13, Detection(0.0, 1.0))
    with pytest.raises(ValidationError):
        LabelSet(max_polyphony=0)


def test_detection_validation():
    Detection(-90.0, 0.1)
    Detection(90.0, 5.0, True)
    with pytest.raises(ValidationError):
        Detection(91.0, 1.0)
    with pytest.raises(ValidationError):
        Detection(0.0, 0.0)


def test_metrics_config_validation():
    with pytest.raises(ValidationError):
        MetricsConfig(doa_threshold_deg=0.0)
    with pytest.raises(ValidationError):
        MetricsConfig(rde_threshold=-1.0)
    with pytest.raises(ValidationError):
        MetricsConfig(class_count=0)


def _accdoa_frame():
    return np.zeros((3, 13, 4))


def test_decode_basic_activity():
    frame = _accdoa_frame()
    frame[0, 2] = (1.0, 0.0, 1.5, 0.9)
    frame[1, 2] = (0.0, 0.3, 2.0, 0.0)
    out = decode_multi_accdoa([frame])
    dets = out.get(0, 2)
    assert len(dets) == 1
    assert dets[0].azimuth_deg == 0.0
    assert dets[0].distance == 1.5
    assert dets[0].onscreen is True
    assert out.num_detections == 1


def test_decode_folds_rear_directions():
    frame = _accdoa_frame()
    frame[0, 0] = (-0.6, 0.6, 1.0, 0.2)
    out = decode_multi_accdoa([frame])
    det = out.get(0, 0)[0]
    assert det.azimuth_deg == pytest.approx(45.0, abs=1e-12)
    assert det.onscreen is False


def test_decode_merges_near_duplicates():
    frame = _accdoa_frame()
    frame[0, 4] = (np.cos(np.radians(10.0)), np.sin(np.radians(10.0)), 1.0, 1.0)
    frame[1, 4] = 0.9 * np.array([np.cos(np.radians(20.0)), np.sin(np.radians(20.0)), 1.0, 1.0])
    out = decode_multi_accdoa([frame])
    dets = out.get(0, 4)
    assert len(dets) == 1
    # the larger-magnitude track wins
    assert dets[0].azimuth_deg == pytest.approx(10.0, abs=1e-12)
    far = _accdoa_frame()
    far[0, 4] = (np.cos(np.radians(10.0)), np.sin(np.radians(10.0)), 1.0, 1.0)
    far[1, 4] = (np.cos(np.radians(40.0)), np.sin(np.radians(40.0)), 1.0, 1.0)
    assert len(decode_multi_accdoa([far]).get(0, 4)) == 2


def test_decode_validation():
    with pytest.raises(ValidationError):
        decode_multi_accdoa([np.zeros((2, 13, 4))])
    bad = _accdoa_frame()
    bad[1, 1, 0] = np.nan
    with pytest.raises(ValidationError) as exc:
        decode_multi_accdoa([_accdoa_frame(), bad])
    assert "frame 1" in str(exc.value)
    with pytest.raises(ValidationError):
        decode_multi_accdoa([], activity_threshold=0.0)


def test_encode_decode_round_trip():
    rng = np.random.default_rng(31)
    ls = LabelSet()
    used = {}
    for _ in range(200):
        frame = int(rng.integers(0, 40))
        cid = int(rng.integers(0, 13))
        key = (frame, cid)
        existing = used.setdefault(key, [])
        if len(existing) >= 3:
            continue
        # keep same-cell azimuths apart so the decoder's merge stays out of play
        az = float(rng.uniform(-90.0, 90.0))
        if any(abs(az - a) < 16.0 for a in existing):
            continue
        existing.append(az)
        ls.add(frame, cid, Detection(az, float(rng.uniform(0.2, 5.0)),
                                     bool(rng.random() < 0.5)))
    frames = encode_multi_accdoa(ls, 40)
    back = decode_multi_accdoa(frames)
    assert back.keys() == ls.keys()
    for key in ls.keys():
        orig = sorted(ls.get(*key), key=lambda d: d.azimuth_deg)
        dec = sorted(back.get(*key), key=lambda d: d.azimuth_deg)
        assert len(orig) == len(dec)
        for o, d in zip(orig, dec):
            assert abs(o.azimuth_deg - d.azimuth_deg) < 0.01
            assert d.distance == o.distance
            assert d.onscreen == o.onscreen


def test_encode_validation():
    ls = _single(0.0, 1.0, True, frame=5)
    with pytest.raises(ValidationError):
        encode_multi_accdoa(ls, 5)


def test_class_mean_distance():
    refs = LabelSet()
    refs.add(0, 3, Detection(0.0, 1.0))
    refs.add(1, 3, Detection(0.0, 3.0))
    refs.add(0, 7, Detection(0.0, 2.5))
    means = class_mean_distance(refs)
    assert means == {3: 2.0, 7: 2.5}
    assert 0 not in means
    assert class_mean_distance(LabelSet()) == {}


def test_class_mean_distance_streaming_oracle():
    rng = np.random.default_rng(5)
    cells = random_label_cells(rng)
    refs = _set_from_cells(cells)
    sums, counts = {}, {}
    for (_, cid), dets in cells.items():
        for _, dist, _ in dets:
            sums[cid] = sums.get(cid, 0.0) + dist
            counts[cid] = counts.get(cid, 0) + 1
    want = {cid: sums[cid] / counts[cid] for cid in sums}
    got = class_mean_distance(refs)
    assert got.keys() == want.keys()
    for cid in want:
        assert got[cid] == pytest.approx(want[cid], rel=1e-12)


def test_apply_distance_bias():
    preds = LabelSet()
    preds.add(0, 3, Detection(12.0, 7.0, True))
    out = apply_distance_bias(preds, {3: 2.0})
    det = out.get(0, 3)[0]
    assert det.distance == 2.0
    assert det.azimuth_deg == 12.0 and det.onscreen is True
    assert apply_distance_bias(LabelSet(), {}).num_detections == 0
    preds.add(0, 5, Detection(0.0, 1.0))
    with pytest.raises(ValidationError) as exc:
        apply_distance_bias(preds, {3: 2.0})
    assert "5" in str(exc.value)


def test_bias_keeps_f_when_deviations_small():
    rng = np.random.default_rng(44)
    refs = LabelSet()
    for frame in range(30):
        for cid in (1, 4, 9):
            if rng.random() < 0.5:
                # distances vary less than 2x around each class's level,
                # keeping every relative deviation from the mean below 1
                base = {1: 1.0, 4: 2.0, 9: 4.0}[cid]
                refs.add(frame, cid, Detection(
                    float(rng.uniform(-90, 90)),
                    base * float(rng.uniform(0.7, 1.4)),
                    bool(rng.random() < 0.5)))
    preds = LabelSet.from_records(refs.to_records())
    means = class_mean_distance(refs)
    biased = apply_distance_bias(preds, means)
    before = score(preds, refs)
    after = score(biased, refs)
    assert before.macro_f == 1.0
    assert after.macro_f == 1.0
    assert after.doa_error_deg == before.doa_error_deg
    assert after.rel_dist_error > 0.0


def test_rank_systems():
    def rep(f):
        return MetricsReport(macro_f=f, doa_error_deg=0.0, rel_dist_error=0.0,
                             matched_pairs=0)

    ranked = rank_systems([("a", rep(0.3)), ("b", rep(0.9)), ("c", rep(0.3))])
    assert [n for n, _ in ranked] == ["b", "a", "c"]


def test_report_kv_round_trip():
    rng = np.random.default_rng(2)
    refs = random_label_cells(rng)
    preds = perturbed_prediction_cells(rng, refs)
    rep = score(_set_from_cells(preds), _set_from_cells(refs))
    back = parse_report_kv(rep.to_kv())
    assert back.macro_f == rep.macro_f
    assert back.doa_error_deg == rep.doa_error_deg
    assert back.rel_dist_error == rep.rel_dist_error
    assert back.macro_f_onoff == rep.macro_f_onoff
    assert back.onscreen_accuracy == rep.onscreen_accuracy
    assert back.matched_pairs == rep.matched_pairs
    for cid, counts in rep.per_class.items():
        assert (back.per_class[cid].tp, back.per_class[cid].fp,
                back.per_class[cid].fn) == (counts.tp, counts.fp, counts.fn)


def test_report_kv_optional_fields_absent():
    rep = MetricsReport(macro_f=0.5, doa_error_deg=10.0, rel_dist_error=0.2,
                        matched_pairs=3)
    text = rep.to_kv()
    assert "macro_f_onoff" not in text
    back = parse_report_kv(text)
    assert back.macro_f_onoff is None and back.onscreen_accuracy is None


def test_report_kv_parse_errors():
    with pytest.raises(ParseError):
        parse_report_kv("macro_f = 0.5\n")
    with pytest.raises(ParseError) as exc:
        parse_report_kv("macro_f = maybe\n")
    assert exc.value.line == 1
    with pytest.raises(ParseError):
        parse_report_kv("just words\n")


def test_report_text_table():
    rep = score(_single(5.0, 2.0, True), _single(0.0, 2.0, True))
    text = rep.to_text()
    assert "macro F (spatial gates)" in text
    assert "100.00" in text
    assert "Female speech, woman speaking" in text


def test_score_agrees_with_brute_force_small():
    rng = np.random.default_rng(99)
    for _ in range(25):
        refs = random_label_cells(rng, num_frames=12)
        preds = perturbed_prediction_cells(rng, refs, num_frames=12)
        rep = score(_set_from_cells(preds), _set_from_cells(refs))
        want = brute_force_score(preds, refs)
        assert rep.macro_f == want["macro_f"]
        assert rep.macro_f_onoff == want["macro_f_onoff"]
        assert rep.doa_error_deg == want["doa"]
        assert rep.rel_dist_error == want["rde"]
        assert rep.onscreen_accuracy == want["accuracy"]
        assert rep.matched_pairs == want["pairs"]
        for cid in range(13):
            c = rep.per_class[cid]
            assert (c.tp, c.fp, c.fn) == want["spatial_counts"][cid]


def test_label_set_to_cells_round_trip():
    rng = np.random.default_rng(1)
    cells = random_label_cells(rng)
    assert label_set_to_cells(_set_from_cells(cells)) == cells
