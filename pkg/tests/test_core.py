import numpy as np
import pytest

from gazeact.core import (
    ActivityLabel,
    EmptyInputError,
    GazeSample,
    InsufficientDataError,
    LabelTrack,
    ParameterError,
    ParseError,
    PipelineConfig,
    SessionRecord,
    load_config,
    parse_gaze_log,
    parse_label_csv,
    resample_gaze,
    validate_session,
    write_gaze_csv,
)


def write_csv(path, text):
    path.write_text(text)
    return path


class TestParseGazeLog:
    def test_well_formed_rows(self, tmp_path):
        p = write_csv(tmp_path / "g.csv", "t,x,y,valid\n0.0,10,20,1\n0.1,11,21,1\n0.2,12,22,1\n")
        samples = parse_gaze_log(p)
        assert len(samples) == 3
        assert [s.t for s in samples] == [0.0, 0.1, 0.2]
        assert samples[1].x == 11 and samples[1].y == 21

    def test_out_of_order_rows_sorted_with_warning(self, tmp_path):
        p = write_csv(tmp_path / "g.csv", "t,x,y,valid\n0.2,12,22,1\n0.0,10,20,1\n0.1,11,21,1\n")
        with pytest.warns(UserWarning, match="out of time order"):
            samples = parse_gaze_log(p)
        assert [s.t for s in samples] == [0.0, 0.1, 0.2]

    def test_short_gap_interpolated_at_midpoint(self, tmp_path):
        # invalid sample halfway between valid neighbors 33 ms apart:
        # expected value is the arithmetic midpoint of the neighbors
        p = write_csv(
            tmp_path / "g.csv",
            "t,x,y,valid\n0.0,10,100,1\n0.0165,0,0,0\n0.033,20,200,1\n",
        )
        samples = parse_gaze_log(p)
        mid = samples[1]
        assert mid.valid
        assert mid.x == pytest.approx(15.0)
        assert mid.y == pytest.approx(150.0)

    def test_long_gap_holds_last_valid_and_stays_flagged(self, tmp_path):
        rows = ["t,x,y,valid", "0.0,10,100,1"]
        for i in range(1, 10):
            rows.append(f"{i * 0.1},0,0,0")
        rows.append("1.0,20,200,1")
        p = write_csv(tmp_path / "g.csv", "\n".join(rows) + "\n")
        samples = parse_gaze_log(p)
        held = samples[1:-1]
        assert all(not s.valid for s in held)
        assert all(s.x == 10 and s.y == 100 for s in held)

    def test_duplicate_timestamps_rejected(self, tmp_path):
        p = write_csv(tmp_path / "g.csv", "t,x,y,valid\n0.0,1,1,1\n0.0,2,2,1\n0.1,3,3,1\n")
        with pytest.warns(UserWarning, match="duplicate"):
            samples = parse_gaze_log(p)
        assert [s.t for s in samples] == [0.0, 0.1]
        assert samples[0].x == 1

    def test_malformed_row_reports_line_number(self, tmp_path):
        p = write_csv(tmp_path / "g.csv", "t,x,y,valid\n0.0,1,1,1\nnot-a-number,2,2,1\n")
        with pytest.raises(ParseError, match=":3"):
            parse_gaze_log(p)

    def test_bad_valid_flag_rejected(self, tmp_path):
        p = write_csv(tmp_path / "g.csv", "t,x,y,valid\n0.0,1,1,yes\n")
        with pytest.raises(ParseError, match="valid flag"):
            parse_gaze_log(p)

    def test_empty_file(self, tmp_path):
        p = write_csv(tmp_path / "g.csv", "")
        with pytest.raises(EmptyInputError):
            parse_gaze_log(p)

    def test_header_only_file(self, tmp_path):
        p = write_csv(tmp_path / "g.csv", "t,x,y,valid\n")
        with pytest.raises(EmptyInputError):
            parse_gaze_log(p)

    def test_ingest_serialize_reparse_is_identity(self, tmp_path):
        rng = np.random.default_rng(7)
        rows = ["t,x,y,valid"]
        for i in range(50):
            rows.append(f"{i / 30},{rng.uniform(0, 640)},{rng.uniform(0, 480)},1")
        p = write_csv(tmp_path / "g.csv", "\n".join(rows) + "\n")
        first = parse_gaze_log(p)
        q = tmp_path / "roundtrip.csv"
        write_gaze_csv(first, q)
        second = parse_gaze_log(q)
        assert first == second

    def test_monotone_time_after_ingesting_permuted_rows(self, tmp_path):
        rng = np.random.default_rng(3)
        for trial in range(10):
            times = np.sort(rng.uniform(0, 10, 40))
            order = rng.permutation(40)
            rows = ["t,x,y,valid"] + [f"{times[i]},{i},{i},1" for i in order]
            p = write_csv(tmp_path / f"g{trial}.csv", "\n".join(rows) + "\n")
            with pytest.warns(UserWarning):
                samples = parse_gaze_log(p)
            t = np.array([s.t for s in samples])
            assert np.all(np.diff(t) > 0)


class TestResampleGaze:
    def test_identity_at_own_rate(self):
        samples = [GazeSample(i / 30, float(i), 2.0 * i) for i in range(60)]
        out = resample_gaze(samples, 30.0)
        assert len(out) == len(samples)
        for a, b in zip(samples, out):
            assert b.x == pytest.approx(a.x, abs=1e-12)
            assert b.y == pytest.approx(a.y, abs=1e-12)

    def test_linear_signal_preserved_across_rates(self):
        samples = [GazeSample(i / 60, i / 60, 0.0) for i in range(121)]
        out = resample_gaze(samples, 30.0)
        for s in out:
            assert s.x == pytest.approx(s.t, abs=1e-12)

    def test_two_sample_ramp_at_4hz(self):
        out = resample_gaze([GazeSample(0, 0, 0), GazeSample(1, 10, 0)], 4.0)
        assert [s.x for s in out] == pytest.approx([0, 2.5, 5, 7.5, 10])
        assert [s.t for s in out] == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            resample_gaze([GazeSample(0, 0, 0)], 30.0)

    def test_validity_requires_both_brackets(self):
        samples = [
            GazeSample(0.0, 0, 0, True),
            GazeSample(1.0, 1, 1, False),
            GazeSample(2.0, 2, 2, True),
        ]
        out = resample_gaze(samples, 2.0)
        assert [s.valid for s in out] == [True, False, False, False, True]


def make_session(**kwargs):
    gaze = [GazeSample(i / 30, 100.0, 100.0) for i in range(300)]
    labels = LabelTrack([(0.0, 10.0, ActivityLabel.READ)])
    base = dict(
        subject_id="s01",
        session_index=1,
        gaze=gaze,
        labels=labels,
        sample_rate=30.0,
    )
    base.update(kwargs)
    return SessionRecord(**base)


class TestValidateSession:
    def test_consistent_session_is_clean(self):
        session = make_session(embeddings=np.zeros((300, 4096), dtype=np.float32))
        assert validate_session(session) == []

    def test_embedding_count_mismatch_names_both_counts(self):
        session = make_session(
            flows=np.zeros((299, 3)), embeddings=np.zeros((299, 4096), dtype=np.float32)
        )
        report = validate_session(session)
        assert any("299" in v and "300" in v for v in report)

    def test_overlapping_labels_cite_both_segments(self):
        labels = LabelTrack(
            [(0.0, 6.0, ActivityLabel.READ), (5.0, 10.0, ActivityLabel.WRITE)]
        )
        report = validate_session(make_session(labels=labels))
        assert any("read" in v and "write" in v and "overlap" in v for v in report)

    def test_coverage_gap_reported(self):
        session = make_session(flows=np.zeros((1000, 3)))  # ~33 s of frames vs 10 s of gaze
        report = validate_session(session)
        assert any("span" in v for v in report)


class TestLabelCsv:
    def test_round_trip(self, tmp_path):
        p = write_csv(
            tmp_path / "labels.csv",
            "t_start,t_end,label\n0.0,120.0,read\n120.0,150.0,void\n150.0,270.0,watch_video\n",
        )
        track = parse_label_csv(p)
        assert track.segments[0][2] is ActivityLabel.READ
        assert track.segments[1][2] is ActivityLabel.VOID
        assert track.span() == (0.0, 270.0)

    def test_unknown_label_rejected_with_line(self, tmp_path):
        p = write_csv(tmp_path / "labels.csv", "t_start,t_end,label\n0.0,1.0,knitting\n")
        with pytest.raises(ParseError, match=":2"):
            parse_label_csv(p)

    def test_majority_label(self):
        track = LabelTrack(
            [(0.0, 6.0, ActivityLabel.READ), (6.0, 10.0, ActivityLabel.VOID)]
        )
        assert track.majority_label(0.0, 10.0) is ActivityLabel.READ
        assert track.majority_label(5.0, 10.0) is ActivityLabel.VOID
        assert track.majority_label(20.0, 30.0) is None


class TestPipelineConfig:
    def test_defaults_validate(self):
        PipelineConfig().validate()

    def test_unknown_keys_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"wavelet_scale": 10, "frobnicate": 1}')
        with pytest.raises(ParameterError, match="frobnicate"):
            load_config(p)

    def test_json_round_trip(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"wavelet_scale": 8, "window_seconds": 20, "class_mode": 6}')
        cfg = load_config(p)
        assert cfg.wavelet_scale == 8
        assert cfg.window_seconds == 20
        assert cfg.class_mode == 6

    @pytest.mark.parametrize(
        "overrides",
        [
            dict(tau_small=2.0, tau_large=1.0),
            dict(tau_small=-1.0, tau_large=1.0),
            dict(wavelet_scale=7),
            dict(median_filter_width=4),
            dict(window_seconds=1.0, stride_seconds=2.0),
            dict(class_mode=7),
        ],
    )
    def test_invariants_enforced(self, overrides):
        with pytest.raises(ParameterError):
            PipelineConfig(**overrides).validate()
