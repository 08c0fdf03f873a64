import struct

import numpy as np
import pytest

from sylunits import io
from sylunits.core import FeatureSequence, Segmentation, UnitSequence
from sylunits.evaluation import ReferenceAlignment
from sylunits.losspred import MaskProbabilityRecord
from sylunits.quantize import Codebook


def test_sylf_binary_layout(tmp_path):
    path = tmp_path / "a.sylf"
    io.write_sylf(path, [[1.0, 2.0], [3.0, 4.5]], 50.0)
    raw = path.read_bytes()
    assert raw[:4] == b"SYLF"
    assert struct.unpack_from("<IIId", raw, 4) == (1, 2, 2, 50.0)
    assert np.frombuffer(raw[24:], "<f4").tolist() == [1.0, 2.0, 3.0, 4.5]
    fs = io.read_features(path)
    assert fs.frame_rate_hz == 50.0
    np.testing.assert_array_equal(fs.frames, [[1, 2], [3, 4.5]])


def test_sylf_truncated(tmp_path):
    path = tmp_path / "a.sylf"
    io.write_sylf(path, np.ones((3, 2)), 50.0)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(io.FormatError):
        io.read_sylf(path)


def test_text_variant(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("3 2 50\n0 1\n2 3\n4 5\n")
    fs = io.read_features(path)
    assert fs.T == 3 and fs.D == 2
    io.write_text_features(tmp_path / "b.txt", fs)
    np.testing.assert_array_equal(io.read_features(tmp_path / "b.txt").frames, fs.frames)


def test_text_variant_shape_mismatch(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("3 2 50\n0 1\n2 3\n")
    with pytest.raises(io.FormatError):
        io.read_features(path)


def test_records_round_trip(tmp_path):
    recs = [MaskProbabilityRecord(2, 3, {2: 0.7, 3: 0.1}), MaskProbabilityRecord(1, 1, {1: 0.25})]
    path = tmp_path / "u.rec"
    io.write_records(path, recs, T=5, span=2)
    back, T, span = io.read_records(path)
    assert (T, span) == (5, 2)
    assert back == recs


def test_records_without_header(tmp_path):
    path = tmp_path / "u.rec"
    path.write_text("2 4 2:0.5 3:0.25\n")
    recs, T, span = io.read_records(path)
    assert T == 4 and span is None
    assert recs[0].probs == {2: 0.5, 3: 0.25}


def test_records_malformed(tmp_path):
    path = tmp_path / "u.rec"
    path.write_text("2 4 2-0.5\n")
    with pytest.raises(io.FormatError):
        io.read_records(path)


def test_alignment_round_trip(tmp_path):
    ref = ReferenceAlignment(((0.0, 0.25, "hh ah"), (0.25, 0.6, "low")))
    path = tmp_path / "u.tsv"
    io.write_alignment(path, ref)
    assert io.read_alignment(path) == ref


def test_segmentation_round_trip_is_zero_based(tmp_path):
    seg = Segmentation([1, 3, 6], 5, objective=1.5, per_frame_loss=np.arange(5.0))
    path = tmp_path / "u.seg.json"
    io.write_segmentation(path, seg, 50.0, "u", include_loss=True)
    rec = io.read_segmentation(path)[1]
    assert rec["boundaries"] == [0, 2, 5]
    assert rec["k"] == 2 and rec["total_cost"] == 1.5
    back, _ = io.read_segmentation(path)
    assert back == seg
    np.testing.assert_array_equal(back.per_frame_loss, seg.per_frame_loss)


def test_units_round_trip(tmp_path):
    u = UnitSequence([4, 1], [1, 3], [3, 7], 50.0)
    assert io.format_units("utt", u) == "utt 4@0:2 1@2:6"
    path = tmp_path / "units.txt"
    io.write_units(path, [("utt", u)], 50.0)
    assert io.read_units(path) == {"utt": u}


def test_codebook_round_trip(tmp_path):
    cb = Codebook(np.random.default_rng(0).normal(size=(4, 3)), [0, 1, 0, 2], rng_seed=9)
    path = tmp_path / "cb.sylc"
    io.write_codebook(path, cb)
    back = io.read_codebook(path)
    assert np.array_equal(back.centroids, cb.centroids)
    assert back.agglomeration_map.tolist() == [0, 1, 0, 2]
    assert (back.U, back.rng_seed) == (3, 9)


def test_codebook_bad_magic(tmp_path):
    path = tmp_path / "cb.sylc"
    path.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(io.FormatError):
        io.read_codebook(path)


def test_features_round_trip_within_f32(tmp_path):
    fs = FeatureSequence(np.random.default_rng(1).normal(size=(6, 2)), 50.0)
    io.write_features(tmp_path / "a.sylf", fs)
    back = io.read_features(tmp_path / "a.sylf")
    np.testing.assert_allclose(back.frames, fs.frames, rtol=1e-6)
