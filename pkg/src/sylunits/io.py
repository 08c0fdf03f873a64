"""Readers and writers for the on-disk formats.

Files store 0-based frame offsets; the in-memory model is 1-based.

SYLF feature file (little-endian)::

    b"SYLF" | version u32 | T u32 | D u32 | frame_rate f64 | T*D f32 row-major

A text variant has a ``T D rate`` header line followed by one row per frame.

SYLC codebook file (little-endian)::

    b"SYLC" | version u32 | K u32 | D u32 | U u32 | seed i64
    | K*D f64 centroids row-major | K u32 unit map
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .core import FeatureSequence, Segmentation, UnitSequence, ValidationError
from .evaluation import ReferenceAlignment
from .losspred import MaskProbabilityRecord
from .quantize import Codebook

PathLike = Union[str, Path]

SYLF_MAGIC = b"SYLF"
SYLC_MAGIC = b"SYLC"
VERSION = 1
_SYLF_HEADER = struct.Struct("<4sIIId")
_SYLC_HEADER = struct.Struct("<4sIIIIq")


class FormatError(ValueError):
    """A file does not follow its declared format."""


def write_sylf(path: PathLike, frames, frame_rate_hz: float) -> None:
    x = np.asarray(frames, dtype="<f4")
    if x.ndim != 2:
        raise ValidationError(f"frames must be 2-D, got {x.shape}")
    T, D = x.shape
    with open(path, "wb") as f:
        f.write(_SYLF_HEADER.pack(SYLF_MAGIC, VERSION, T, D, float(frame_rate_hz)))
        f.write(np.ascontiguousarray(x).tobytes())


def write_features(path: PathLike, feats: FeatureSequence) -> None:
    write_sylf(path, feats.frames, feats.frame_rate_hz)


def read_sylf(path: PathLike) -> tuple[np.ndarray, float]:
    """Raw ``(frames, frame_rate)`` from a binary or text SYLF file."""
    data = Path(path).read_bytes()
    if data[:4] == SYLF_MAGIC:
        if len(data) < _SYLF_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        _, version, T, D, rate = _SYLF_HEADER.unpack_from(data)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        body = data[_SYLF_HEADER.size :]
        if len(body) != 4 * T * D:
            raise FormatError(f"{path}: expected {T * D} values, found {len(body) // 4}")
        return np.frombuffer(body, dtype="<f4").reshape(T, D).astype(np.float64), rate
    return _read_text_matrix(path, data.decode())


def _read_text_matrix(path, text: str):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError(f"{path}: empty file")
    try:
        T, D, rate = lines[0].split()
        T, D, rate = int(T), int(D), float(rate)
        rows = np.array([[float(v) for v in ln.split()] for ln in lines[1:]], dtype=np.float64)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
    if rows.shape != (T, D):
        raise FormatError(f"{path}: header says {T}x{D}, body is {rows.shape}")
    return rows, rate


def read_features(path: PathLike, source_layer=None) -> FeatureSequence:
    frames, rate = read_sylf(path)
    return FeatureSequence(frames, rate, source_layer)


def write_text_features(path: PathLike, feats: FeatureSequence) -> None:
    with open(path, "w") as f:
        f.write(f"{feats.T} {feats.D} {feats.frame_rate_hz!r}\n")
        for row in feats.frames:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_records(path: PathLike):
    """Parse a mask-probability record file.

    Each line is ``mask_start mask_end t1:p1 t2:p2 ...`` with 1-based frames.
    An optional ``# T=<frames> span=<span>`` comment fixes the utterance
    length; otherwise it is taken as the largest mask end.
    Returns ``(records, T, span)``; ``span`` is ``None`` if not declared.
    """
    records = []
    T = span = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                if key == "T":
                    T = int(val)
                elif key == "span":
                    span = int(val)
            continue
        parts = line.split()
        try:
            lo, hi = int(parts[0]), int(parts[1])
            probs = {}
            for tok in parts[2:]:
                t, p = tok.split(":")
                probs[int(t)] = float(p)
            records.append(MaskProbabilityRecord(lo, hi, probs))
        except (ValueError, IndexError) as e:
            raise FormatError(f"{path}:{lineno}: {e}") from None
    if T is None:
        if not records:
            raise FormatError(f"{path}: no records and no T declaration")
        T = max(r.mask_end for r in records)
    return records, T, span


def write_records(path: PathLike, records: Iterable[MaskProbabilityRecord], T=None, span=None) -> None:
    with open(path, "w") as f:
        header = [f"T={T}"] if T is not None else []
        if span is not None:
            header.append(f"span={span}")
        if header:
            f.write("# " + " ".join(header) + "\n")
        for r in records:
            probs = " ".join(f"{t}:{p!r}" for t, p in sorted(r.probs.items()))
            f.write(f"{r.mask_start} {r.mask_end} {probs}".rstrip() + "\n")


def read_alignment(path: PathLike) -> ReferenceAlignment:
    """Tab-separated ``start_sec end_sec label`` lines."""
    intervals = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) < 3:
            parts = line.split(None, 2)
        try:
            intervals.append((float(parts[0]), float(parts[1]), parts[2].strip()))
        except (ValueError, IndexError) as e:
            raise FormatError(f"{path}:{lineno}: {e}") from None
    return ReferenceAlignment(tuple(intervals))


def write_alignment(path: PathLike, ref: ReferenceAlignment) -> None:
    with open(path, "w") as f:
        for s, e, lab in ref.intervals:
            f.write(f"{s!r}\t{e!r}\t{lab}\n")


def segmentation_record(seg: Segmentation, frame_rate_hz: float, utterance: str = "",
                        include_loss: bool = False) -> dict:
    rec = {
        "utterance": utterance,
        "boundaries": (seg.boundaries - 1).tolist(),
        "k": seg.k,
        "num_frames": seg.T,
        "frame_rate_hz": float(frame_rate_hz),
        "total_cost": seg.objective,
    }
    if include_loss and seg.per_frame_loss is not None:
        rec["per_frame_loss"] = seg.per_frame_loss.tolist()
    return rec


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_segmentation(path: PathLike, seg: Segmentation, frame_rate_hz: float, utterance: str = "",
                       include_loss: bool = False) -> None:
    Path(path).write_text(dumps(segmentation_record(seg, frame_rate_hz, utterance, include_loss)))


def read_segmentation(path: PathLike) -> tuple[Segmentation, dict]:
    rec = json.loads(Path(path).read_text())
    try:
        b = np.asarray(rec["boundaries"], dtype=np.int64) + 1
        loss = rec.get("per_frame_loss")
        seg = Segmentation(b, int(rec["num_frames"]), objective=rec.get("total_cost"),
                           per_frame_loss=None if loss is None else np.asarray(loss))
    except (KeyError, ValidationError) as e:
        raise FormatError(f"{path}: {e}") from None
    return seg, rec


def format_units(utterance: str, units: UnitSequence) -> str:
    toks = [f"{u}@{s - 1}:{e - 1}" for u, s, e in units]
    return " ".join([utterance] + toks)


def parse_units(line: str, frame_rate_hz: float) -> tuple[str, UnitSequence]:
    parts = line.split()
    ids, starts, ends = [], [], []
    for tok in parts[1:]:
        u, _, span = tok.partition("@")
        s, _, e = span.partition(":")
        ids.append(int(u))
        starts.append(int(s) + 1)
        ends.append(int(e) + 1)
    return parts[0], UnitSequence(ids, starts, ends, frame_rate_hz)


def write_units(path: PathLike, items: Iterable[tuple[str, UnitSequence]], frame_rate_hz: float) -> None:
    """One utterance per line: ``utt id@start:end ...`` (0-based frames)."""
    with open(path, "w") as f:
        f.write(f"# frame_rate_hz={float(frame_rate_hz)!r}\n")
        for utt, units in items:
            f.write(format_units(utt, units) + "\n")


def read_units(path: PathLike, frame_rate_hz: float = None) -> dict[str, UnitSequence]:
    out = {}
    rate = frame_rate_hz
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key == "frame_rate_hz" and frame_rate_hz is None:
                rate = float(val)
            continue
        if rate is None:
            raise FormatError(f"{path}: frame rate unknown")
        try:
            utt, units = parse_units(line, rate)
        except (ValueError, ValidationError) as e:
            raise FormatError(f"{path}:{lineno}: {e}") from None
        out[utt] = units
    return out


def write_codebook(path: PathLike, cb: Codebook) -> None:
    with open(path, "wb") as f:
        f.write(_SYLC_HEADER.pack(SYLC_MAGIC, VERSION, cb.K, cb.D, cb.U, cb.rng_seed))
        f.write(np.ascontiguousarray(cb.centroids, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(cb.agglomeration_map, dtype="<u4").tobytes())


def read_codebook(path: PathLike) -> Codebook:
    data = Path(path).read_bytes()
    if data[:4] != SYLC_MAGIC or len(data) < _SYLC_HEADER.size:
        raise FormatError(f"{path}: not a SYLC codebook")
    _, version, K, D, U, seed = _SYLC_HEADER.unpack_from(data)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = _SYLC_HEADER.size
    need = off + 8 * K * D + 4 * K
    if len(data) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(data)}")
    c = np.frombuffer(data, dtype="<f8", count=K * D, offset=off).reshape(K, D)
    m = np.frombuffer(data, dtype="<u4", count=K, offset=off + 8 * K * D)
    cb = Codebook(c.copy(), m.astype(np.int64), seed)
    if cb.U != U:
        raise FormatError(f"{path}: header says U={U}, map has {cb.U}")
    return cb
