"""Corpus-level batch driver behind the command line.

Every command processes the files of an input directory independently,
isolates per-file failures, writes a ``manifest.json`` listing each input
exactly once, and returns exit code 0 only when nothing failed. Outputs are
ordered by input path, so results do not depend on the worker count.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import io
from .core import Segmentation, ValidationError
from .evaluation import (
    DEFAULT_TOLERANCES,
    boundary_score,
    pool_scores,
    purity_counts,
    purity_from_counts,
    strip_edges,
    unit_boundaries,
)
from .extraction import (
    CalibrationError,
    IntervalCover,
    RateProfile,
    calibrate_delta,
    select_k,
)
from .losspred import assemble_loss_matrix, normalized_mincut
from .quantize import assign_units, bitrate, dedup, fit_codebook, pool_segments

logger = logging.getLogger(__name__)

WORKERS_ENV = "SYLUNITS_WORKERS"
FEATURE_SUFFIXES = (".sylf", ".txt")
RECORD_SUFFIXES = (".rec", ".txt")
SEG_SUFFIX = ".seg.json"


@dataclass
class PipelineConfig:
    span: int = 50
    G: int = 50
    quantile: float = 0.75
    delta: Optional[float] = None
    target_hz: Optional[float] = None
    units_per_second: Optional[float] = None
    k: Optional[int] = None
    tol_hz: float = 0.05
    calibration_pooling: str = "total"
    search: str = "scan"
    kmeans_k: Optional[int] = None
    units: int = 4096
    seed: int = 0
    max_iters: int = 100
    max_samples: int = 500_000
    tolerances: list = field(default_factory=lambda: list(DEFAULT_TOLERANCES))
    eval_pooling: str = "pooled"
    include_edges: bool = False
    purity_weighting: str = "segment"
    frame_rate_hz: float = 50.0
    include_loss: bool = False
    workers: Optional[int] = None

    @classmethod
    def load(cls, path=None, **overrides) -> "PipelineConfig":
        """Read a JSON config file, then apply non-``None`` overrides."""
        values = {}
        if path is not None:
            values = json.loads(Path(path).read_text())
            unknown = set(values) - {f.name for f in fields(cls)}
            if unknown:
                raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def rate_control(self) -> str:
        """Name of the single configured rate-control setting."""
        set_ = [n for n in ("delta", "target_hz", "units_per_second", "k") if getattr(self, n) is not None]
        if len(set_) != 1:
            raise ValidationError(
                f"exactly one of delta, target_hz, units_per_second, k must be set; got {set_ or 'none'}"
            )
        return set_[0]

    def n_workers(self) -> int:
        if self.workers is not None:
            return max(1, int(self.workers))
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def list_inputs(directory, suffixes) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ValidationError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.is_file() and p.name.endswith(suffixes) and p.name != "manifest.json")


def utterance_id(path: Path) -> str:
    name = path.name
    for suf in (SEG_SUFFIX,) + FEATURE_SUFFIXES + RECORD_SUFFIXES:
        if name.endswith(suf):
            return name[: -len(suf)]
    return path.stem


def _run(job: Callable, items: list, workers: int) -> list:
    """Apply ``job`` to every item; results keep input order."""
    if workers <= 1 or len(items) <= 1:
        return [job(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(job, items))


def _guard(fn, *args):
    try:
        return "ok", fn(*args)
    except (ValueError, OSError, KeyError) as e:
        return "failed", f"{type(e).__name__}: {e}"


def write_manifest(out_dir: Path, entries: list[dict]) -> int:
    failures = sum(e["status"] != "ok" for e in entries)
    manifest = {"num_inputs": len(entries), "num_failed": failures, "files": entries}
    (out_dir / "manifest.json").write_text(io.dumps(manifest))
    return failures


# --- assemble ---------------------------------------------------------------

def _assemble_one(args):
    path, out_dir, span, rate = args

    def work():
        records, T, declared = io.read_records(path)
        m = assemble_loss_matrix(records, T, declared or span)
        out = Path(out_dir) / f"{utterance_id(Path(path))}.sylf"
        io.write_sylf(out, m.C, rate)
        return {"output": out.name, "T": T, "cells_written": int(m.written.sum())}

    return _guard(work)


def cmd_assemble(records_dir, out_dir, config: PipelineConfig) -> int:
    """One loss matrix per record file; nonzero exit on any failure."""
    paths = list_inputs(records_dir, RECORD_SUFFIXES)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not paths:
        write_manifest(out, [])
        logger.error("no record files in %s", records_dir)
        return 1
    jobs = [(str(p), str(out), config.span, config.frame_rate_hz) for p in paths]
    entries = []
    for p, (status, info) in zip(paths, _run(_assemble_one, jobs, config.n_workers())):
        entries.append(_entry(p, status, info))
    return 1 if write_manifest(out, entries) else 0


def _entry(path, status, info) -> dict:
    e = {"input": Path(path).name, "status": status}
    if status == "ok":
        e.update(info)
    else:
        e["error"] = info
    return e


# --- segment ----------------------------------------------------------------

def _choose_k(cfg: PipelineConfig, T: int, duration: float, min_k: int) -> int:
    if cfg.k is not None:
        return int(cfg.k)
    k = int(round(cfg.units_per_second * duration))
    return int(min(max(k, min_k), T))


def _segment_one(args):
    path, out_dir, mode, cfg, delta = args

    def work():
        frames, rate = io.read_sylf(path)
        T = frames.shape[0]
        duration = T / rate
        if mode == "mincut":
            seg = normalized_mincut(frames, _choose_k(cfg, T, duration, 1))
        elif delta is not None:
            seg = select_k(frames, delta, cfg.quantile, cfg.G, cfg.search)
        else:
            cover = IntervalCover(frames, cfg.G)
            seg = cover.solve(_choose_k(cfg, T, duration, cover.min_k))
        utt = utterance_id(Path(path))
        out = Path(out_dir) / f"{utt}{SEG_SUFFIX}"
        io.write_segmentation(out, seg, rate, utt, cfg.include_loss)
        return {"output": out.name, "k": seg.k, "duration_sec": duration}

    return _guard(work)


def cmd_segment(input_dir, out_dir, config: PipelineConfig, mode: str = "sylboost",
                calibration_dir=None) -> int:
    """Segment every feature file (``sylboost``) or loss matrix (``mincut``)."""
    if mode not in ("sylboost", "mincut"):
        raise ValidationError(f"unknown mode {mode!r}")
    control = config.rate_control()
    if mode == "mincut" and control in ("delta", "target_hz"):
        raise ValidationError("mincut mode needs k or units_per_second")
    paths = list_inputs(input_dir, FEATURE_SUFFIXES)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not paths:
        write_manifest(out, [])
        logger.error("no input files in %s", input_dir)
        return 1
    summary = {"mode": mode, "rate_control": control}
    delta = config.delta
    if control == "target_hz":
        corpus = load_corpus(calibration_dir or input_dir)
        result = calibrate_delta(corpus, config.target_hz, config.quantile, config.G,
                                 config.tol_hz, pooling=config.calibration_pooling)
        delta = result.delta
        summary["calibration"] = _calibration_dict(result)
    if delta is not None:
        summary["delta"] = delta
    jobs = [(str(p), str(out), mode, config, delta) for p in paths]
    entries = []
    ks, durs = [], []
    for p, (status, info) in zip(paths, _run(_segment_one, jobs, config.n_workers())):
        entries.append(_entry(p, status, info))
        if status == "ok":
            ks.append(info["k"])
            durs.append(info["duration_sec"])
    if ks:
        summary["mean_rate_hz"] = float(sum(ks) / sum(durs))
        summary["mean_utterance_rate_hz"] = float(np.mean([k / d for k, d in zip(ks, durs)]))
    summary["num_segmented"] = len(ks)
    (out / "summary.json").write_text(io.dumps(summary))
    return 1 if write_manifest(out, entries) else 0


def load_corpus(directory):
    return [io.read_features(p) for p in list_inputs(directory, FEATURE_SUFFIXES)]


def _calibration_dict(result) -> dict:
    d = asdict(result)
    d["ks"] = list(d["ks"])
    return d


# --- tokenize ---------------------------------------------------------------

def cmd_tokenize(feats_dir, segs_dir, out_dir, config: PipelineConfig, codebook_path=None) -> int:
    """Fit or apply a codebook and write unit sequences plus a rate report."""
    paths = list_inputs(feats_dir, FEATURE_SUFFIXES)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not paths:
        write_manifest(out, [])
        return 1
    loaded = []
    entries = {}
    for p in paths:
        utt = utterance_id(p)
        seg_path = Path(segs_dir) / f"{utt}{SEG_SUFFIX}"
        status, info = _guard(_load_pair, p, seg_path)
        if status == "ok":
            loaded.append((p, utt) + info)
        else:
            entries[p] = _entry(p, status, info)

    if codebook_path is not None:
        cb = io.read_codebook(codebook_path)
    else:
        pooled = [pool_segments(f, s) for _, _, f, s in loaded]
        if not pooled:
            write_manifest(out, [entries[p] for p in paths])
            return 1
        cb = fit_codebook(np.concatenate(pooled), config.units, config.kmeans_k, config.seed,
                          config.max_iters, config.max_samples)
        io.write_codebook(out / "codebook.sylc", cb)

    raw, deduped = [], []
    rate = None
    total_units = total_dedup = 0
    total_sec = 0.0
    for p, utt, feats, seg in loaded:
        status, info = _guard(assign_units, feats, seg, cb)
        if status != "ok":
            entries[p] = _entry(p, status, info)
            continue
        units = info
        dd = dedup(units)
        raw.append((utt, units))
        deduped.append((utt, dd))
        rate = feats.frame_rate_hz if rate is None else rate
        total_units += len(units)
        total_dedup += len(dd)
        total_sec += feats.duration_sec
        entries[p] = _entry(p, "ok", {"units": len(units), "dedup_units": len(dd)})

    rate = rate or config.frame_rate_hz
    io.write_units(out / "units.txt", raw, rate)
    io.write_units(out / "units.dedup.txt", deduped, rate)
    report = {"num_units": cb.U, "kmeans_k": cb.K, "seed": cb.rng_seed,
              "num_utterances": len(raw), "duration_sec": total_sec}
    if total_sec > 0:
        pre = total_units / total_sec
        post = total_dedup / total_sec
        report.update({
            "rate_hz": pre,
            "dedup_rate_hz": post,
            "bitrate_bps": bitrate(pre, cb.U) if cb.U >= 2 and pre > 0 else None,
            "dedup_bitrate_bps": bitrate(post, cb.U) if cb.U >= 2 and post > 0 else None,
        })
    (out / "report.json").write_text(io.dumps(report))
    return 1 if write_manifest(out, [entries[p] for p in paths]) else 0


def _load_pair(feat_path, seg_path):
    feats = io.read_features(feat_path)
    seg, _ = io.read_segmentation(seg_path)
    if seg.T != feats.T:
        raise ValidationError(f"segmentation covers {seg.T} frames, features have {feats.T}")
    return feats, seg


# --- eval -------------------------------------------------------------------

def _hypotheses(units_file=None, segs_dir=None) -> dict:
    """``{utt: (hyp_times_sec, end_sec, units_or_None)}``."""
    hyps = {}
    if units_file is not None:
        for utt, units in io.read_units(units_file).items():
            hyps[utt] = (unit_boundaries(units), units.duration_sec, units)
    else:
        for p in list_inputs(segs_dir, (SEG_SUFFIX,)):
            seg, rec = io.read_segmentation(p)
            rate = rec["frame_rate_hz"]
            hyps[rec.get("utterance") or utterance_id(p)] = (seg.times(rate), seg.T / rate, None)
    return dict(sorted(hyps.items()))


def evaluate_corpus(hyps: dict, alignments_dir, config: PipelineConfig) -> tuple[dict, list]:
    per_tol = {tol: [] for tol in config.tolerances}
    counts = {}
    entries = []
    for utt, (hyp, end, units) in hyps.items():
        ali_path = Path(alignments_dir) / f"{utt}.tsv"
        if not ali_path.exists():
            entries.append({"input": utt, "status": "failed", "error": "missing alignment"})
            continue
        status, ref = _guard(io.read_alignment, ali_path)
        if status != "ok":
            entries.append({"input": utt, "status": status, "error": ref})
            continue
        ref_b = ref.boundaries()
        if not config.include_edges:
            ref_b = strip_edges(ref_b, end)
            hyp = strip_edges(hyp, end)
        for tol in config.tolerances:
            per_tol[tol].append(boundary_score(ref_b, hyp, tol) if ref_b.size else None)
        if units is not None:
            for key, n in purity_counts(units, ref, config.purity_weighting).items():
                counts[key] = counts.get(key, 0) + n
        entries.append({"input": utt, "status": "ok"})
    report = {"pooling": config.eval_pooling, "boundaries": []}
    for tol, scores in per_tol.items():
        scores = [s for s in scores if s is not None]
        if scores:
            report["boundaries"].append(pool_scores(scores, config.eval_pooling).as_dict())
    if counts:
        cp, sp = purity_from_counts(counts)
        report["cluster_purity"] = cp
        report["syllable_purity"] = sp
    return report, entries


def cmd_eval(alignments_dir, config: PipelineConfig, units_file=None, segs_dir=None, out_path=None) -> int:
    """Boundary scores at every tolerance plus purities when units are given."""
    if (units_file is None) == (segs_dir is None):
        raise ValidationError("give exactly one of units_file or segs_dir")
    hyps = _hypotheses(units_file, segs_dir)
    if not hyps:
        logger.error("no hypotheses found")
        return 1
    report, entries = evaluate_corpus(hyps, alignments_dir, config)
    failures = sum(e["status"] != "ok" for e in entries)
    report["files"] = entries
    report["num_failed"] = failures
    text = io.dumps(report)
    if out_path is not None:
        Path(out_path).write_text(text)
    else:
        print(text, end="")
    return 1 if failures else 0


# --- calibrate --------------------------------------------------------------

def cmd_calibrate(feats_dir, config: PipelineConfig, out_path=None, codebook_path=None) -> int:
    """Choose delta for ``config.target_hz`` and report the achieved rates."""
    if config.target_hz is None:
        raise ValidationError("calibrate needs target_hz")
    corpus = load_corpus(feats_dir)
    if not corpus:
        logger.error("no feature files in %s", feats_dir)
        return 1
    profiles = [RateProfile(fs, config.quantile, config.G) for fs in corpus]
    try:
        result = calibrate_delta(corpus, config.target_hz, config.quantile, config.G, config.tol_hz,
                                 pooling=config.calibration_pooling, profiles=profiles)
    except CalibrationError as e:
        logger.error("%s", e)
        report = {"error": str(e), "bracket_hz": list(e.bracket) if e.bracket else None}
        _emit(report, out_path)
        return 1
    report = _calibration_dict(result)
    if codebook_path is not None:
        cb = io.read_codebook(codebook_path)
        n = 0
        for fs, prof, k in zip(corpus, profiles, result.ks):
            n += len(dedup(assign_units(fs, prof.segmentation(k), cb)))
        report["dedup_rate_hz"] = n / sum(fs.duration_sec for fs in corpus)
    _emit(report, out_path)
    return 0 if result.converged else 1


def _emit(report, out_path):
    text = io.dumps(report)
    if out_path is not None:
        Path(out_path).write_text(text)
    else:
        print(text, end="")
