"""Batch command line front end.

Subcommands: index, sample, convert, synth, eval, bias-baseline, inspect.
Exit codes: 0 success, 1 usage error, 2 data error. Every config key can come
from a ``key = value`` file via --config and from a flag of the same name;
flags win.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace

import numpy as np

from .audioio import read_wav, wav_duration_s, wav_info, write_wav
from .config import PipelineConfig, load_config
from .errors import ConfigError, StereoSeldError, ValidationError
from .foa import FoaClip, foa_to_stereo, rotate_yaw
from .labels import (
    FovConfig,
    parse_metadata,
    read_metadata_file,
    slice_frames,
    transform_clip_labels,
    write_metadata_file,
)
from .metrics import (
    LabelSet,
    MetricsConfig,
    apply_distance_bias,
    class_mean_distance,
    parse_report_kv,
    rank_systems,
    score,
)
from .projection import (
    build_map,
    frame_filename,
    frame_index_for_time,
    frames_per_clip,
    load_frame,
    project,
    save_frame,
)
from .sampler import (
    IndexEntry,
    RecordingIndex,
    read_index,
    read_manifest,
    sample_clips,
    write_index,
    write_manifest,
)
from .spatializer import ReverbConfig, SampleBank, make_random_scene, render_scene, write_scene

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# clips are stacked into one frame axis for whole-set scoring
CLIP_FRAME_STRIDE = 1_000_000


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this toolkit reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="key = value config file")
    group = p.add_argument_group("config overrides")
    for f in fields(PipelineConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name,
                           metavar="V", help=f"override {f.name}")
    return p


def _config_from_args(args) -> PipelineConfig:
    overrides = {}
    for f in fields(PipelineConfig):
        value = getattr(args, "cfg_" + f.name, None)
        if value is not None:
            overrides[f.name] = value
    return load_config(getattr(args, "config", None), overrides)


def _resolve_jobs(cfg: PipelineConfig) -> int:
    return cfg.jobs if cfg.jobs > 0 else (os.cpu_count() or 1)


def _run_tasks(worker, tasks, jobs):
    """Run worker over tasks, preserving input order in the result list."""
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks))


# ---------------------------------------------------------------- index

def cmd_index(args, cfg: PipelineConfig) -> int:
    names = sorted(n for n in os.listdir(args.audio_dir) if n.lower().endswith(".wav"))
    if not names:
        raise ConfigError(f"no wav files in {args.audio_dir}")
    entries = []
    for name in names:
        stem = os.path.splitext(name)[0]
        audio_path = os.path.join(args.audio_dir, name)
        frames_dir = os.path.join(args.frames_root, stem) if args.frames_root else ""
        metadata_path = os.path.join(args.metadata_dir, stem + ".csv")
        entries.append(IndexEntry(stem, wav_duration_s(audio_path), audio_path,
                                  frames_dir, metadata_path))
    write_index(args.out, RecordingIndex(entries))
    print(f"indexed {len(entries)} recordings -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- sample

def cmd_sample(args, cfg: PipelineConfig) -> int:
    index = read_index(args.index)
    specs = sample_clips(index, args.num, cfg.clip_len_s, cfg.seed, cfg.yaw_step_deg)
    write_manifest(args.out, specs, cfg.seed)
    print(f"sampled {len(specs)} clips from {len(index)} recordings -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- convert

def _convert_one(task):
    clip_id, spec, entry, cfg, out_dir, write_video = task
    try:
        if entry is None:
            raise ValidationError(f"recording {spec.recording_id!r} not in index")
        channels, rate = read_wav(entry.audio_path)
        if rate != cfg.sample_rate:
            raise ValidationError(f"{entry.audio_path}: rate {rate}, expected {cfg.sample_rate}")
        if channels.shape[0] != 4:
            raise ValidationError(f"{entry.audio_path}: {channels.shape[0]} channels, expected 4")
        start = int(round(spec.start_s * cfg.sample_rate))
        n = int(round(spec.clip_len_s * cfg.sample_rate))
        if start + n > channels.shape[1]:
            raise ValidationError(f"clip window [{spec.start_s}, +{spec.clip_len_s}] past recording end")
        foa = FoaClip(channels[:, start:start + n], rate)
        stereo = foa_to_stereo(rotate_yaw(foa, spec.yaw_deg))
        write_wav(os.path.join(out_dir, "audio", clip_id + ".wav"),
                  stereo.samples, rate, cfg.wav_bit_depth)

        src_records = read_metadata_file(entry.metadata_path, "source")
        start_frame = int(round(spec.start_s / cfg.label_frame_s))
        num_frames = int(round(spec.clip_len_s / cfg.label_frame_s))
        clip_records = slice_frames(src_records, start_frame, num_frames)
        out_records = transform_clip_labels(clip_records, spec.yaw_deg, FovConfig(cfg.hfov_deg))
        write_metadata_file(os.path.join(out_dir, "metadata", clip_id + ".csv"),
                            out_records, "stereo")

        if write_video:
            if not entry.frames_dir:
                raise ValidationError(f"recording {spec.recording_id!r} has no frames directory")
            base = frame_index_for_time(spec.start_s, cfg.fps)
            count = frames_per_clip(spec.clip_len_s, cfg.fps)
            clip_dir = os.path.join(out_dir, "video", clip_id)
            os.makedirs(clip_dir, exist_ok=True)
            pmap = None
            for i in range(count):
                src_path = os.path.join(entry.frames_dir, frame_filename(base + i))
                if not os.path.exists(src_path):
                    raise ValidationError(f"missing source frame {src_path}")
                eq = load_frame(src_path)
                if pmap is None:
                    pmap = build_map(spec.yaw_deg, cfg.hfov_deg, cfg.out_width,
                                     cfg.out_height, eq.shape[1], eq.shape[0])
                save_frame(os.path.join(clip_dir, frame_filename(i)),
                           project(eq, pmap, cfg.interpolation))
        return clip_id, None
    except (StereoSeldError, OSError) as exc:
        return clip_id, str(exc)


def cmd_convert(args, cfg: PipelineConfig) -> int:
    index = read_index(args.index)
    clips, _ = read_manifest(args.manifest, cfg.clip_len_s)
    by_id = {e.recording_id: e for e in index}
    for sub in ("audio", "metadata") + (() if args.no_video else ("video",)):
        os.makedirs(os.path.join(args.out_dir, sub), exist_ok=True)
    tasks = [(cid, spec, by_id.get(spec.recording_id), cfg, args.out_dir, not args.no_video)
             for cid, spec in clips]
    results = _run_tasks(_convert_one, tasks, _resolve_jobs(cfg))
    failures = sorted((cid, err) for cid, err in results if err is not None)
    with open(os.path.join(args.out_dir, "failures.csv"), "w", newline="") as fh:
        fh.write("clip_id,error\n")
        for cid, err in failures:
            fh.write(f"{cid},{err.replace(chr(10), ' ')}\n")
    print(f"converted {len(results) - len(failures)} of {len(results)} clips -> {args.out_dir}")
    if failures:
        print(f"{len(failures)} failures recorded in failures.csv", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- synth

_SYNTH_BANK = None


def _synth_init(bank_path, sample_rate):
    global _SYNTH_BANK
    _SYNTH_BANK = SampleBank.from_manifest(bank_path, sample_rate)


def _synth_one(task):
    (scene_id, scene_seed, duration, ambient, reverb, min_events, max_events,
     out_dir) = task
    try:
        bank = _SYNTH_BANK
        spec = make_random_scene(duration, scene_seed, bank, min_events, max_events,
                                 ambient, reverb)
        clip, records = render_scene(spec, bank)
        write_wav(os.path.join(out_dir, "foa", scene_id + ".wav"),
                  clip.samples, clip.sample_rate, "float32")
        write_metadata_file(os.path.join(out_dir, "metadata", scene_id + ".csv"),
                            records, "source")
        write_scene(os.path.join(out_dir, "scenes", scene_id + ".scene"), spec)
        return scene_id, None
    except (StereoSeldError, OSError) as exc:
        return scene_id, str(exc)


def cmd_synth(args, cfg: PipelineConfig) -> int:
    for sub in ("foa", "metadata", "scenes"):
        os.makedirs(os.path.join(args.out_dir, sub), exist_ok=True)
    reverb = ReverbConfig(args.reverb, args.reverb_decay, args.direct_to_reverb)
    rng = np.random.default_rng(cfg.seed)
    scene_seeds = [int(s) for s in rng.integers(2 ** 31, size=args.num)]
    duration = args.duration if args.duration is not None else cfg.clip_len_s
    tasks = [(f"scene{i:05d}", scene_seeds[i], duration, args.ambient_level, reverb,
              args.min_events, args.max_events, args.out_dir)
             for i in range(args.num)]
    jobs = _resolve_jobs(cfg)
    if jobs <= 1 or len(tasks) <= 1:
        _synth_init(args.bank, cfg.sample_rate)
        results = [_synth_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_synth_init,
                                 initargs=(args.bank, cfg.sample_rate)) as pool:
            results = list(pool.map(_synth_one, tasks))
    failures = [(sid, err) for sid, err in results if err is not None]
    if failures:
        for sid, err in failures:
            print(f"{sid}: {err}", file=sys.stderr)
        raise ValidationError(f"{len(failures)} of {len(results)} scenes failed")
    entries = [IndexEntry(sid, duration, os.path.join(args.out_dir, "foa", sid + ".wav"),
                          "", os.path.join(args.out_dir, "metadata", sid + ".csv"))
               for sid, _ in results]
    write_index(os.path.join(args.out_dir, "index.csv"), RecordingIndex(entries))
    print(f"synthesized {len(results)} scenes -> {args.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _csv_ids(dirname) -> dict:
    return {os.path.splitext(n)[0]: os.path.join(dirname, n)
            for n in os.listdir(dirname) if n.lower().endswith(".csv")}


def _load_set(paths_by_clip, clip_order, schema) -> LabelSet:
    """Stack per-clip label files onto one frame axis (stride per clip)."""
    records = []
    for k, cid in enumerate(clip_order):
        if cid not in paths_by_clip:
            continue
        offset = k * CLIP_FRAME_STRIDE
        for r in read_metadata_file(paths_by_clip[cid], schema):
            records.append(replace(r, frame=r.frame + offset))
    return LabelSet.from_records(records)


def _metrics_config(cfg: PipelineConfig, require_onscreen: bool) -> MetricsConfig:
    return MetricsConfig(cfg.doa_threshold_deg, cfg.rde_threshold, require_onscreen)


def cmd_eval(args, cfg: PipelineConfig) -> int:
    if args.rank:
        named = []
        for path in args.rank:
            with open(path) as fh:
                named.append((path, parse_report_kv(fh.read())))
        for place, (name, report) in enumerate(rank_systems(named), start=1):
            print(f"{place}. {name}  macro F = {100.0 * report.macro_f:.2f} %")
        return EXIT_OK
    if not args.pred_dir or not args.ref_dir:
        print("stereoseld eval: error: --pred-dir and --ref-dir are required (or --rank)",
              file=sys.stderr)
        return EXIT_USAGE
    refs_by_clip = _csv_ids(args.ref_dir)
    preds_by_clip = _csv_ids(args.pred_dir)
    if not refs_by_clip:
        raise ConfigError(f"no reference csv files in {args.ref_dir}")
    extra = sorted(set(preds_by_clip) - set(refs_by_clip))
    if extra:
        raise ValidationError(f"predictions without references: {', '.join(extra)}")
    missing = sorted(set(refs_by_clip) - set(preds_by_clip))
    if missing and not args.allow_missing:
        raise ValidationError(
            f"missing prediction files: {', '.join(missing)} (use --allow-missing)"
        )
    clip_order = sorted(refs_by_clip)
    refs = _load_set(refs_by_clip, clip_order, "stereo")
    preds = _load_set(preds_by_clip, clip_order, "prediction")
    report = score(preds, refs, _metrics_config(cfg, args.require_onscreen))
    print(report.to_text(), end="")
    if args.out:
        with open(args.out + ".txt", "w") as fh:
            fh.write(report.to_text())
        with open(args.out + ".kv", "w") as fh:
            fh.write(report.to_kv())
        print(f"report -> {args.out}.txt, {args.out}.kv")
    return EXIT_OK


# ---------------------------------------------------------------- bias-baseline

def cmd_bias_baseline(args, cfg: PipelineConfig) -> int:
    refs_by_clip = _csv_ids(args.ref_dir)
    preds_by_clip = _csv_ids(args.pred_dir)
    if set(refs_by_clip) != set(preds_by_clip):
        raise ValidationError("bias-baseline needs matching pred/ref clip id sets")
    clip_order = sorted(refs_by_clip)
    refs = _load_set(refs_by_clip, clip_order, "stereo")
    preds = _load_set(preds_by_clip, clip_order, "prediction")
    if args.train_ref_dir:
        train_by_clip = _csv_ids(args.train_ref_dir)
        train = _load_set(train_by_clip, sorted(train_by_clip), "stereo")
    else:
        train = refs
    means = class_mean_distance(train)
    biased = apply_distance_bias(preds, means)
    mcfg = _metrics_config(cfg, args.require_onscreen)
    before = score(preds, refs, mcfg)
    after = score(biased, refs, mcfg)
    print("class mean distances (training refs):")
    for cid in sorted(means):
        print(f"  class {cid}: {means[cid]:.4f}")
    print()
    print("original predictions:")
    print(before.to_text())
    print("class-mean distances substituted:")
    print(after.to_text(), end="")
    if args.write_preds:
        os.makedirs(args.write_preds, exist_ok=True)
        grouped = {cid: [] for cid in clip_order}
        for r in biased.to_records():
            k, frame = divmod(r.frame, CLIP_FRAME_STRIDE)
            grouped[clip_order[k]].append(replace(r, frame=frame))
        for cid, records in grouped.items():
            write_metadata_file(os.path.join(args.write_preds, cid + ".csv"),
                                records, "prediction")
        print(f"biased predictions -> {args.write_preds}")
    if args.out:
        with open(args.out + ".base.kv", "w") as fh:
            fh.write(before.to_kv())
        with open(args.out + ".biased.kv", "w") as fh:
            fh.write(after.to_kv())
    return EXIT_OK


# ---------------------------------------------------------------- inspect

def _inspect_metadata(path):
    with open(path) as fh:
        text = fh.read()
    for schema in ("stereo", "source", "prediction"):
        try:
            records = parse_metadata(text, schema)
        except StereoSeldError:
            continue
        frames = sorted({r.frame for r in records})
        classes = sorted({r.class_id for r in records})
        print(f"{path}: {schema} metadata, {len(records)} rows")
        if records:
            print(f"  frames {frames[0]}..{frames[-1]}, classes {classes}")
        return
    raise ValidationError(f"{path}: not parseable under any metadata schema")


def cmd_inspect(args, cfg: PipelineConfig) -> int:
    path = args.path
    if not os.path.exists(path):
        raise ValidationError(f"{path}: no such file")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".wav":
        info = wav_info(path)
        print(f"{path}: wav")
        for key in sorted(info):
            print(f"  {key} = {info[key]}")
    elif ext == ".scene":
        from .spatializer import read_scene

        spec = read_scene(path)
        print(f"{path}: scene, {spec.duration_s:g} s, {len(spec.events)} events, "
              f"seed {spec.seed}")
        for i, ev in enumerate(spec.events):
            print(f"  event {i}: class {ev.class_id} sample {ev.sample_path} "
                  f"onset {ev.onset_s:g} keyframes {len(ev.keyframes)}")
    elif ext == ".kv":
        with open(path) as fh:
            report = parse_report_kv(fh.read())
        print(report.to_text(), end="")
    elif ext == ".csv":
        with open(path) as fh:
            head = fh.readline().strip()
        if head.startswith("recording_id,"):
            index = read_index(path)
            print(f"{path}: index, {len(index)} recordings, "
                  f"{index.total_duration_s:g} s total")
        elif head.startswith("clip_id,"):
            clips, seed = read_manifest(path)
            print(f"{path}: manifest, {len(clips)} clips, seed {seed}")
        else:
            _inspect_metadata(path)
    else:
        raise ValidationError(f"{path}: unrecognized file type")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _build_parser() -> _Parser:
    parser = _Parser(prog="stereoseld",
                     description="Stereo SELD data construction and evaluation toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    parent = _config_parent()

    p = sub.add_parser("index", parents=[parent], help="index a directory of FOA recordings")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--metadata-dir", required=True)
    p.add_argument("--frames-root", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("sample", parents=[parent], help="sample a clip manifest from an index")
    p.add_argument("--index", required=True)
    p.add_argument("--num", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("convert", parents=[parent],
                       help="render stereo clips (audio, labels, frames) from a manifest")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-video", action="store_true")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", parents=[parent], help="render random synthetic FOA scenes")
    p.add_argument("--bank", required=True, help="sample bank manifest csv")
    p.add_argument("--num", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--ambient-level", type=float, default=0.0)
    p.add_argument("--reverb", action="store_true")
    p.add_argument("--reverb-decay", type=float, default=0.3)
    p.add_argument("--direct-to-reverb", type=float, default=4.0)
    p.add_argument("--min-events", type=int, default=1)
    p.add_argument("--max-events", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", parents=[parent], help="score prediction csvs against references")
    p.add_argument("--pred-dir")
    p.add_argument("--ref-dir")
    p.add_argument("--out", help="report path prefix (.txt and .kv written)")
    p.add_argument("--allow-missing", action="store_true",
                   help="clips without prediction files count as all misses")
    p.add_argument("--require-onscreen", action="store_true",
                   help="gate true positives on onscreen flag equality")
    p.add_argument("--rank", nargs="+", metavar="REPORT_KV",
                   help="rank saved kv reports by macro F instead of scoring")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bias-baseline", parents=[parent],
                       help="score predictions with class-mean distances substituted")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--ref-dir", required=True)
    p.add_argument("--train-ref-dir", help="refs to average distances over (default: --ref-dir)")
    p.add_argument("--write-preds", help="directory for the distance-substituted predictions")
    p.add_argument("--out", help="report path prefix (.base.kv and .biased.kv written)")
    p.add_argument("--require-onscreen", action="store_true")
    p.set_defaults(func=cmd_bias_baseline)

    p = sub.add_parser("inspect", parents=[parent], help="summarize a toolkit file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = _config_from_args(args)
        return args.func(args, cfg)
    except (StereoSeldError, OSError) as exc:
        print(f"stereoseld {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
