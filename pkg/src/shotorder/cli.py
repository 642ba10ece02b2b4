"""``shotorder`` command line: dataset building, synthesis, training, evaluation, matrix export, genre analysis.

Exit codes: 0 success, 1 usage error, 2 data-format error, 3 numeric/training error.
The default output directory is ``$SHOTORDER_OUT`` (current directory when unset).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import ContractError, DataFormatError, ShotOrderError, UnusableScene
from .ktdce import LossConfig
from .permlab import build_ktd_matrix

OUT_ENV = "SHOTORDER_OUT"


class UsageError(ShotOrderError):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _rel(path, start) -> str:
    return os.path.relpath(Path(path).resolve(), Path(start).resolve())


def _ratios(text):
    parts = [float(x) for x in text.replace(":", ",").split(",")]
    total = sum(parts)
    if len(parts) != 3 or total <= 0:
        raise argparse.ArgumentTypeError("expected three ratios such as 7:1:2")
    return tuple(p / total for p in parts)


# -- run configuration ---------------------------------------------------

@dataclass
class RunConfig:
    command: str
    seed: int = 0
    epochs: int = 30
    batch_size: int = 16
    ratios: tuple = (0.7, 0.1, 0.2)
    dtype: str = "float32"
    model: dict = field(default_factory=dict)
    loss: dict = field(default_factory=dict)
    optim: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        d = asdict(self)
        d["ratios"] = list(self.ratios)
        return d


def load_config_file(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise DataFormatError(f"cannot read config: {e}", path) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise DataFormatError("config must be a mapping", path)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise DataFormatError(f"unknown config keys {sorted(unknown)}", path)
    return data


def _parse_set(items) -> dict:
    """``section.key=value`` overrides, value parsed as YAML."""
    out: dict = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or section not in ("model", "loss", "optim"):
            raise UsageError(f"--set expects model|loss|optim.<key>=<value>, got {item!r}")
        out.setdefault(section, {})[name] = yaml.safe_load(value)
    return out


# -- commands ------------------------------------------------------------

def cmd_ktd_matrix(args):
    sys.stdout.write(build_ktd_matrix(args.k).to_csv())
    return 0


def cmd_analyze(args):
    from .dataforge.meta import LabelProvision, genre_shot_histogram, histogram_csv, read_meta

    rows = genre_shot_histogram(read_meta(args.meta), LabelProvision.read(args.labels))
    text = histogram_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _summary(samples, scenes) -> dict:
    from .dataforge.sequences import SPLITS

    out = {}
    for split in SPLITS:
        ids = sorted({s.scene_id for s in samples if s.split == split})
        shots = [sh for sid in ids for sh in scenes[sid].shots]
        out[split] = {
            "scenes": len(ids),
            "sequences": sum(s.split == split for s in samples),
            "shots": len(shots),
            "mean_shots_per_scene": len(shots) / len(ids) if ids else 0.0,
            "mean_shot_frames": float(np.mean([sh.length for sh in shots])) if shots else 0.0,
        }
    return out


def cmd_build_dataset(args):
    from .dataforge.records import clean_shots, ingest_shot_boundaries
    from .dataforge.sequences import make_sequences, split_scenes, with_split, write_manifest

    bdir = Path(args.boundaries)
    if not bdir.is_dir():
        raise UsageError(f"boundary directory {bdir} does not exist")
    out = Path(args.out) if args.out else default_out_dir() / "manifest.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    for extra in (args.meta, args.labels):
        if extra and not Path(extra).exists():
            raise UsageError(f"{extra} does not exist")

    scenes, shot_index, skipped = {}, {}, []
    for path in sorted(bdir.glob("*.txt")):
        scene = ingest_shot_boundaries(path)
        frames = None
        if args.frames_dir:
            fpath = Path(args.frames_dir) / f"{scene.scene_id}.npy"
            if fpath.exists():
                frames = np.load(fpath, mmap_mode="r")
        try:
            cleaned = clean_shots(scene, args.min_frames, args.max_black_fraction, frames, k=args.k)
        except UnusableScene:
            skipped.append(scene.scene_id)
            continue
        original = {sh.frame_start: i for i, sh in enumerate(scene.shots)}
        scenes[scene.scene_id] = cleaned
        shot_index[scene.scene_id] = {str(sh.frame_start): original[sh.frame_start] for sh in cleaned.shots}
    if not scenes:
        raise DataFormatError(f"no usable scenes in {bdir}")
    assignment = split_scenes(list(scenes), args.ratios, args.seed)
    samples = []
    for sid in sorted(scenes):
        samples += make_sequences(scenes[sid], args.k, args.count, args.seed)
    samples = with_split(samples, assignment)

    header = {
        "seed": args.seed,
        "k": args.k,
        "ratios": list(args.ratios),
        "min_frames": args.min_frames,
        "max_black_fraction": args.max_black_fraction,
        "skipped_scenes": skipped,
        "shot_index": shot_index,
    }
    for key, value in (("frames_dir", args.frames_dir), ("labels", args.labels), ("meta", args.meta)):
        if value:
            header[key] = _rel(value, out.parent)
    write_manifest(samples, out, header)
    summary = {"seed": args.seed, "manifest": str(out), "skipped_scenes": len(skipped),
               "splits": _summary(samples, scenes)}
    Path(str(out) + ".summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_synth(args):
    from .dataforge.meta import LabelProvision, write_meta
    from .dataforge.records import write_shot_boundaries
    from .dataforge.sequences import make_sequences, split_scenes, with_split, write_manifest
    from .dataforge.synth import SynthParams, synth_scene

    params = SynthParams(**_synth_overrides(args))
    out = Path(args.out_dir) if args.out_dir else default_out_dir() / f"synth-{args.family}"
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "boundaries").mkdir(exist_ok=True)
    labels = LabelProvision(params.cardinalities, "ground_truth")
    metas, samples, shot_index = [], [], {}
    width = len(str(max(args.n - 1, 0)))
    scenes = {}
    for i in range(args.n):
        sid = f"{args.family}-{args.seed}-{i:0{width}d}"
        sc = synth_scene(args.family, params, seed=derive_synth_seed(args.seed, i), scene_id=sid)
        np.save(out / "frames" / f"{sid}.npy", sc.frames)
        write_shot_boundaries(sc.record, out / "boundaries" / f"{sid}.txt")
        for t, vecs in enumerate(sc.shot_labels):
            labels.set(sid, t, vecs)
        metas.append(sc.meta)
        shot_index[sid] = {str(sh.frame_start): t for t, sh in enumerate(sc.record.shots)}
        scenes[sid] = sc.record
        samples += make_sequences(sc.record, args.k, None, args.seed)
    samples = with_split(samples, split_scenes(list(scenes), args.ratios, args.seed))
    labels.write(out / "labels.csv")
    write_meta(metas, out / "meta.jsonl")
    header = {
        "seed": args.seed,
        "k": args.k,
        "ratios": list(args.ratios),
        "family": args.family,
        "synth_params": {**asdict(params), "cardinalities": list(params.cardinalities)},
        "frames_dir": "frames",
        "labels": "labels.csv",
        "meta": "meta.jsonl",
        "shot_index": shot_index,
    }
    write_manifest(samples, out / "manifest.jsonl", header)
    summary = {"seed": args.seed, "family": args.family, "out_dir": str(out), "splits": _summary(samples, scenes)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def derive_synth_seed(seed, index) -> int:
    from .dataforge.records import derive_seed

    return derive_seed("scene", seed, index)


def _synth_overrides(args) -> dict:
    names = ("min_shots", "max_shots", "min_shot_len", "max_shot_len", "frame_size", "num_genres",
             "pixel_noise", "label_noise", "level_low", "level_high")
    return {n: getattr(args, n) for n in names if getattr(args, n) is not None}


# -- train / eval --------------------------------------------------------

def _load_manifest(path):
    from .dataforge.sequences import read_manifest

    path = Path(path)
    if not path.exists():
        raise UsageError(f"manifest {path} does not exist")
    header, samples = read_manifest(path)
    if not samples:
        raise DataFormatError("manifest has no sequence records", path)
    return header, samples


def _resolve(header, key, override, base):
    if override:
        return Path(override)
    if key in header:
        return Path(base) / header[key]
    return None


def _bank(args, header, samples, model_config):
    from .dataforge.loader import SceneBank
    from .dataforge.meta import LabelProvision, read_meta

    base = Path(args.manifest).parent
    frames_dir = _resolve(header, "frames_dir", args.frames_dir, base)
    labels = meta = None
    if model_config.use_cinematology:
        lpath = _resolve(header, "labels", args.labels, base)
        mpath = _resolve(header, "meta", args.meta, base)
        if args.uniform_labels:
            labels = LabelProvision(model_config.category_cardinalities, "uniform")
        elif lpath is None:
            raise DataFormatError("cinematology needs a label file (--labels, --uniform-labels or --no-cinematology)")
        else:
            labels = LabelProvision.read(lpath)
        if mpath is None:
            raise DataFormatError("cinematology needs a metadata file (--meta or --no-cinematology)")
        meta = read_meta(mpath)
    return SceneBank.from_manifest(samples, base, labels, meta, frames_dir,
                                   primary_genre_only=args.primary_genre, shot_index=header.get("shot_index"))


def _label_cardinalities(args, header):
    from .dataforge.meta import LabelProvision

    lpath = _resolve(header, "labels", args.labels, Path(args.manifest).parent)
    if lpath is None or args.uniform_labels:
        return None
    return LabelProvision.read(lpath).cardinalities


def build_run_config(args, header) -> RunConfig:
    base = load_config_file(args.config) if args.config else {}
    cfg = RunConfig("train", **{k: v for k, v in base.items() if k != "command"})
    for name in ("seed", "epochs", "batch_size", "dtype"):
        value = getattr(args, name, None)
        if value is not None:
            cfg = replace(cfg, **{name: value})
    model, loss, optim = dict(cfg.model), dict(cfg.loss), dict(cfg.optim)
    model.setdefault("k", int(header.get("k", 3)))
    model.setdefault("seed", cfg.seed)
    if args.segments is not None:
        model["segments_per_shot"] = args.segments
    if args.no_cinematology:
        model["use_cinematology"] = False
    if args.init_std is not None:
        model["init_std"] = args.init_std
    for name, value in (("alpha", args.alpha), ("beta", args.beta), ("mode", args.mode),
                        ("index_order", args.index_order)):
        if value is not None:
            loss[name] = value
    if args.lr is not None:
        optim["lr"] = args.lr
    sets = _parse_set(args.set)
    model.update(sets.get("model", {}))
    loss.update(sets.get("loss", {}))
    optim.update(sets.get("optim", {}))
    if "category_cardinalities" not in model:
        cards = _label_cardinalities(args, header)
        if cards is not None:
            model["category_cardinalities"] = list(cards)
    paths = {"manifest": str(args.manifest), "out": str(args.out)}
    return replace(cfg, model=model, loss=loss, optim=optim, paths=paths)


def cmd_train(args):
    import torch

    from .errors import TrainingError
    from .nn.config import ModelConfig
    from .nn.train import OptimConfig, TrainState, fit, load_checkpoint, save_checkpoint

    header, samples = _load_manifest(args.manifest)
    out = Path(args.out) if args.out else default_out_dir() / "model.npz"
    args.out = out
    log_path = Path(args.log) if args.log else out.with_name(out.stem + ".log.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        run = build_run_config(args, header)
        unknown = set(run.model) - {f.name for f in fields(ModelConfig)}
        if unknown:
            raise UsageError(f"unknown model settings {sorted(unknown)}")
        model_config = ModelConfig.from_dict(run.model)
        loss_config = LossConfig(**run.loss)
        optim_config = OptimConfig(**run.optim)
    except TypeError as e:
        raise UsageError(f"bad configuration: {e}") from None
    run = replace(run, model=model_config.to_dict(), loss=asdict(loss_config), optim=asdict(optim_config))
    if model_config.k != int(header.get("k", model_config.k)):
        raise ContractError(f"model k={model_config.k} but manifest k={header['k']}")
    train = [s for s in samples if s.split == "train"]
    val = [s for s in samples if s.split == "val"]
    if not train and run.epochs > 0:
        raise DataFormatError("manifest has no training sequences", args.manifest)
    bank = _bank(args, header, samples, model_config)

    torch.manual_seed(run.seed)
    if args.resume and out.exists():
        state = load_checkpoint(out)
        log_mode = "a"
    else:
        state = TrainState.create(model_config, loss_config, optim_config, dtype=getattr(torch, run.dtype))
        save_checkpoint(state, out, extra={"seed": run.seed, "run": run.snapshot()})
        log_mode = "w"
    with open(log_path, log_mode) as log:
        if log_mode == "w":
            log.write(_dumps({"kind": "header", "seed": run.seed, "config": run.snapshot()}) + "\n")

        def emit(rec):
            log.write(_dumps(rec) + "\n")
            log.flush()

        try:
            # checkpoints after every epoch, so a divergence leaves the last good one on disk
            fit(state, train, bank, run.epochs, run.batch_size, run.seed, val, emit, out,
                checkpoint_extra={"run": run.snapshot()})
        except TrainingError as e:
            emit({"kind": "error", "message": str(e), "step": e.step})
            raise
    print(_dumps({"seed": run.seed, "checkpoint": str(out), "log": str(log_path), "epochs": state.epoch}))
    return 0


def cmd_eval(args):
    from .nn.train import evaluate, load_checkpoint, read_checkpoint_header

    header, samples = _load_manifest(args.manifest)
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint {args.checkpoint} does not exist")
    ck = read_checkpoint_header(args.checkpoint)
    state = load_checkpoint(args.checkpoint)
    config = state.model.config
    if "k" in header and int(header["k"]) != config.k:
        raise DataFormatError(f"checkpoint is for k={config.k}, manifest has k={header['k']}", args.checkpoint)
    chosen = [s for s in samples if s.split == args.split]
    if not chosen:
        raise DataFormatError(f"manifest has no {args.split} sequences", args.manifest)
    if any(s.k != config.k for s in chosen):
        raise DataFormatError("sequence length does not match the checkpoint", args.manifest)
    bank = _bank(args, header, chosen, config)
    seed = args.seed if args.seed is not None else ck.get("extra", {}).get("seed", 0)
    report = evaluate(state.model, chosen, bank, seed, top_k=args.top_k)
    print(report.to_json())
    out = Path(args.out) if args.out else default_out_dir() / "report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {"metrics": report.to_dict(), "seed": seed, "split": args.split,
           "checkpoint": str(args.checkpoint), "model_config": config.to_dict(), "n": len(chosen)}
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


# -- parser --------------------------------------------------------------

def _data_args(p):
    p.add_argument("--frames-dir", help="directory of <scene_id>.npy frame arrays")
    p.add_argument("--labels", help="shot label CSV (defaults to the manifest header)")
    p.add_argument("--meta", help="metadata JSONL (defaults to the manifest header)")
    p.add_argument("--uniform-labels", action="store_true", help="equal probability for every shot class")
    p.add_argument("--primary-genre", action="store_true", help="one-hot first genre instead of multi-hot")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shotorder", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-dataset", help="boundary files -> cleaned, shuffled, split manifest")
    p.add_argument("--boundaries", required=True, help="directory of <video_id>.txt boundary files")
    p.add_argument("--frames-dir", help="pixels for the black-screen check")
    p.add_argument("--meta")
    p.add_argument("--labels")
    p.add_argument("--out", help="manifest path (default $SHOTORDER_OUT/manifest.jsonl)")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--count", type=int, help="sequences per scene (default: every window once)")
    p.add_argument("--ratios", type=_ratios, default=(0.7, 0.1, 0.2))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-frames", type=int, default=8)
    p.add_argument("--max-black-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--family", required=True, choices=("ramp", "grammar", "mixed"))
    p.add_argument("--n", type=int, required=True, help="number of scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--ratios", type=_ratios, default=(0.7, 0.1, 0.2))
    for name, typ in (("min_shots", int), ("max_shots", int), ("min_shot_len", int), ("max_shot_len", int),
                      ("frame_size", int), ("num_genres", int), ("pixel_noise", int), ("label_noise", float),
                      ("level_low", int), ("level_high", int)):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--out", help="checkpoint path (default $SHOTORDER_OUT/model.npz)")
    p.add_argument("--log", help="JSONL log path (default <out>.log.jsonl)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dtype", choices=("float32", "float64"))
    p.add_argument("--lr", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--mode", choices=("faithful", "soft"))
    p.add_argument("--index-order", choices=("pred_first", "truth_first"))
    p.add_argument("--segments", type=int)
    p.add_argument("--init-std", type=float)
    p.add_argument("--no-cinematology", action="store_true")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.add_argument("--resume", action="store_true", help="continue from --out if it exists")
    _data_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics for one manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", help="report path (default $SHOTORDER_OUT/report.json)")
    p.add_argument("--seed", type=int)
    p.add_argument("--top-k", type=int, default=3)
    _data_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ktd-matrix", help="pairwise Kendall tau distances as CSV")
    p.add_argument("--k", type=int, default=3)
    p.set_defaults(func=cmd_ktd_matrix)

    p = sub.add_parser("analyze", help="genre x shot-class frequency CSV")
    p.add_argument("--meta", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits on --help (0) and on usage errors (1 via _Parser)
        return e.code if isinstance(e.code, int) else 1
    try:
        return args.func(args)
    except ShotOrderError as e:
        print(f"shotorder {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except FloatingPointError as e:
        print(f"shotorder {args.command}: numeric error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
