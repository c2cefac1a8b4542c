"""Operator surface: gen, pretrain, finetune, eval, ablate, report.

Config files are flat ``key = value`` text. Keys carry a section prefix
(``gen.``, ``model.``, ``tokens.``, ``train.``, ``eval.``, ``ablate.``);
values are JSON literals with a bare-word fallback, so ``train.base_lr =
1e-3``, ``ablate.seeds = [0, 1, 2]``, and ``gen.with_teacher = true`` all
parse. ``--set key=value`` flags override file entries; dedicated flags
(eval) override both.

Exit codes: 0 success, 2 configuration or contract violation, 3 missing or
unreadable data, 4 numeric failure. Every run writes a manifest whose hash
covers command, resolved config, input content hashes, seed, and version;
artifacts embed that hash (checkpoints in their metadata, JSON reports as a
key, CSV/text as a footer line) or are referenced by the manifest's per-file
hash table (clip files, whose format has no room for annotations).

``LART_THREADS`` caps worker parallelism; output bytes never depend on it.
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

from .evaluation import InferenceConfig, ablation_suite, evaluate, standard_arms
from .scenegen import (AppearanceProviderSpec, GeneratorConfig,
                       apply_occlusions, generate_clip, synth_appearance,
                       teacher_pseudo_label, with_pseudo_labels)
from .seeds import substream
from .tokens import TokenConfig
from .tracklets import ClipFormatError, InvariantError, clip_to_text, load_clip
from .training import (TrainConfig, finetune, finetune_defaults, pretrain,
                       pretrain_defaults)
from .transformer import (CheckpointFormatError, ModelConfig, NumericError,
                          load_checkpoint, save_checkpoint)
from . import reports

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    """Bad config file, unknown key, invalid value, or contract mismatch."""


class DataError(ValueError):
    """Missing or unreadable input artifact."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def parse_value(s: str):
    try:
        return json.loads(s)
    except (json.JSONDecodeError, ValueError):
        return s  # bare words stay strings


def parse_kv_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{ln}: expected 'key = value', got {raw!r}")
        out[key] = parse_value(val.strip())
    return out


def load_config(path, set_flags) -> dict:
    cfg = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise DataError(f"config file not found: {p}")
        cfg = parse_kv_text(p.read_text(encoding="utf-8"), source=str(p))
    for entry in set_flags or []:
        key, sep, val = entry.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {entry!r}")
        cfg[key.strip()] = parse_value(val.strip())  # flag wins
    return cfg


def check_keys(cfg: dict, allowed_prefixes, extra_keys=()) -> None:
    for k in cfg:
        if k in extra_keys:
            continue
        head = k.split(".", 1)[0]
        if "." not in k or head not in allowed_prefixes:
            raise ConfigError(f"unknown config key '{k}'")


def build_section(cls, prefix: str, cfg: dict, defaults: dict = None):
    """Construct a config dataclass from ``prefix.*`` keys over defaults."""
    names = {f.name for f in fields(cls)}
    kw = dict(defaults) if defaults else {}
    for k, v in cfg.items():
        if not k.startswith(prefix + "."):
            continue
        name = k[len(prefix) + 1:]
        if name not in names:
            raise ConfigError(f"unknown config key '{k}'")
        kw[name] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad {prefix} config: {e}") from e


def build_model_and_tokens(cfg: dict):
    mcfg = build_section(ModelConfig, "model", cfg)
    tdef = dict(d_model=mcfg.d_model, pose_embed=mcfg.d_model)
    tcfg = build_section(TokenConfig, "tokens", cfg, defaults=tdef)
    if tcfg.d_model != mcfg.d_model:
        raise ConfigError("tokens.d_model must equal model.d_model")
    return mcfg, tcfg


# ---------------------------------------------------------------------------
# manifests and artifact plumbing
# ---------------------------------------------------------------------------


def _version() -> str:
    global _VERSION_CACHE
    if _VERSION_CACHE is None:
        try:
            from importlib.metadata import version

            v = version("lart")
        except Exception:
            v = "0"
        git = ""
        try:
            r = subprocess.run(
                ["git", "rev-parse", "--short", "HEAD"],
                cwd=Path(__file__).resolve().parent, capture_output=True,
                text=True, timeout=10,
            )
            git = r.stdout.strip() if r.returncode == 0 else ""
        except Exception:
            pass
        _VERSION_CACHE = f"lart {v}" + (f" ({git})" if git else "")
    return _VERSION_CACHE


_VERSION_CACHE = None


def _strip_paths(obj):
    if isinstance(obj, dict):
        return {k: _strip_paths(v) for k, v in obj.items() if k != "path"}
    return obj


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    inputs: dict        # content hashes (plus paths, excluded from the hash)
    seed: object        # int, or list of ints for ablate
    version: str = field(default_factory=_version)
    started_at: str = ""
    finished_at: str = ""

    @property
    def manifest_hash(self) -> str:
        basis = {
            "command": self.command,
            "config": self.config,
            "inputs": _strip_paths(self.inputs),
            "seed": self.seed,
            "version": self.version,
        }
        blob = json.dumps(basis, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        d = asdict(self)
        d["manifest_hash"] = self.manifest_hash
        return json.dumps(d, sort_keys=True, indent=1)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _csv_with_hash(text: str, h: str) -> str:
    return text + f"# manifest {h}\n"


def _text_with_hash(text: str, h: str) -> str:
    return text + f"manifest: {h}\n"


def _json_with_hash(json_text: str, h: str) -> str:
    d = json.loads(json_text)
    d["manifest_hash"] = h
    return json.dumps(d, sort_keys=True, indent=1)


def _finish_manifest(man: RunManifest, started: str, out_dir: Path) -> str:
    man.started_at = started
    man.finished_at = _now()
    _write_text(out_dir / "manifest.json", man.to_json())
    return man.manifest_hash


def _threads() -> int:
    raw = os.environ.get("LART_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LART_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("LART_THREADS must be >= 1")
    return n


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_dataset(dir_path):
    p = Path(dir_path)
    if not p.is_dir():
        raise DataError(f"dataset directory not found: {p}")
    paths = sorted(p.glob("*.clip"))
    if not paths:
        raise DataError(f"no clip files (*.clip) in {p}")
    clips = [load_clip(fp) for fp in paths]
    catalog = clips[0].class_catalog
    for c, fp in zip(clips, paths):
        if c.class_catalog != catalog:
            raise DataError(f"{fp} disagrees with the dataset's class catalog")
    return clips, paths


def _check_classes(mcfg: ModelConfig, clips) -> None:
    k = len(clips[0].class_catalog)
    if mcfg.n_classes != k:
        raise ConfigError(f"model.n_classes is {mcfg.n_classes} but the "
                          f"dataset catalog has {k} classes")


def _dataset_input(dir_path, paths) -> dict:
    hashes = [_sha256_file(fp) for fp in paths]
    agg = hashlib.sha256("".join(hashes).encode()).hexdigest()[:16]
    return {"path": str(dir_path), "n_files": len(paths), "hash": agg}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> None:
    started = _now()
    cfg = load_config(args.config, args.set)
    check_keys(cfg, {"gen"})
    n_clips = cfg.pop("gen.n_clips", 10)
    if not isinstance(n_clips, int) or n_clips < 1:
        raise ConfigError("gen.n_clips must be a positive integer")
    gcfg = build_section(GeneratorConfig, "gen", cfg)
    out = _out_dir(args.out)

    # mirror of generate_dataset's per-clip pipeline, kept separable so the
    # worker pool can run clips independently with identical bytes
    provider = AppearanceProviderSpec(
        seed=int(substream(gcfg.seed, "appearance-provider").integers(0, 2**63 - 1)),
        half_window=max(1, gcfg.fps // 2),
    )

    def one(i: int):
        c = generate_clip(gcfg, i)
        if gcfg.with_appearance:
            c = synth_appearance(c, provider, gcfg)
        if gcfg.with_teacher:
            c = with_pseudo_labels(
                c, teacher_pseudo_label(c, gcfg.teacher_flip_p, gcfg.seed))
        if gcfg.occlusion_rate > 0:
            c = apply_occlusions(c, gcfg, gcfg.seed)
        return i, clip_to_text(c)

    workers = min(_threads(), n_clips)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rendered = list(ex.map(one, range(n_clips)))
    else:
        rendered = [one(i) for i in range(n_clips)]

    files = {}
    for i, text in rendered:
        name = f"clip_{i:05d}.clip"
        _write_text(out / name, text)
        files[name] = hashlib.sha256(text.encode()).hexdigest()

    man = RunManifest(
        command="gen",
        argv=list(args.argv),
        config={"gen": asdict(gcfg), "n_clips": n_clips},
        inputs={"files": files},
        seed=gcfg.seed,
    )
    _finish_manifest(man, started, out)
    print(f"wrote {n_clips} clips to {out} (manifest {man.manifest_hash})")


def _train_artifacts(out: Path, params, mcfg, tcfg, report, man, started):
    h = _finish_manifest(man, started, out)
    save_checkpoint(out / "checkpoint.ckpt", params, mcfg, tcfg, extra={
        "stage": report.stage,
        "seed": report.seed,
        "config_hash": report.config_hash,
        "epochs": len(report.epoch_losses),
        "final_loss": report.epoch_losses[-1] if report.epoch_losses else None,
        "manifest_hash": h,
    })
    _write_text(out / "train_report.json", _json_with_hash(report.to_json(), h))
    _write_text(out / "train_report.csv", _csv_with_hash(report.to_csv(), h))
    loss = report.epoch_losses[-1] if report.epoch_losses else float("nan")
    print(f"{report.stage}: {len(report.epoch_losses)} epochs, "
          f"final loss {loss:.6g}, checkpoint {out / 'checkpoint.ckpt'} "
          f"(manifest {h})")


def cmd_pretrain(args) -> None:
    started = _now()
    cfg = load_config(args.config, args.set)
    check_keys(cfg, {"model", "tokens", "train"})
    mcfg, tcfg = build_model_and_tokens(cfg)
    tr = build_section(TrainConfig, "train", cfg,
                       defaults=asdict(pretrain_defaults()))
    clips, paths = _load_dataset(args.data)
    _check_classes(mcfg, clips)
    for c in clips:
        if c.pseudo_labels is None:
            raise DataError(
                f"clip {c.clip_id} lacks pseudo labels; pretraining needs a "
                "dataset generated with gen.with_teacher = true")
    out = _out_dir(args.out)
    params, report = pretrain(clips, mcfg, tcfg, tr)
    man = RunManifest(
        command="pretrain",
        argv=list(args.argv),
        config={"model": asdict(mcfg), "tokens": asdict(tcfg),
                "train": asdict(tr)},
        inputs={"dataset": _dataset_input(args.data, paths)},
        seed=tr.seed,
    )
    _train_artifacts(out, params, mcfg, tcfg, report, man, started)


def cmd_finetune(args) -> None:
    started = _now()
    cfg = load_config(args.config, args.set)
    check_keys(cfg, {"model", "tokens", "train"})
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise DataError(f"checkpoint not found: {ckpt}; run pretrain first "
                        "or point --checkpoint at an existing lart-ckpt/1 file")
    expect_m = expect_t = None
    if any(k.startswith(("model.", "tokens.")) for k in cfg):
        expect_m, expect_t = build_model_and_tokens(cfg)
    tr = build_section(TrainConfig, "train", cfg,
                       defaults=asdict(finetune_defaults()))
    clips, paths = _load_dataset(args.data)
    _check_classes(load_checkpoint(ckpt)[1], clips)
    out = _out_dir(args.out)
    params, report, mcfg, tcfg = finetune(ckpt, clips, tr,
                                          expect_model=expect_m,
                                          expect_tokens=expect_t)
    man = RunManifest(
        command="finetune",
        argv=list(args.argv),
        config={"model": asdict(mcfg), "tokens": asdict(tcfg),
                "train": asdict(tr)},
        inputs={"dataset": _dataset_input(args.data, paths),
                "checkpoint": {"path": str(ckpt), "hash": _sha256_file(ckpt)}},
        seed=tr.seed,
    )
    _train_artifacts(out, params, mcfg, tcfg, report, man, started)


def _resolve(flag_value, cfg, key, fallback):
    if flag_value is not None:
        return flag_value  # dedicated flag wins over config file
    return cfg.get(key, fallback)


def cmd_eval(args) -> None:
    started = _now()
    cfg = load_config(args.config, args.set)
    check_keys(cfg, {"eval"})
    icfg_kw = dict(
        n_tracks=_resolve(args.n_tracks, cfg, "eval.n_tracks", 5),
        pooling_width=_resolve(args.pooling, cfg, "eval.pooling_width", 12),
        anchor_hz=_resolve(args.anchor_hz, cfg, "eval.anchor_hz", 1.0),
        seed=_resolve(args.seed, cfg, "eval.seed", 0),
    )
    iou = _resolve(args.iou, cfg, "eval.iou_threshold", 0.5)
    pr = bool(args.pr_points or cfg.get("eval.pr_points", False))
    for k in cfg:
        if k.split(".", 1)[1] not in {"n_tracks", "pooling_width", "anchor_hz",
                                      "seed", "iou_threshold", "pr_points"}:
            raise ConfigError(f"unknown config key '{k}'")
    try:
        icfg = InferenceConfig(**icfg_kw)
    except ValueError as e:
        raise ConfigError(f"bad eval config: {e}") from e

    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise DataError(f"checkpoint not found: {ckpt}")
    params, mcfg, tcfg, _ = load_checkpoint(ckpt)
    clips, paths = _load_dataset(args.data)
    _check_classes(mcfg, clips)
    out = _out_dir(args.out)
    result = evaluate(clips, params, mcfg, tcfg, icfg, iou_threshold=iou,
                      want_pr_points=pr)
    man = RunManifest(
        command="eval",
        argv=list(args.argv),
        config={"eval": {**icfg_kw, "iou_threshold": iou, "pr_points": pr},
                "model": asdict(mcfg), "tokens": asdict(tcfg)},
        inputs={"dataset": _dataset_input(args.data, paths),
                "checkpoint": {"path": str(ckpt), "hash": _sha256_file(ckpt)}},
        seed=icfg.seed,
    )
    h = _finish_manifest(man, started, out)
    _write_text(out / "eval.csv", _csv_with_hash(result.to_csv(), h))
    _write_text(out / "eval.txt", _text_with_hash(result.to_text(), h))
    _write_text(out / "eval.json", _json_with_hash(result.to_json(), h))
    m = result.map
    print(f"mAP {'undef' if m is None else format(m, '.4f')} over "
          f"{len(clips)} clips -> {out} (manifest {h})")


def cmd_ablate(args) -> None:
    started = _now()
    cfg = load_config(args.config, args.set)
    check_keys(cfg, {"model", "tokens", "train", "ablate"})
    mcfg = build_section(ModelConfig, "model", cfg)
    # single-stage recipe on ground truth; plain knobs unless overridden
    tr = build_section(
        TrainConfig, "train", cfg,
        defaults=asdict(TrainConfig(mask_ratio=0.0, layer_wise_decay=None,
                                    drop_path=0.0)))
    seeds = cfg.get("ablate.seeds", [0, 1, 2])
    if isinstance(seeds, int):
        seeds = [seeds]
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) for s in seeds)):
        raise ConfigError("ablate.seeds must be a non-empty list of integers")
    frac = cfg.get("ablate.eval_fraction", 0.25)
    if not (0.0 < frac < 1.0):
        raise ConfigError("ablate.eval_fraction must lie in (0, 1)")
    n_tracks = cfg.get("ablate.n_tracks", 3)
    pose_n = cfg.get("ablate.pose_n", [1, 2, 3, 4, 5])
    known = {"ablate.seeds", "ablate.eval_fraction", "ablate.n_tracks",
             "ablate.pose_n", "ablate.arms"}
    for k in cfg:
        if k.startswith("ablate.") and k not in known:
            raise ConfigError(f"unknown config key '{k}'")

    available = {a.name: a for a in standard_arms(mcfg.d_model, n_tracks,
                                                  tuple(pose_n))}
    names = cfg.get("ablate.arms", list(available))
    arms = []
    for name in names:
        if name not in available:
            raise ConfigError(f"unknown ablation arm '{name}'; available: "
                              + ", ".join(available))
        arms.append(available[name])

    clips, paths = _load_dataset(args.data)
    _check_classes(mcfg, clips)
    n_eval = max(1, round(frac * len(clips)))
    if n_eval >= len(clips):
        raise DataError(f"dataset of {len(clips)} clips leaves no training "
                        f"split at eval_fraction {frac}")
    train_clips, eval_clips = clips[:-n_eval], clips[-n_eval:]
    out = _out_dir(args.out)
    report = ablation_suite(train_clips, eval_clips, mcfg, tr, seeds, arms=arms)
    man = RunManifest(
        command="ablate",
        argv=list(args.argv),
        config={"model": asdict(mcfg), "train": asdict(tr),
                "ablate": {"seeds": seeds, "eval_fraction": frac,
                           "n_tracks": n_tracks, "pose_n": list(pose_n),
                           "arms": [a.name for a in arms]}},
        inputs={"dataset": _dataset_input(args.data, paths)},
        seed=seeds,
    )
    h = _finish_manifest(man, started, out)
    _write_text(out / "ablation.csv", _csv_with_hash(report.to_csv(), h))
    _write_text(out / "ablation.txt", _text_with_hash(report.to_text(), h))
    _write_text(out / "ablation.json", _json_with_hash(report.to_json(), h))
    if len(arms) > 1:
        _write_text(out / "class_gains.csv",
                    _csv_with_hash(report.gains_csv(), h))
    print(f"{len(arms)} arms x {len(seeds)} seeds -> {out} (manifest {h})")


def cmd_report(args) -> None:
    started = _now()
    inputs = {name: Path(p) for name, p in
              (("train_report", args.train_report), ("eval", args.eval),
               ("ablation", args.ablation)) if p is not None}
    if not inputs:
        raise ConfigError("nothing to render; pass --train-report, --eval, "
                          "or --ablation")
    missing = [str(p) for p in inputs.values() if not p.is_file()]
    if missing:
        raise DataError("missing input files: " + ", ".join(sorted(missing)))

    out = _out_dir(args.out)
    man = RunManifest(
        command="report",
        argv=list(args.argv),
        config={"inputs": sorted(inputs)},
        inputs={name: {"path": str(p), "hash": _sha256_file(p)}
                for name, p in inputs.items()},
        seed=0,
    )
    h = man.manifest_hash
    written = []
    try:
        if "train_report" in inputs:
            d = json.loads(inputs["train_report"].read_text())
            reports.plot_lr_schedule(d, out / "lr_schedule.png", manifest_hash=h)
            reports.plot_loss_curve(d, out / "loss_curve.png", manifest_hash=h)
            written += ["lr_schedule.png", "loss_curve.png"]
        if "eval" in inputs:
            d = json.loads(inputs["eval"].read_text())
            reports.plot_pr_curves(d, out / "pr_curves.png", manifest_hash=h)
            written.append("pr_curves.png")
        if "ablation" in inputs:
            d = json.loads(inputs["ablation"].read_text())
            reports.plot_ablation_bars(d, out / "ablation_bars.png",
                                       manifest_hash=h)
            written.append("ablation_bars.png")
    except (json.JSONDecodeError, KeyError, InvariantError) as e:
        raise DataError(f"input not renderable: {e}") from e
    _finish_manifest(man, started, out)
    print(f"rendered {', '.join(written)} -> {out} (manifest {h})")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lart",
        description="tracklet action recognition pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="flat key = value config file")
        sp.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config entry")

    g = sub.add_parser("gen", help="generate a synthetic clip dataset")
    common(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    pt = sub.add_parser("pretrain", help="stage one on pseudo labels")
    common(pt)
    pt.add_argument("--data", required=True)
    pt.add_argument("--out", required=True)
    pt.set_defaults(func=cmd_pretrain)

    ft = sub.add_parser("finetune", help="stage two on ground truth")
    common(ft)
    ft.add_argument("--data", required=True)
    ft.add_argument("--checkpoint", required=True)
    ft.add_argument("--out", required=True)
    ft.set_defaults(func=cmd_finetune)

    ev = sub.add_parser("eval", help="protocol scoring of a checkpoint")
    common(ev, config_required=False)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--n-tracks", type=int, default=None,
                    help="grid rows per inference window (default 5)")
    ev.add_argument("--pooling", type=int, default=None,
                    help="frames averaged per anchor (default 12)")
    ev.add_argument("--anchor-hz", type=float, default=None)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--iou", type=float, default=None)
    ev.add_argument("--pr-points", action="store_true",
                    help="dump PR curve points into eval.json")
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="train and score comparison arms")
    common(ab)
    ab.add_argument("--data", required=True)
    ab.add_argument("--out", required=True)
    ab.set_defaults(func=cmd_ablate)

    rp = sub.add_parser("report", help="render plots from prior outputs")
    rp.add_argument("--train-report", default=None)
    rp.add_argument("--eval", default=None)
    rp.add_argument("--ablation", default=None)
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        args.func(args)
        return EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ClipFormatError, CheckpointFormatError, FileNotFoundError,
            NotADirectoryError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvariantError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
