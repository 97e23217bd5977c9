"""Command-line entry point: phantom, train, synth, eval, judge, pipeline,
ablate, serve, encode.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Every run
directory receives the fully resolved configuration as config.json.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path



class UsageError(ValueError):
    pass


def _parse_dims(value) -> tuple[int, int, int]:
    if isinstance(value, (list, tuple)):
        parts = [int(x) for x in value]
    else:
        parts = [int(x) for x in str(value).replace("x", ",").split(",") if x]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise UsageError(f"dims must be one or three integers, got {value!r}")
    return tuple(parts)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path} is not valid JSON: {e}")


def _resolve(args, config: dict, key: str, default=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _write_resolved_config(out_dir: Path, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True,
                                                    default=str) + "\n")


def _require_out(args, config) -> Path:
    out = _resolve(args, config, "out")
    if not out:
        raise UsageError("missing required output path (--out)")
    return Path(out)


def cmd_phantom(args, config) -> int:
    from .cohort import PhantomConfig, write_phantom_cohort

    out = _require_out(args, config)
    cfg = PhantomConfig(
        n_subjects=int(_resolve(args, config, "n", 60)),
        dims=_parse_dims(_resolve(args, config, "dims", 32)),
        seed=int(_resolve(args, config, "seed", 0)),
        noise_sigma=float(_resolve(args, config, "noise_sigma", 0.02)),
        missing_rate=float(_resolve(args, config, "missing_rate", 0.05)),
    )
    write_phantom_cohort(cfg, out)
    _write_resolved_config(out, {"command": "phantom", **cfg.__dict__})
    print(f"wrote phantom cohort ({cfg.n_subjects} subjects, dims {cfg.dims}) to {out}")
    return 0


def _train_cfg_from(args, config):
    from .training import TrainConfig

    base = TrainConfig()
    fields = {}
    for key in ("lr_g", "lr_d", "weight_decay", "beta1", "beta2", "cosine_period",
                "lr_min", "epochs", "batch_size", "lam", "init_std", "seed"):
        val = _resolve(args, config, key)
        if val is not None:
            fields[key] = type(getattr(base, key))(val)
    return replace(base, **fields)


def cmd_train(args, config) -> int:
    from .experiments import (DESK_TEXT_DIM, build_samples, load_cohort_dir, train_generator)
    from .models import DiscriminatorConfig, GeneratorConfig

    out = _require_out(args, config)
    cohort_dir = _resolve(args, config, "cohort")
    if not cohort_dir:
        raise UsageError("missing --cohort directory")
    mode = _resolve(args, config, "mode", "t1_bbm_llm")
    variant = _resolve(args, config, "variant", "summary_first")
    text_dim = int(_resolve(args, config, "text_dim", DESK_TEXT_DIM))
    cfg = _train_cfg_from(args, config)
    data = load_cohort_dir(cohort_dir)
    samples = build_samples(data, data.records, mode, text_dim, variant=variant)
    gen_cfg = GeneratorConfig(channels=(8, 16, 32), bottleneck=64, text_dim=text_dim)
    disc_cfg = DiscriminatorConfig(channels=(8, 16, 32, 64), text_dim=text_dim)
    _write_resolved_config(out, {"command": "train", "cohort": str(cohort_dir),
                                 "mode": mode, "variant": str(variant),
                                 "text_dim": text_dim, **cfg.__dict__})
    _, history = train_generator(samples, cfg, gen_cfg, disc_cfg, out_dir=out)
    print(f"trained {mode} generator for {cfg.epochs} epochs; "
          f"final loss_mse={history[-1]['loss_mse']:.5f}; checkpoints in {out}")
    return 0


def cmd_synth(args, config) -> int:
    from .diagnosis import predict_summary, train_clinical_mlp
    from .experiments import load_cohort_dir, text_feature_for
    from .models import generate, load_generator
    from .prompts import TextFeature
    from .volume import save_volume

    out = _require_out(args, config)
    cohort_dir = _resolve(args, config, "cohort")
    ckpt = _resolve(args, config, "checkpoint")
    if not cohort_dir:
        raise UsageError("missing --cohort directory")
    if not ckpt or not Path(ckpt).exists():
        raise UsageError(f"generator checkpoint not found: {ckpt}")
    mode = _resolve(args, config, "mode", "t1_bbm_llm")
    variant = _resolve(args, config, "variant", "summary_first")
    summary_source = _resolve(args, config, "summary_source", "predicted")
    data = load_cohort_dir(cohort_dir)
    g = load_generator(ckpt)
    text_dim = g.config.text_dim
    mlp = None
    if mode == "t1_bbm_llm" and summary_source == "predicted":
        labeled = [r for r in data.records if r.abeta_positive is not None]
        mlp = train_clinical_mlp(labeled, [r.abeta_positive for r in labeled])
    from .diagnosis import fit_clinical_stats

    stats = fit_clinical_stats(data.records) if mode == "t1_bbm_num" else None
    out.mkdir(parents=True, exist_ok=True)
    for rec in data.records:
        summary = None
        if mode == "t1_bbm_llm":
            summary = (predict_summary(mlp, rec) if mlp is not None
                       else ("positive" if rec.abeta_positive else "negative"))
        vec = text_feature_for(rec, mode, text_dim, variant=variant,
                               clinical_stats=stats, summary=summary)
        feat = TextFeature(values=vec, encoder_id="cli", prompt_hash="")
        syn = generate(data.t1[rec.id], feat, g)
        save_volume(syn, out / f"{rec.id}_synpet.nii")
    _write_resolved_config(out, {"command": "synth", "cohort": str(cohort_dir),
                                 "checkpoint": str(ckpt), "mode": mode,
                                 "variant": str(variant), "summary_source": summary_source})
    print(f"synthesized {len(data.records)} volumes into {out}")
    return 0


def cmd_eval(args, config) -> int:
    from .experiments import evaluate_synthesis, load_cohort_dir
    from .metrics import emit_report, regional_abs_error, regional_profile
    from .volume import VolumeKind, load_volume

    out = _require_out(args, config)
    cohort_dir = _resolve(args, config, "cohort")
    syn_dir = _resolve(args, config, "synthetic")
    if not cohort_dir or not syn_dir:
        raise UsageError("eval requires --cohort and --synthetic directories")
    data = load_cohort_dir(cohort_dir)
    synthetic = {}
    for rec in data.records:
        path = Path(syn_dir) / f"{rec.id}_synpet.nii"
        if not path.exists():
            raise UsageError(f"missing synthetic volume for {rec.id}: {path}")
        synthetic[rec.id] = load_volume(path, kind=VolumeKind.PET_SUVR)
    ev = evaluate_synthesis(data, synthetic)
    profiles_syn = [regional_profile(synthetic[r.id], data.atlas, r.id) for r in data.records]
    profiles_real = [regional_profile(data.pet[r.id], data.atlas, r.id) for r in data.records]
    bundle = {
        "image_quality": ev["per_subject"],
        "regional": regional_abs_error(profiles_syn, profiles_real),
    }
    emit_report(bundle, out)
    _write_resolved_config(out, {"command": "eval", "cohort": str(cohort_dir),
                                 "synthetic": str(syn_dir)})
    print(f"mean SSIM {ev['mean_ssim']:.4f}, mean MSE {ev['mean_mse']:.6f}, "
          f"mean regional R {ev['mean_regional_pearson']:.4f}; report in {out}")
    return 0


def cmd_judge(args, config) -> int:
    from .cohort import split_stratified
    from .diagnosis import JudgeConfig, predict_judge, train_judge
    from .experiments import load_cohort_dir
    from .metrics import classification_metrics

    out = _require_out(args, config)
    cohort_dir = _resolve(args, config, "cohort")
    if not cohort_dir:
        raise UsageError("missing --cohort directory")
    seed = int(_resolve(args, config, "seed", 0))
    epochs = int(_resolve(args, config, "epochs", 30))
    data = load_cohort_dir(cohort_dir)
    folds = split_stratified(data.records, k_folds=4, seed=seed)
    train_recs = [r for r, f in zip(data.records, folds) if f != 0]
    val_recs = [r for r, f in zip(data.records, folds) if f == 0]
    cfg = JudgeConfig(epochs=epochs, seed=seed)
    model = train_judge([data.pet[r.id].data for r in train_recs],
                        [r.abeta_positive for r in train_recs], cfg)
    scores = [predict_judge(model, data.pet[r.id])[0] for r in val_recs]
    metrics = classification_metrics(scores, [r.abeta_positive for r in val_recs])
    out.mkdir(parents=True, exist_ok=True)
    from .models import save_checkpoint

    save_checkpoint(out / "judge.pt", model, "judge")
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _write_resolved_config(out, {"command": "judge", "cohort": str(cohort_dir),
                                 "seed": seed, "epochs": epochs})
    print(f"judge validation metrics: {metrics}")
    return 0


def cmd_pipeline(args, config) -> int:
    from .diagnosis import JudgeConfig, full_pipeline, train_clinical_mlp, train_judge
    from .experiments import (DESK_TEXT_DIM, build_samples, load_cohort_dir, synthesize)
    from .models import load_generator
    from .prompts import FallbackEncoder

    out = _require_out(args, config)
    cohort_dir = _resolve(args, config, "cohort")
    ckpt = _resolve(args, config, "generator")
    if not cohort_dir:
        raise UsageError("missing --cohort directory")
    if not ckpt or not Path(ckpt).exists():
        raise UsageError(f"generator checkpoint not found: {ckpt}")
    seed = int(_resolve(args, config, "seed", 0))
    data = load_cohort_dir(cohort_dir)
    g = load_generator(ckpt)
    text_dim = g.config.text_dim
    labeled = [r for r in data.records if r.abeta_positive is not None]
    mlp = train_clinical_mlp(labeled, [r.abeta_positive for r in labeled], seed=seed)
    samples = build_samples(data, labeled, "t1_bbm_llm", text_dim)
    syn = synthesize(g, data, samples)
    classifier = train_judge([syn[r.id].data for r in labeled],
                             [r.abeta_positive for r in labeled],
                             JudgeConfig(epochs=int(_resolve(args, config, "epochs", 30)),
                                         seed=seed))
    encoder = FallbackEncoder(dim=text_dim)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for rec in data.records:
        res = full_pipeline(data.t1[rec.id], rec, generator=g, encoder=encoder,
                            clinical_mlp=mlp, classifier=classifier)
        results.append({"id": res["id"], "probability": res["probability"],
                        "positive": res["positive"], "summary": res["summary"],
                        "stage_timings": res["stage_timings"]})
    (out / "pipeline.json").write_text(json.dumps(results, indent=2) + "\n")
    _write_resolved_config(out, {"command": "pipeline", "cohort": str(cohort_dir),
                                 "generator": str(ckpt), "seed": seed})
    print(f"ran full pipeline on {len(results)} subjects; results in {out}")
    return 0


def cmd_ablate(args, config) -> int:
    import csv

    from dataclasses import replace

    from .experiments import COMPARISON_CFG, load_cohort_dir, run_prompt_ablation

    out = _require_out(args, config)
    cohort_dir = _resolve(args, config, "cohort")
    if not cohort_dir:
        raise UsageError("missing --cohort directory")
    seed = int(_resolve(args, config, "seed", 0))
    epochs = int(_resolve(args, config, "epochs", COMPARISON_CFG.epochs))
    data = load_cohort_dir(cohort_dir)
    result = run_prompt_ablation(data, seed,
                                 replace(COMPARISON_CFG, epochs=epochs,
                                         cosine_period=epochs, seed=seed))
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    with (out / "ablation.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "mean_regional_pearson", "mean_ssim", "mean_psnr",
                    "mean_mse", "consistency_kappa", "consistency_accuracy"])
        for variant, row in result["variants"].items():
            w.writerow([variant, row["mean_regional_pearson"], row["mean_ssim"],
                        row["mean_psnr"], row["mean_mse"], row["consistency_kappa"],
                        row["consistency_accuracy"]])
    _write_resolved_config(out, {"command": "ablate", "cohort": str(cohort_dir),
                                 "seed": seed, "epochs": epochs})
    for variant, row in result["variants"].items():
        print(f"{variant:18s} regional R {row['mean_regional_pearson']:.4f} "
              f"SSIM {row['mean_ssim']:.4f}")
    return 0


def cmd_serve(args, config) -> int:
    import uvicorn

    from .reader_service import create_app, load_case_manifest

    manifest = _resolve(args, config, "cases")
    if not manifest or not Path(manifest).exists():
        raise UsageError(f"case manifest not found: {manifest}")
    cases = load_case_manifest(manifest)
    log_dir = _resolve(args, config, "log_dir", Path(manifest).parent / "session_logs")
    app = create_app(cases, log_dir)
    static_dir = _resolve(args, config, "static")
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")
    host = _resolve(args, config, "host", "127.0.0.1")
    port = int(_resolve(args, config, "port", 8080))
    print(f"serving {len(cases)} cases on {host}:{port}\n"
          "endpoints: GET /sessions, POST /sessions, GET /sessions/{id}/next, "
          "GET /cases/{id}/slice, POST /judgments, POST /arbitrations, "
          "GET /sessions/{id}/report")
    uvicorn.run(app, host=host, port=port)
    return 0


def cmd_encode(args, config) -> int:
    from .prompts import FallbackEncoder

    prompt_file = _resolve(args, config, "prompt_file")
    cache = _resolve(args, config, "cache")
    if not prompt_file or not Path(prompt_file).exists():
        raise UsageError(f"prompt file not found: {prompt_file}")
    if not cache:
        raise UsageError("missing --cache path")
    dim = int(_resolve(args, config, "text_dim", 768))
    encoder = FallbackEncoder(dim=dim)
    import hashlib

    n = 0
    with Path(cache).open("a") as f:
        for line in Path(prompt_file).read_text().splitlines():
            if not line.strip():
                continue
            vec = encoder.encode(line)
            f.write(json.dumps({
                "prompt_hash": hashlib.sha256(line.encode("utf-8")).hexdigest(),
                "encoder_id": encoder.encoder_id,
                "vector": [float(x) for x in vec],
            }) + "\n")
            n += 1
    print(f"encoded {n} prompts into {cache}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="petsynth",
                                     description="language-conditioned PET synthesis toolkit")
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **flags):
        p = sub.add_parser(name)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--dims")
        for flag, kwargs in flags.items():
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, **kwargs)
        return p

    add("phantom", n={"type": int}, noise_sigma={"type": float}, missing_rate={"type": float})
    add("train", cohort={}, mode={"choices": ["t1_only", "t1_bbm_num", "t1_bbm_llm"]},
        variant={}, epochs={"type": int}, batch_size={"type": int}, text_dim={"type": int},
        lr_g={"type": float}, lr_d={"type": float}, lam={"type": float})
    add("synth", cohort={}, checkpoint={}, mode={}, variant={},
        summary_source={"choices": ["predicted", "label"]})
    add("eval", cohort={}, synthetic={})
    add("judge", cohort={}, epochs={"type": int})
    add("pipeline", cohort={}, generator={}, epochs={"type": int})
    add("ablate", cohort={}, epochs={"type": int})
    add("serve", cases={}, port={"type": int}, host={}, log_dir={}, static={})
    add("encode", prompt_file={}, cache={}, text_dim={"type": int})
    return parser


_COMMANDS = {
    "phantom": cmd_phantom, "train": cmd_train, "synth": cmd_synth, "eval": cmd_eval,
    "judge": cmd_judge, "pipeline": cmd_pipeline, "ablate": cmd_ablate,
    "serve": cmd_serve, "encode": cmd_encode,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
