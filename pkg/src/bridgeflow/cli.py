"""Command-line pipeline: gen-data, fit-codec, train, forecast, metrics, sweep, verify.

Each command writes into ``<out>/<stage>/`` together with a manifest.json
holding the resolved config, its hash, the seed and library versions.
Upstream stages run on demand and are reused when their manifest's stage
key (a digest of the config sections they depend on) still matches.

Exit codes: 0 success, 1 invalid config, 2 runtime failure, 3 verify FAIL.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from bridgeflow import __version__, analysis, dynamics, metrics, sampler, tensorio, trainer
from bridgeflow import codec as codec_mod
from bridgeflow.config import ConfigError, ExperimentConfig, load
from bridgeflow.model import TimeEmbedding, VectorFieldModel

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

STAGE_SECTIONS = {
    "data": ("seed", "system"),
    "codec": ("seed", "system", "codec"),
    "train": ("seed", "system", "codec", "path", "model", "train"),
    "forecast": ("seed", "system", "codec", "path", "model", "train", "data", "sampler", "metrics"),
    "metrics": ("seed", "system", "codec", "path", "model", "train", "data", "sampler", "metrics"),
    "sweep": ("seed", "system", "codec", "path", "model", "train", "data", "sampler", "metrics", "sweep"),
    "verify": ("seed",),
}
NEEDS_FLOW = ("forecast", "metrics", "sweep")


# -- manifests ----------------------------------------------------------------

def versions() -> dict:
    return {
        "bridgeflow": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def stage_key(cfg: ExperimentConfig, stage: str) -> str:
    return cfg.section_digest(*STAGE_SECTIONS[stage])


def stage_dir(cfg: ExperimentConfig, stage: str) -> Path:
    return Path(cfg.out) / stage


def write_manifest(cfg: ExperimentConfig, stage: str, command: str) -> None:
    d = stage_dir(cfg, stage)
    files = {
        p.relative_to(d).as_posix(): zlib.crc32(p.read_bytes())
        for p in sorted(d.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }
    manifest = {
        "command": command,
        "stage": stage,
        "stage_key": stage_key(cfg, stage),
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "versions": versions(),
        "config": cfg.to_dict(),
        "files_crc32": files,
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def is_current(cfg: ExperimentConfig, stage: str) -> bool:
    path = stage_dir(cfg, stage) / "manifest.json"
    try:
        return json.loads(path.read_text()).get("stage_key") == stage_key(cfg, stage)
    except (FileNotFoundError, json.JSONDecodeError):
        return False


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# -- stages -------------------------------------------------------------------

def run_gen_data(cfg: ExperimentConfig, log) -> Path:
    d = stage_dir(cfg, "data")
    d.mkdir(parents=True, exist_ok=True)
    corpus = cfg.corpus()
    sysc = cfg.system
    trajs = dynamics.simulate_many(corpus.spec, cfg.seed, sysc.n_train + sysc.n_test, sysc.m, sysc.dt)
    states = np.stack([tr.states for tr in trajs])
    train, test = states[: sysc.n_train], states[sysc.n_train :]
    norm = dynamics.Normalizer.fit(train.reshape(-1, train.shape[-1]), corpus.spec.n_channels)
    tensorio.write(d / "train", train, "train_states")
    tensorio.write(d / "test", test, "test_states")
    tensorio.write(d / "times", trajs[0].times, "times")
    for name in ("mean", "std", "scale"):
        tensorio.write(d / f"norm_{name}", getattr(norm, name), f"normalizer_{name}")
    log(f"data: {len(train)} train / {len(test)} test trajectories of {sysc.m} states, d = {corpus.spec.dim}")
    return d


def load_data(cfg: ExperimentConfig):
    d = stage_dir(cfg, "data")
    norm = dynamics.Normalizer(*(tensorio.read(d / f"norm_{n}") for n in ("mean", "std", "scale")))
    return norm.normalize(tensorio.read(d / "train")), norm.normalize(tensorio.read(d / "test"))


def run_fit_codec(cfg: ExperimentConfig, log) -> Path:
    d = stage_dir(cfg, "codec")
    d.mkdir(parents=True, exist_ok=True)
    train, test = load_data(cfg)
    codec = codec_mod.fit(train.reshape(-1, train.shape[-1]), cfg.codec.p)
    tensorio.write(d / "basis", codec.basis, "codec_basis")
    tensorio.write(d / "mean", codec.mean, "codec_mean")
    tr_mse = codec_mod.reconstruction_mse(codec, train.reshape(-1, train.shape[-1]))
    te_mse = codec_mod.reconstruction_mse(codec, test.reshape(-1, test.shape[-1]))
    write_rows(d / "codec.csv", ["p", "train_mse", "test_mse"], [[codec.p, repr(tr_mse), repr(te_mse)]])
    log(f"codec: p = {codec.p}, reconstruction MSE train {tr_mse:.3g} / test {te_mse:.3g}")
    return d


def load_codec(cfg: ExperimentConfig) -> codec_mod.LinearCodec:
    d = stage_dir(cfg, "codec")
    return codec_mod.LinearCodec(tensorio.read(d / "basis"), tensorio.read(d / "mean"))


def save_model(model: VectorFieldModel, d: Path) -> None:
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "p": model.p,
        "activation": model.activation,
        "layers": len(model.weights),
        "t_embed": [model.t_embed.dim, model.t_embed.min_freq, model.t_embed.max_freq],
        "gap_embed": [model.gap_embed.dim, model.gap_embed.min_freq, model.gap_embed.max_freq],
    }
    (d / "model.json").write_text(json.dumps(meta, indent=2) + "\n")
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        tensorio.write(d / f"layer{i}_w", w, f"layer{i}_weight")
        tensorio.write(d / f"layer{i}_b", b, f"layer{i}_bias")


def load_model(d: Path) -> VectorFieldModel:
    meta = json.loads((d / "model.json").read_text())
    weights = tuple(tensorio.read(d / f"layer{i}_w") for i in range(meta["layers"]))
    biases = tuple(tensorio.read(d / f"layer{i}_b") for i in range(meta["layers"]))
    return VectorFieldModel(
        weights, biases, meta["p"], meta["activation"],
        TimeEmbedding(*meta["t_embed"]), TimeEmbedding(*meta["gap_embed"]),
    )


def _train_model(cfg: ExperimentConfig, d: Path, schedule, log) -> trainer.TrainTrace:
    train, _ = load_data(cfg)
    codec = load_codec(cfg)
    tcfg = cfg.train_config()
    m = cfg.model
    kwargs = {"width": m.width, "depth": m.depth, "activation": m.activation, "embed_dim": m.embed_dim}

    def checkpoint(i, model):
        save_model(model, d / "checkpoints" / f"iter{i:07d}")

    trace = trainer.train(tcfg, train, codec, schedule, model_kwargs=kwargs, on_checkpoint=checkpoint)
    save_model(trace.model, d / "model")
    trace.write_csv(d / "loss.csv")
    tail = np.mean(trace.losses[-100:]) if trace.losses else float("nan")
    log(f"train: {tcfg.iterations} iterations, mean loss over the last 100 = {tail:.4g}")
    return trace


def run_train(cfg: ExperimentConfig, log) -> Path:
    d = stage_dir(cfg, "train")
    d.mkdir(parents=True, exist_ok=True)
    _train_model(cfg, d, cfg.schedule(), log)
    return d


def _forecast(cfg, model, scfg, schedule):
    _, test = load_data(cfg)
    k, l = cfg.data.k, cfg.data.l
    return sampler.rollout_batch(
        model, load_codec(cfg), test[:, :k], l, scfg, schedule,
        truth=test[:, k : k + l], data_range=cfg.metrics.data_range, field_shape=_field_shape(cfg),
    )


def _field_shape(cfg: ExperimentConfig):
    spec = cfg.corpus().spec
    return spec.field_shape if spec.kind.startswith("heat") else None


def run_forecast(cfg: ExperimentConfig, log) -> Path:
    d = stage_dir(cfg, "forecast")
    d.mkdir(parents=True, exist_ok=True)
    model = load_model(stage_dir(cfg, "train") / "model")
    report = _forecast(cfg, model, cfg.sampler_config(), cfg.schedule())
    report.write_csv(d / "forecast.csv")
    tensorio.write(d / "ensemble", report.ensemble, "forecast_ensemble")
    log(f"forecast: horizon {report.horizon}, final-step RFNE {report.metrics['rfne'][-1]:.4g}")
    return d


def run_metrics(cfg: ExperimentConfig, log) -> Path:
    d = stage_dir(cfg, "metrics")
    d.mkdir(parents=True, exist_ok=True)
    _, test = load_data(cfg)
    k, l = cfg.data.k, cfg.data.l
    ens = tensorio.read(stage_dir(cfg, "forecast") / "ensemble")
    truth = test[:, k : k + l]
    shape = _field_shape(cfg)
    per_step = sampler.step_metrics(ens, truth, cfg.metrics.data_range, shape)
    ens_mean = {  # metrics of the pointwise ensemble mean
        name: float(np.mean(v))
        for name, v in sampler.step_metrics(ens.mean(axis=0)[None], truth, cfg.metrics.data_range, shape).items()
    }
    rows = [
        [name, repr(float(np.mean(per_step[name]))), repr(float(per_step[name][0])),
         repr(float(per_step[name][-1])), repr(float(ens_mean[name]))]
        for name in metrics.METRIC_NAMES
    ]
    write_rows(d / "metrics.csv", ["metric", "horizon_mean", "first_step", "last_step", "ensemble_mean"], rows)
    log("metrics: " + ", ".join(f"{r[0]} {float(r[1]):.4g}" for r in rows))
    return d


SWEEP_COLUMNS = ["sigma", "sampler", "steps", "mse", "rfne", "psnr", "ssim"]


def run_sweep(cfg: ExperimentConfig, log, jobs: int = 1) -> Path:
    d = stage_dir(cfg, "sweep")
    d.mkdir(parents=True, exist_ok=True)
    sw = cfg.sweep

    def one_sigma(sigma):
        path = {**cfg.path, "sigma": float(sigma)}
        sub = replace(cfg, path=path)
        schedule = sub.schedule()
        sd = d / f"sigma_{sigma!r}"
        sd.mkdir(parents=True, exist_ok=True)
        model = _train_model(sub, sd, schedule, lambda msg: None).model
        rows = []
        for scheme in sw.scheme:
            for steps in sw.steps:
                scfg = replace(cfg.sampler_config(), scheme=scheme, steps=int(steps), grid=None)
                rep = _forecast(sub, model, scfg, schedule)
                rows.append([repr(float(sigma)), scheme, int(steps)]
                            + [repr(float(np.mean(rep.metrics[n]))) for n in ("mse", "rfne", "psnr", "ssim")])
        return rows

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        parts = list(pool.map(one_sigma, sw.sigma))
    rows = [r for part in parts for r in part]
    write_rows(d / "sweep.csv", SWEEP_COLUMNS, rows)
    log(f"sweep: {len(rows)} cells written to {d / 'sweep.csv'}")
    return d


def run_verify(cfg: ExperimentConfig, log, jobs: int = 1) -> tuple[Path, bool]:
    d = stage_dir(cfg, "verify")
    d.mkdir(parents=True, exist_ok=True)
    results = analysis.verify_all(seed=cfg.seed, jobs=jobs)
    analysis.write_results_csv(results, d / "verify.csv")
    text = analysis.summary_text(results)
    (d / "summary.txt").write_text(text)
    log(text.rstrip())
    return d, not any(r.status == analysis.FAIL for r in results)


UPSTREAM = {
    "gen-data": [],
    "fit-codec": ["data"],
    "train": ["data", "codec"],
    "forecast": ["data", "codec", "train"],
    "metrics": ["data", "codec", "train", "forecast"],
    "sweep": ["data", "codec"],
    "verify": [],
}
RUNNERS = {
    "data": run_gen_data,
    "codec": run_fit_codec,
    "train": run_train,
    "forecast": run_forecast,
    "metrics": run_metrics,
}
COMMAND_STAGE = {
    "gen-data": "data",
    "fit-codec": "codec",
    "train": "train",
    "forecast": "forecast",
    "metrics": "metrics",
    "sweep": "sweep",
    "verify": "verify",
}


def execute(command: str, cfg: ExperimentConfig, *, jobs: int = 1, log=print) -> int:
    """Run ``command`` (and any stale upstream stages); return the exit code."""
    if command in NEEDS_FLOW and cfg.train["kind"] != "flow":
        raise ConfigError("train.kind", f"{command} integrates the learned field, so it needs kind = 'flow'")
    if command == "sweep" and cfg.path["kind"] != "bridge":
        raise ConfigError("path.kind", "the sigma sweep applies to the bridge path")
    for stage in UPSTREAM[command]:
        if not is_current(cfg, stage):
            RUNNERS[stage](cfg, log)
            write_manifest(cfg, stage, f"{command} (upstream)")
    stage = COMMAND_STAGE[command]
    if command == "sweep":
        run_sweep(cfg, log, jobs)
    elif command == "verify":
        _, ok = run_verify(cfg, log, jobs)
        write_manifest(cfg, stage, command)
        return EXIT_OK if ok else EXIT_VERIFY
    else:
        RUNNERS[stage](cfg, log)
    write_manifest(cfg, stage, command)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bridgeflow", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=list(COMMAND_STAGE))
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. --set path.sigma=0.1 (repeatable)")
    parser.add_argument("--seed", type=int, help="global seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap for verify and sweep")
    parser.add_argument("--out", help="output root (default: $BRIDGEFLOW_OUT or ./runs)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        cfg = load(args.config, args.set, seed=args.seed, out=args.out)
        return execute(args.command, cfg, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
