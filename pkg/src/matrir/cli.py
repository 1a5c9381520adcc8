"""Command-line interface: forge | train | eval | ablate | serve."""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

DATA_ROOT_ENV = "MATRIR_DATA_ROOT"


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".toml"):
        try:
            import tomllib  # py311+
        except ImportError:  # pragma: no cover
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _data_root(value):
    root = value or os.environ.get(DATA_ROOT_ENV, "")
    if not root:
        raise click.UsageError(
            f"dataset root required (--data or ${DATA_ROOT_ENV})"
        )
    return root


@click.group()
def main():
    """Material-conditioned RIR generation toolkit."""


@main.group()
def forge():
    """Dataset generation."""


@forge.command("build")
@click.option("--seed", default=0, type=int)
@click.option("--out", required=True, type=click.Path())
@click.option("--scenes", default="40,5", help="seen,unseen scene counts")
@click.option("--configs", default="120,20,20", help="seen,unseen,pairing counts")
@click.option("--split-sizes", default="8000,200,500",
              help="train,val,eval-per-split sample counts")
@click.option("--image-size", default=128, type=int)
@click.option("--val-scenes", default=2, type=int)
@click.option("--room-xy", default="2.4,9.0")
@click.option("--room-z", default="2.4,5.0")
def forge_build(seed, out, scenes, configs, split_sizes, image_size, val_scenes,
                room_xy, room_z):
    """Generate scenes, observations, RIRs and the split manifest."""
    from .dataset import DatasetConfig, build_dataset

    n_seen, n_unseen = (int(x) for x in scenes.split(","))
    c_seen, c_unseen, c_pair = (int(x) for x in configs.split(","))
    n_train, n_val, n_eval = (int(x) for x in split_sizes.split(","))
    cfg = DatasetConfig(
        out_dir=out,
        seed=seed,
        n_seen_scenes=n_seen,
        n_unseen_scenes=n_unseen,
        n_val_scenes=val_scenes,
        n_seen_configs=c_seen,
        n_unseen_configs=c_unseen,
        n_pairing_configs=c_pair,
        n_train=n_train,
        n_val_samples=n_val,
        n_eval_per_split=n_eval,
        image_size=image_size,
        room_xy_range=tuple(float(x) for x in room_xy.split(",")),
        room_z_range=tuple(float(x) for x in room_z.split(",")),
    )

    def progress(done, total):
        click.echo(f"  built {done}/{total} samples", err=True)

    man = build_dataset(cfg, progress=progress)
    counts = {k: len(v) for k, v in man.samples.items()}
    click.echo(json.dumps({"out": out, "samples": counts}, indent=1))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="TOML or JSON TrainConfig")
@click.option("--data", default="", help=f"dataset root (or ${DATA_ROOT_ENV})")
@click.option("--matcher", "matcher_path", default="", type=click.Path())
def train(config_path, data, matcher_path):
    """Train a model from a config file."""
    from .train import TrainConfig, run_training

    raw = _load_config_file(config_path)
    if data or DATA_ROOT_ENV in os.environ:
        raw.setdefault("dataset_root", _data_root(data))
    if matcher_path:
        raw["matcher_path"] = matcher_path
    cfg = TrainConfig(**raw)
    summary = run_training(cfg)
    click.echo(json.dumps(summary, indent=1, sort_keys=True))


@main.group("eval")
def eval_group():
    """Evaluation reports."""


@eval_group.command("run")
@click.option("--split", type=click.Choice(["us", "uu", "uk"]), required=True)
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", default="", type=click.Path())
@click.option("--data", default="")
def eval_run(split, checkpoint, report_path, data):
    """Standard four-metric report on one eval split (material metrics need
    judges; see `ablate` or the acceptance suite)."""
    from .evaluate import run_evaluation
    from .metrics import format_table

    report = run_evaluation(
        checkpoint, _data_root(data), split,
        out_path=report_path or None, keep_per_sample=False,
    )
    click.echo(format_table({f"model ({split})": report}))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", default="")
@click.option("--rows", default="full,no_matcher,no_reweight,spatial_only,material_only")
@click.option("--matcher", "matcher_path", default="", type=click.Path())
def ablate(config_path, data, rows, matcher_path):
    """Train the component-removal variants and print the comparison table."""
    from .ablate import run_ablation
    from .metrics import format_table
    from .train import TrainConfig

    raw = _load_config_file(config_path)
    if data or DATA_ROOT_ENV in os.environ:
        raw.setdefault("dataset_root", _data_root(data))
    if matcher_path:
        raw["matcher_path"] = matcher_path
    base = TrainConfig(**raw)
    reports = run_ablation(base, rows=tuple(rows.split(",")))
    click.echo(format_table(reports, title="Ablation comparison"))


@main.command()
@click.option("--data", default="")
@click.option("--checkpoint", default="", type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8080, type=int)
@click.option("--cache-dir", default="", type=click.Path())
def serve(data, checkpoint, host, port, cache_dir):
    """Run the auralization HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(_data_root(data), checkpoint or None, cache_dir or None)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
