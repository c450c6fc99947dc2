import json
import logging
import functools

import click

from pathlib import Path

from app.data.folds import Role
from app.data.manifest import read_manifest
from app.data.slides import load_slide
from app.data.synth import SynthConfig, write_synthetic_dataset
from app.errors import ConfigurationError, MILError
from app.gradcheck import ALL_OPS, run_gradcheck
from app.metrics import metrics_json, metrics_table
from app.settings import DEFAULT_PATH, Settings, load_settings
from app.train.checkpoint import load_file, save_file
from app.train.crossval import cross_validate, fold_bags, fold_plan, train_on_fold
from app.train.roi import score_roi
from app.train.trainer import evaluate, mean_nll


logger = logging.getLogger(__name__)

DEFAULTS = Settings()

POOLING_CHOICES = ["max", "nor", "isr", "lse"]


def with_default(text: str, value) -> str:
    return f"{text} (settings default: {value})."


def handle_errors(command):
    """
    Map library errors to exit codes: configuration errors are usage
    errors (2), other failures exit with 1 and a one-line message.
    """
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ConfigurationError as e:
            raise click.UsageError(str(e)) from e
        except (MILError, OSError) as e:
            raise click.ClickException(str(e)) from e

    return wrapper


def config_option(command):
    return click.option(
        "--config", "-c", "config_path", type=click.Path(dir_okay=False), default=None,
        help=f"YAML settings file (default: {DEFAULT_PATH.name} when present).",
    )(command)


def training_options(command):
    """
    Flags that override the training sections of the settings file.
    """
    options = [
        click.option("--pool", type=click.Choice(POOLING_CHOICES), default=None,
                     help=with_default("Pooling operator", DEFAULTS.pooling.kind.value)),
        click.option("--r", "r", type=float, default=None, help=with_default("LSE sharpness", DEFAULTS.pooling.r)),
        click.option("--folds", type=int, default=None,
                     help=with_default("Number of cross-validation folds", DEFAULTS.data.folds)),
        click.option("--seed", type=int, default=None, help=with_default("Run seed", DEFAULTS.train.seed)),
        click.option("--epochs", type=int, default=None,
                     help=with_default("Maximum training epochs", DEFAULTS.train.max_epochs)),
        click.option("--lr", type=float, default=None, help=with_default("Learning rate", DEFAULTS.train.learning_rate)),
        click.option("--optimizer", type=click.Choice(["adam", "sgd_momentum"]), default=None,
                     help=with_default("Optimizer", DEFAULTS.train.optimizer.value)),
        click.option("--no-augment", is_flag=True, default=False, help="Disable training-time augmentation."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def resolve_settings(config_path: str | None, **flags) -> Settings:
    """
    Defaults < YAML file < flags; a None flag leaves the file value in place.
    """
    if config_path is None and DEFAULT_PATH.exists():
        config_path = DEFAULT_PATH
    overrides = {
        "pooling": {"kind": flags.get("pool"), "r": flags.get("r")},
        "data": {"folds": flags.get("folds")},
        "train": {
            "seed": flags.get("seed"),
            "max_epochs": flags.get("epochs"),
            "learning_rate": flags.get("lr"),
            "optimizer": flags.get("optimizer"),
        },
    }
    if flags.get("no_augment"):
        overrides["augment"] = {"enabled": False}
    return load_settings(config_path, overrides)


@click.group()
def cli():
    """
    Deep multiple instance learning: pooled patch classifiers for histopathology images.
    """
    pass


@cli.command()
@click.option("--bags", type=int, default=400, show_default=True, help="Number of bags, half positive.")
@click.option("--k-min", type=int, default=5, show_default=True, help="Smallest bag size.")
@click.option("--k-max", type=int, default=15, show_default=True, help="Largest bag size.")
@click.option("--witness-rate", type=float, default=0.2, show_default=True, help="Witness probability in positive bags.")
@click.option("--patch-size", type=int, default=24, show_default=True, help="Patch side in pixels.")
@click.option("--single-witness", is_flag=True, default=False, help="Exactly one witness per positive bag.")
@click.option("--seed", type=int, default=0, show_default=True, help="Run seed.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@handle_errors
def synth(bags, k_min, k_max, witness_rate, patch_size, single_witness, seed, out):
    """
    Write a synthetic witness dataset (mosaic PNGs, manifest.csv, witness.csv).
    """
    config = SynthConfig(bags, k_min, k_max, witness_rate, patch_size, seed, single_witness)
    manifest_path = write_synthetic_dataset(out, config)
    manifest = read_manifest(manifest_path)
    positives = sum(e.label for e in manifest.entries)
    click.echo(f"{len(manifest)} bags ({positives} positive, {len(manifest) - positives} negative) -> {manifest_path}")


@cli.command()
@config_option
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True, help="Dataset manifest CSV.")
@click.option("--folds", type=int, default=None, help=with_default("Number of folds", DEFAULTS.data.folds))
@click.option("--seed", type=int, default=None, help=with_default("Run seed", DEFAULTS.train.seed))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the plan as JSON.")
@handle_errors
def folds(config_path, manifest, folds, seed, out):
    """
    Plan patient-level, label-stratified folds.
    """
    settings = resolve_settings(config_path, folds=folds, seed=seed)
    plan = fold_plan(read_manifest(manifest), settings)
    text = json.dumps(plan.to_dict(), indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    click.echo(text)


@cli.command()
@config_option
@training_options
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True, help="Dataset manifest CSV.")
@click.option("--fold", type=int, default=0, show_default=True, help="Test fold; training uses the remaining folds.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Checkpoint path.")
@handle_errors
def train(config_path, manifest, fold, out, **flags):
    """
    Train one model on a fold and write its checkpoint and history.json.
    """
    settings = resolve_settings(config_path, **flags)
    dataset = read_manifest(manifest)
    plan = fold_plan(dataset, settings)
    checkpoint, history = train_on_fold(dataset, plan, fold, settings)

    save_file(checkpoint, out)
    history_path = Path(out).with_name("history.json")
    history_path.write_text(json.dumps(history.to_dict(), indent=2, sort_keys=True) + "\n")
    click.echo(f"Best epoch {history.best_epoch}, validation loss {checkpoint.best_val_loss:.6f} -> {out}")


@cli.command()
@config_option
@training_options
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True, help="Dataset manifest CSV.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Folds trained in parallel processes.")
@click.option("--out", type=click.Path(file_okay=False), default="results", show_default=True, help="Output directory.")
@handle_errors
def cv(config_path, manifest, jobs, out, **flags):
    """
    k-fold cross-validation; writes metrics.json and metrics.txt.
    """
    settings = resolve_settings(config_path, **flags)
    result = cross_validate(read_manifest(manifest), settings, jobs=jobs)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = metrics_table(result.reports, settings.pooling.kind.value.upper())
    (out / "metrics.json").write_text(metrics_json(result.reports))
    (out / "metrics.txt").write_text(table)
    click.echo(table, nl=False)


@cli.command(name="eval")
@config_option
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True, help="Checkpoint path.")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True, help="Dataset manifest CSV.")
@click.option("--fold", type=int, default=0, show_default=True, help="Fold whose bags are scored.")
@click.option("--role", type=click.Choice([r.value for r in Role]), default="test", show_default=True, help="Bag subset.")
@click.option("--folds", type=int, default=None, help=with_default("Number of folds", DEFAULTS.data.folds))
@click.option("--seed", type=int, default=None, help=with_default("Seed the fold plan was made with", DEFAULTS.train.seed))
@click.option("--threshold", type=float, default=0.5, show_default=True, help="Decision threshold on theta.")
@handle_errors
def evaluate_command(config_path, ckpt, manifest, fold, role, folds, seed, threshold):
    """
    Score a checkpoint on one fold's bags.
    """
    settings = resolve_settings(config_path, folds=folds, seed=seed)
    checkpoint = load_file(ckpt)
    dataset = read_manifest(manifest)
    plan = fold_plan(dataset, settings)
    bags = fold_bags(dataset, plan, fold, settings, (Role(role),))[Role(role)]

    thetas, report = evaluate(checkpoint, bags, threshold)
    click.echo(metrics_table([report]), nl=False)
    click.echo(f"tp={report.tp} fp={report.fp} tn={report.tn} fn={report.fn}")
    click.echo(f"Mean NLL {mean_nll(thetas, [b.label for b in bags], checkpoint.pooling.epsilon):.6f}")


@cli.command()
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True, help="Checkpoint path.")
@click.option("--image", type=click.Path(exists=True, dir_okay=False), required=True, help="PNG or PPM image.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Heatmap PNG path.")
@click.option("--table", type=click.Path(dir_okay=False), default=None, help="Score CSV path (default: next to --out).")
@handle_errors
def roi(ckpt, image, out, table):
    """
    Render a per-patch score heatmap of one image.
    """
    result = score_roi(load_file(ckpt), load_slide(image))
    table = table or str(Path(out).with_suffix(".csv"))
    result.save(out, table)
    row, col = result.peak()
    click.echo(f"Peak patch at row {row}, col {col} -> {out}, {table}")


@cli.command()
@click.option("--ops", default=None, help=f"Comma-separated components from {{{','.join(ALL_OPS)}}} (default: all).")
@click.option("--r", "r", type=float, default=10.0, show_default=True, help="LSE sharpness.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the evaluation points.")
@click.option("--points", type=int, default=100, show_default=True, help="Random points per component.")
@handle_errors
def gradcheck(ops, r, seed, points):
    """
    Compare analytic gradients with central finite differences.
    """
    selected = tuple(op.strip() for op in ops.split(",") if op.strip()) if ops else None
    results = run_gradcheck(selected, r, seed, points)
    for result in results:
        status = "ok" if result.passed else "FAILED"
        click.echo(f"{result.component:<14} {result.max_rel_error:.3e}  {status}")
    failed = [result.component for result in results if not result.passed]
    if failed:
        raise click.ClickException(f"Gradient check failed: {', '.join(failed)}")
