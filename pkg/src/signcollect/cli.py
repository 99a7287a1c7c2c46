"""Operator command line.

Talks to the same persistence as the server directly, so exports of large
corpora never traverse the API. Exit codes: 0 ok, 1 completed with row
errors, 2 usage or config problems.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import auth as authn
from .config import Config, load_config
from .domain import Gender, Role
from .errors import BadHeaderError, ConfigError, SignCollectError, TooLargeError
from .export import attach_keypoints as attach_keypoints_op
from .export import export_snapshot, import_snapshot, stats_for_world
from .prompts import ingest_csv
from .runtime import build_runtime


def _load(config_path: str | None) -> Config:
    try:
        return load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc.detail}", err=True)
        sys.exit(2)


config_option = click.option(
    "--config", "config_path", type=click.Path(), default=None,
    help="Path to the key = value config file (defaults apply without one).",
)


@click.group()
def main():
    """Crowdsourced sign-language corpus platform."""


@main.command()
@config_option
def serve(config_path):
    """Run the HTTP API server."""
    import uvicorn

    from .api import create_app

    cfg = _load(config_path)
    app = create_app(cfg)
    uvicorn.run(app, host=cfg.listen_host, port=cfg.listen_port, log_level="info")


@main.command()
@click.argument("csv_path", type=click.Path())
@config_option
def ingest(csv_path, config_path):
    """Register prompts from a CSV file (content,content_type,language)."""
    cfg = _load(config_path)
    path = Path(csv_path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        click.echo(f"cannot read {csv_path}: {exc}", err=True)
        sys.exit(2)
    rt = build_runtime(cfg)
    try:
        report = ingest_csv(rt.db, data, max_bytes=cfg.max_csv_bytes)
    except (BadHeaderError, TooLargeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"accepted: {report.accepted}")
    click.echo(f"duplicates_skipped: {report.duplicates_skipped}")
    for err in report.errors:
        click.echo(f"row {err.row_number}: {err.code.value} {err.detail}".rstrip())
    sys.exit(1 if report.errors else 0)


@main.command()
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Snapshot directory to write [default: snapshot/<today>].")
@click.option("--language", default=None, help="Restrict to one language pair code.")
@click.option("--figures/--no-figures", default=True,
              help="Also render corpus report figures into <out>/figures/.")
@config_option
def export(out_dir, language, figures, config_path):
    """Export a dataset snapshot of all validated recordings."""
    cfg = _load(config_path)
    if out_dir is None:
        from datetime import date

        out_dir = str(Path("snapshot") / date.today().isoformat())
    rt = build_runtime(cfg)
    try:
        report = export_snapshot(rt.db, rt.store, cfg, out_dir,
                                 language=language, figures=figures)
    except SignCollectError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    for line in report.lines():
        click.echo(line)
    sys.exit(0)


@main.command("import")
@click.argument("snapshot_dir", type=click.Path())
@config_option
def import_cmd(snapshot_dir, config_path):
    """Rebuild validated recordings from a released snapshot directory."""
    cfg = _load(config_path)
    rt = build_runtime(cfg)
    try:
        count = import_snapshot(rt.db, rt.store, snapshot_dir)
    except SignCollectError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"imported: {count}")


@main.command()
@click.option("--language", default=None, help="Restrict to one language pair code.")
@config_option
def stats(language, config_path):
    """Print corpus statistics, one key: value per line."""
    cfg = _load(config_path)
    rt = build_runtime(cfg)
    for line in stats_for_world(rt.db, cfg, language).lines():
        click.echo(line)


@main.command()
@click.argument("handle")
@click.option("--password", prompt=True, hide_input=True)
@click.option("--language", default="bn-BdSL", show_default=True)
@click.option("--roles", default="contributor",
              help="Comma-separated set from contributor,validator,annotator,admin.")
@click.option("--gender", type=click.Choice([g.value for g in Gender]), default=None)
@click.option("--age", type=int, default=None)
@click.option("--locality", default=None)
@config_option
def useradd(handle, password, language, roles, gender, age, locality, config_path):
    """Create an account directly in the database (bootstrap admins here)."""
    cfg = _load(config_path)
    if language not in cfg.language_codes():
        click.echo(f"error: language {language!r} is not configured", err=True)
        sys.exit(2)
    try:
        role_set = frozenset(Role(r.strip()) for r in roles.split(",") if r.strip())
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    rt = build_runtime(cfg)
    user = authn.create_user(
        rt.db, handle, password, language,
        gender=Gender(gender) if gender else None,
        age=age, locality=locality, roles=role_set,
    )
    click.echo(f"user_id: {user.id}")


@main.command("attach-keypoints")
@click.argument("recording_id")
@click.argument("sidecar_path", type=click.Path())
@config_option
def attach_keypoints(recording_id, sidecar_path, config_path):
    """Validate and link a pose keypoint sidecar to a recording."""
    cfg = _load(config_path)
    try:
        data = Path(sidecar_path).read_bytes()
    except OSError as exc:
        click.echo(f"cannot read {sidecar_path}: {exc}", err=True)
        sys.exit(2)
    rt = build_runtime(cfg)
    try:
        key = attach_keypoints_op(rt.db, rt.store, recording_id, data)
    except SignCollectError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"keypoint_key: {key}")


if __name__ == "__main__":
    main()
