"""``ami`` command-line interface.

Subcommand groups mirror the engine modules: ``checklist`` for taxonomy
reconciliation, ``dwca`` for archive ingestion, ``synth`` for scene
generation, and top-level queue commands (discover, enqueue, work,
resume, status, export, serve). Exit codes: 0 ok, 1 usage error,
2 data error, 3 model-backend error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from ami.errors import (
    ConfigurationError,
    DataIntegrityError,
    EngineError,
    IllegalTransitionError,
    InputError,
    NotFoundError,
    ParseError,
    StageError,
)
from ami.inference.types import Backend, ModelSpec, Stage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

_DATA_ERRORS = (
    ParseError,
    NotFoundError,
    DataIntegrityError,
    InputError,
    ConfigurationError,
    IllegalTransitionError,
)


def parse_model_spec(stage: Stage, text: str) -> ModelSpec:
    """Parse ``backend[,key=value...]``: e.g. ``blob`` or
    ``stub_fixture,uri=fixtures.json,threshold=0.6``."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise InputError(f"empty model spec for stage {stage.value}")
    try:
        backend = Backend(parts[0])
    except ValueError as exc:
        raise InputError(
            f"unknown backend {parts[0]!r}; choose from "
            f"{[b.value for b in Backend]}"
        ) from exc
    uri = ""
    threshold = 0.5
    resolution = 128
    options: dict[str, float] = {}
    for part in parts[1:]:
        if "=" not in part:
            raise InputError(f"bad model spec fragment {part!r}; expected key=value")
        key, value = part.split("=", 1)
        if key in ("uri", "model_uri"):
            uri = value
        elif key == "threshold":
            threshold = float(value)
        elif key in ("resolution", "input_resolution"):
            resolution = int(value)
        else:
            options[key] = float(value)
    return ModelSpec(
        stage=stage,
        backend=backend,
        model_uri=uri,
        threshold=threshold,
        input_resolution=resolution,
        options=options,
    )


@click.group()
def cli():
    """Moth camera-trap data engine."""


# -- taxonomy ----------------------------------------------------------------


@cli.group()
def checklist():
    """Checklist reconciliation against a backbone snapshot."""


@checklist.command("normalize")
@click.option("--backbone", "backbone_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fuzzy-threshold", default=0.90, show_default=True)
def checklist_normalize(backbone_path, input_path, out_path, fuzzy_threshold):
    """Resolve a raw species list into a processed checklist CSV."""
    from ami.taxonomy import (
        Backbone,
        normalize_checklist,
        read_checklist,
        write_processed_checklist,
    )

    backbone = Backbone.from_csv(backbone_path)
    names = read_checklist(input_path)
    entries = normalize_checklist(names, backbone, fuzzy_threshold=fuzzy_threshold)
    write_processed_checklist(entries, backbone, out_path)
    by_resolution: dict[str, int] = {}
    for entry in entries:
        by_resolution[entry.resolution.value] = by_resolution.get(entry.resolution.value, 0) + 1
    click.echo(json.dumps({"names": len(entries), "resolutions": by_resolution}, sort_keys=True))


# -- dwca ----------------------------------------------------------------


@cli.group()
def dwca():
    """Darwin Core Archive ingestion."""


@dwca.command("parse")
@click.argument("archive", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def dwca_parse(archive, out_dir):
    """Parse an archive into occurrences.jsonl and media.jsonl."""
    from ami.dwca import parse_archive, write_records_jsonl

    parsed = parse_archive(archive)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records_jsonl(parsed.occurrences, out / "occurrences.jsonl")
    write_records_jsonl(parsed.media, out / "media.jsonl")
    for warning in parsed.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(
        json.dumps(
            {
                "occurrences": len(parsed.occurrences),
                "media": len(parsed.media),
                "unmatched_extension_rows": parsed.unmatched_extension_rows,
                "warnings": len(parsed.warnings),
            },
            sort_keys=True,
        )
    )


@dwca.command("fetch")
@click.option("--media", "media_path", required=True, type=click.Path(exists=True))
@click.option("--cache", "cache_dir", required=True, type=click.Path())
@click.option("--concurrency", default=4, show_default=True)
@click.option("--retries", default=2, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def dwca_fetch(media_path, cache_dir, concurrency, retries, out_path):
    """Download media into the content-addressed cache."""
    from ami.dwca import fetch_media, read_media_jsonl, write_records_jsonl

    records = read_media_jsonl(media_path)
    updated, summary = fetch_media(
        records, cache_dir, concurrency=concurrency, retries=retries
    )
    write_records_jsonl(updated, out_path or media_path)
    click.echo(
        json.dumps(
            {
                "downloaded": summary.downloaded,
                "cache_hits": summary.cache_hits,
                "failed": summary.failed,
            },
            sort_keys=True,
        )
    )


@dwca.command("clean")
@click.option("--occurrences", "occ_path", required=True, type=click.Path(exists=True))
@click.option("--media", "media_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--thumbnail-min-px", default=128, show_default=True)
@click.option("--blacklist", "blacklist", multiple=True, help="dataset key to drop")
@click.option(
    "--adult-stages",
    default="adult,imago",
    show_default=True,
    help="comma-separated life stages considered adult",
)
def dwca_clean(occ_path, media_path, out_path, thumbnail_min_px, blacklist, adult_stages):
    """Apply the cleaning rules and write verdicts back."""
    from ami.dwca import (
        CleaningRules,
        clean_media,
        read_media_jsonl,
        read_occurrences_jsonl,
        write_records_jsonl,
    )

    rules = CleaningRules(
        thumbnail_min_px=thumbnail_min_px,
        dataset_blacklist=frozenset(blacklist),
        adult_stages=frozenset(s.strip() for s in adult_stages.split(",") if s.strip()),
    )
    occurrences = read_occurrences_jsonl(occ_path)
    media = read_media_jsonl(media_path)
    cleaned, summary = clean_media(occurrences, media, rules)
    write_records_jsonl(cleaned, out_path or media_path)
    click.echo(json.dumps(summary, sort_keys=True))


@dwca.command("export")
@click.option("--occurrences", "occ_path", required=True, type=click.Path(exists=True))
@click.option("--media", "media_path", required=True, type=click.Path(exists=True))
@click.option("--checklist", "checklist_path", required=True, type=click.Path(exists=True))
@click.option("--cache", "cache_dir", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--cap", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def dwca_export(occ_path, media_path, checklist_path, cache_dir, out_path, cap, seed):
    """Export the per-species-capped training manifest."""
    import csv as _csv

    from ami.dwca import (
        export_training_set,
        read_media_jsonl,
        read_occurrences_jsonl,
        write_manifest,
    )

    occurrences = read_occurrences_jsonl(occ_path)
    media = read_media_jsonl(media_path)
    with open(checklist_path, newline="", encoding="utf-8") as handle:
        keys = {
            int(row["resolved_key"])
            for row in _csv.DictReader(handle)
            if row.get("resolved_key")
        }
    rows, rejects = export_training_set(
        occurrences, media, keys, cache_dir, cap_per_species=cap, seed=seed
    )
    write_manifest(rows, out_path)
    if rejects:
        rejects_path = Path(out_path).with_suffix(".rejects.csv")
        with open(rejects_path, "w", newline="", encoding="utf-8") as handle:
            writer = _csv.writer(handle)
            writer.writerow(["occurrence_id", "taxon_key", "reason"])
            for reject in rejects:
                writer.writerow([reject.occurrence_id, reject.taxon_key, reject.reason])
    click.echo(json.dumps({"rows": len(rows), "rejects": len(rejects)}, sort_keys=True))


# -- synthgen ----------------------------------------------------------------


@cli.group()
def synth():
    """Synthetic detection-dataset generation."""


@synth.command("generate")
@click.option("--backgrounds", required=True, type=click.Path(exists=True))
@click.option("--crops", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--scenes", default=5000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--min-crops", default=2, show_default=True)
@click.option("--max-crops", default=8, show_default=True)
@click.option("--allow-overlap/--no-allow-overlap", default=True, show_default=True)
@click.option("--max-overlap-iou", default=0.0, show_default=True)
@click.option(
    "--range",
    "scene_range",
    nargs=2,
    type=int,
    default=None,
    help="render only scenes [START, STOP) for parallel workers",
)
def synth_generate(
    backgrounds,
    crops,
    out_dir,
    scenes,
    seed,
    min_crops,
    max_crops,
    allow_overlap,
    max_overlap_iou,
    scene_range,
):
    """Render scenes and a COCO-style annotation file."""
    from ami.synthgen import (
        SceneConfig,
        generate_dataset,
        load_backgrounds_dir,
        load_crops_dir,
        write_coco,
    )

    config = SceneConfig(
        n_range=(min_crops, max_crops),
        allow_overlap=allow_overlap,
        max_overlap_iou=max_overlap_iou,
    )
    entries = generate_dataset(
        load_backgrounds_dir(backgrounds),
        load_crops_dir(crops),
        n_scenes=scenes,
        config=config,
        seed=seed,
        out_dir=out_dir,
        scene_range=tuple(scene_range) if scene_range else None,
    )
    if scene_range:
        annotations = Path(out_dir) / f"annotations_{scene_range[0]:05d}_{scene_range[1]:05d}.json"
    else:
        annotations = Path(out_dir) / "annotations.json"
    write_coco(entries, annotations)
    click.echo(json.dumps({"scenes": len(entries), "annotations": str(annotations)}))


# -- queue ----------------------------------------------------------------


def _store(home):
    from ami.pipeline import JobStore

    return JobStore(home)


_HOME_OPTION = click.option(
    "--home",
    envvar="AMI_HOME",
    default=".ami",
    show_default=True,
    type=click.Path(),
    help="engine home directory (env: AMI_HOME)",
)


@cli.command("discover")
@click.argument("root", type=click.Path(exists=True))
@_HOME_OPTION
def discover(root, home):
    """Find capture sessions under ROOT and register them."""
    from ami.pipeline import discover_sessions

    result = discover_sessions(root)
    store = _store(home)
    for session in result.sessions:
        store.register_session(session)
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(
        json.dumps(
            {
                "sessions": [s.session_id for s in result.sessions],
                "unsorted": result.unsorted,
            },
            sort_keys=True,
        )
    )


@cli.command("enqueue")
@click.option("--session", "session_id", required=True)
@click.option("--detector", required=True, help="backend[,key=value...]")
@click.option("--binary", required=True, help="backend[,key=value...]")
@click.option("--species", default=None, help="backend[,key=value...]")
@click.option("--life-stage", "life_stage", default=None, help="backend[,key=value...]")
@_HOME_OPTION
def enqueue(session_id, detector, binary, species, life_stage, home):
    """Queue a session for processing with the given stage models."""
    specs = {
        Stage.DETECTOR: parse_model_spec(Stage.DETECTOR, detector),
        Stage.BINARY: parse_model_spec(Stage.BINARY, binary),
    }
    if species:
        specs[Stage.SPECIES] = parse_model_spec(Stage.SPECIES, species)
    if life_stage:
        specs[Stage.LIFE_STAGE] = parse_model_spec(Stage.LIFE_STAGE, life_stage)
    job, existing = _store(home).enqueue(session_id, specs)
    click.echo(json.dumps({"job_id": job.job_id, "existing": existing}, sort_keys=True))


@cli.command("work")
@click.option("-n", "workers", default=1, show_default=True)
@click.option("--failure-threshold", default=0.1, show_default=True)
@_HOME_OPTION
def work(workers, failure_threshold, home):
    """Process queued jobs until the queue is empty."""
    from ami.pipeline import run_workers
    from ami.taxonomy import Backbone

    store = _store(home)
    backbone_path = Path(home) / "backbone.csv"
    backbone = Backbone.from_csv(backbone_path) if backbone_path.exists() else None
    processed = run_workers(
        store, n=workers, failure_threshold=failure_threshold, backbone=backbone
    )
    click.echo(json.dumps({"processed": processed}))


@cli.command("resume")
@_HOME_OPTION
def resume_cmd(home):
    """Recover jobs abandoned by crashed workers."""
    from ami.pipeline import resume
    from ami.taxonomy import Backbone

    store = _store(home)
    backbone_path = Path(home) / "backbone.csv"
    backbone = Backbone.from_csv(backbone_path) if backbone_path.exists() else None
    recovered = resume(store, backbone=backbone)
    click.echo(json.dumps({"recovered": recovered}))


@cli.command("status")
@click.argument("job_id", required=False)
@_HOME_OPTION
def status(job_id, home):
    """Show one job, or the whole queue."""
    store = _store(home)
    if job_id:
        click.echo(json.dumps(store.get_job(job_id).to_dict(), sort_keys=True))
    else:
        click.echo(
            json.dumps([j.to_dict() for j in store.list_jobs()], sort_keys=True)
        )


@cli.command("export")
@click.option("--session", "session_id", required=True)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["jsonl", "csv"]),
    default="jsonl",
    show_default=True,
)
@click.option("--out", "out_path", default="-", type=click.Path(allow_dash=True))
@_HOME_OPTION
def export_results(session_id, fmt, out_path, home):
    """Export a session's tracks (jsonl) or counts (csv)."""
    store = _store(home)
    store.load_session(session_id)
    results = store.results_dir(session_id)
    if fmt == "jsonl":
        path = results / "tracks.jsonl"
        if not path.exists():
            raise NotFoundError(f"no tracks for session {session_id}")
        data = path.read_text()
    else:
        path = results / "counts.json"
        if not path.exists():
            raise NotFoundError(f"no counts for session {session_id}")
        payload = json.loads(path.read_text())
        lines = ["level,taxon_key,count"]
        for level in ("species", "genus", "family"):
            for key in sorted(payload[level]):
                lines.append(f"{level},{key},{payload[level][key]}")
        data = "\n".join(lines) + "\n"
    if out_path == "-":
        click.echo(data, nl=False)
    else:
        Path(out_path).write_text(data)


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8777, show_default=True)
@_HOME_OPTION
def serve_cmd(host, port, home):
    """Run the HTTP API server."""
    from ami.service import serve

    serve(home, host=host, port=port)


@cli.command("recipe")
@click.option("--out", "out_path", default="-", type=click.Path(allow_dash=True))
def recipe(out_path):
    """Emit the static species-classifier training recipe."""
    data = (Path(__file__).parent / "data" / "training_recipe.json").read_text()
    if out_path == "-":
        click.echo(data, nl=False)
    else:
        Path(out_path).write_text(data)


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return EXIT_OK if exc.exit_code == 0 else EXIT_USAGE
    except (click.UsageError, click.Abort) as exc:
        click.echo(f"usage error: {exc}", err=True)
        return EXIT_USAGE
    except StageError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return EXIT_BACKEND
    except _DATA_ERRORS as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except EngineError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
