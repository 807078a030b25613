"""Command-line entry point.

Exit codes are stable for batch drivers: 0 success, 1 usage error,
2 media error, 3 backend error, 4 completed with flagged scenes.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import sys
from pathlib import Path

import click

from . import PROTOCOL_VERSION, __version__
from .core import validate_config
from .errors import AnonpipeError, BackendError, ConfigError, MediaError, MetricError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MEDIA = 2
EXIT_BACKEND = 3
EXIT_PARTIAL = 4

VERSION_STRING = f"anonpipe {__version__} (protocol {PROTOCOL_VERSION})"

logger = logging.getLogger("anonpipe")


def _load_config(path: str | None):
    if path is None:
        raw = {}
        if os.environ.get("ANONPIPE_BACKEND_URL"):
            raw["backend_url"] = os.environ["ANONPIPE_BACKEND_URL"]
        return validate_config(raw)
    from .core import load_config_file

    cfg = load_config_file(path)
    if cfg.backend_url is None and os.environ.get("ANONPIPE_BACKEND_URL"):
        raw = cfg.to_dict()
        raw["backend_url"] = os.environ["ANONPIPE_BACKEND_URL"]
        cfg = validate_config(raw)
    return cfg


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


@click.group(name="anonpipe")
@click.version_option(version=__version__, message=VERSION_STRING)
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose: bool):
    """Face video anonymization engine."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@cli.command()
@click.argument("video", type=str)
@click.option("-o", "--output", "output_path", required=True, type=str, help="Output video path.")
@click.option("--config", "config_path", type=str, default=None, help="Config document (JSON/YAML).")
@click.option("--mock-backends", is_flag=True, help="Use the in-process deterministic mocks.")
@click.option("--run-seed", type=int, default=None, help="Seed for all run randomness.")
@click.option("--workers", type=int, default=None, help="Concurrent scene workers.")
@click.option("--report", "report_path", type=str, default=None, help="Report JSON path.")
def anonymize(video, output_path, config_path, mock_backends, run_seed, workers, report_path):
    """Anonymize every face scene of VIDEO into the output file."""
    from .backends.client import BackendClient, mock_backend_client
    from .orchestrator import run_pipeline

    cfg = _load_config(config_path)
    if run_seed is None:
        run_seed = secrets.randbits(63)
        click.echo(f"run seed: {run_seed} (drawn; pass --run-seed to reproduce)")
    if workers is None:
        workers = os.cpu_count() or 1
    if mock_backends:
        client = mock_backend_client()
    elif cfg.backend_url:
        client = BackendClient(
            cfg.backend_url,
            timeout=cfg.backend_timeout,
            transport_retries=cfg.backend_transport_retries,
        )
        client.health()  # fail fast (exit 3) before decoding anything
    else:
        raise click.UsageError(
            "no backend configured: set backend_url in the config, export "
            "ANONPIPE_BACKEND_URL, or pass --mock-backends"
        )

    report = run_pipeline(video, output_path, cfg, client, run_seed=run_seed, workers=workers)
    report_file = Path(report_path) if report_path else Path(f"{output_path}.report.json")
    _atomic_write_text(report_file, json.dumps(report.to_dict(), indent=2) + "\n")
    click.echo(f"output: {output_path}")
    click.echo(f"report: {report_file}")
    totals = report.totals
    click.echo(
        f"segments: {totals['segments']}, faces: {totals['face_segments']}, "
        f"verified: {totals['verified_segments']}, flagged: {totals['flagged_segments']}"
    )
    if report.degraded:
        raise _Partial()


class _Partial(Exception):
    """Run completed but the report carries flags; exit 4."""


@cli.command()
@click.argument("video", type=str)
@click.option("--threshold", type=float, default=None, help="Scene change threshold in (0,1).")
@click.option("--json", "as_json", is_flag=True, help="Emit JSON instead of a table.")
def scenes(video, threshold, as_json):
    """Detect shot segments of VIDEO and their scene grouping."""
    from .scenedetect import detect_scenes
    from .videoio import decode_frames, probe

    cfg = validate_config({})
    x = threshold if threshold is not None else cfg.scene_threshold
    if not 0.0 < x < 1.0:
        raise click.UsageError(f"--threshold must be in (0, 1), got {x}")
    info = probe(video)
    frames = decode_frames(video)
    found = detect_scenes(frames, x, cfg.merge_tolerance)
    if as_json:
        from .service.models import ScenesResponse, SegmentModel

        doc = ScenesResponse(
            video_path=video,
            frame_count=info.frame_count,
            fps=str(info.fps),
            threshold=x,
            segments=[
                SegmentModel(
                    segment_id=s.segment_id,
                    scene_id=s.scene_id,
                    start_frame=s.start_frame,
                    end_frame=s.end_frame,
                    mean_rgb=s.mean_rgb,
                )
                for s in found
            ],
        )
        click.echo(doc.model_dump_json(indent=2))
    else:
        click.echo(f"{'segment':>7} {'scene':>5} {'start':>6} {'end':>6}  mean_rgb")
        for s in found:
            rgb = ", ".join(f"{v:6.1f}" for v in s.mean_rgb)
            click.echo(
                f"{s.segment_id:>7} {s.scene_id:>5} {s.start_frame:>6} {s.end_frame:>6}  ({rgb})"
            )


@cli.command()
@click.argument("image", type=str)
@click.option("--landmarks", "landmarks_path", required=True, type=str,
              help="File with 68 lines of 'x y' pixel coordinates.")
@click.option("--json", "as_json", is_flag=True, help="Emit JSON.")
def pose(image, landmarks_path, as_json):
    """Head pose (pitch/yaw/roll) from an IMAGE and its 68 landmarks."""
    import numpy as np
    from PIL import Image, UnidentifiedImageError

    from .facegeom import CameraModel, LandmarkSet, select_pnp_points, solve_pnp

    try:
        with Image.open(image) as img:
            width, height = img.size
    except (OSError, UnidentifiedImageError) as exc:
        raise MediaError(f"{image}: {exc}") from exc
    try:
        rows = [line.split() for line in Path(landmarks_path).read_text().split("\n") if line.strip()]
        points = np.asarray([[float(a), float(b)] for a, b in rows])
    except (OSError, ValueError) as exc:
        raise click.UsageError(f"{landmarks_path}: expected 68 lines of 'x y' ({exc})")
    if points.shape != (68, 2):
        raise click.UsageError(f"{landmarks_path}: expected 68 landmarks, got {points.shape[0]}")
    lm = LandmarkSet(points=points)
    result = solve_pnp(select_pnp_points(lm), cam=CameraModel.for_image(width, height))
    if as_json:
        from .service.models import PoseCliOutput

        doc = PoseCliOutput(
            pitch=result.pitch,
            yaw=result.yaw,
            roll=result.roll,
            reprojection_rmse=result.reprojection_rmse,
        )
        click.echo(doc.model_dump_json(indent=2))
    else:
        click.echo(f"pitch: {result.pitch:+.2f} deg")
        click.echo(f"yaw:   {result.yaw:+.2f} deg")
        click.echo(f"roll:  {result.roll:+.2f} deg")
        click.echo(f"rmse:  {result.reprojection_rmse:.4f} px")


@cli.command()
@click.option("--orig", "orig_path", required=True, type=str, help="Original manifest (JSON).")
@click.option("--anon", "anon_path", required=True, type=str, help="Anonymized manifest (JSON).")
@click.option("--metrics", "metric_csv", default="reid,pose,expr,temporal,attrs",
              help="Comma-separated: reid,pose,expr,temporal,attrs,quality.")
@click.option("--out", "out_path", type=str, default=None,
              help="Report path (.json or .md); stdout JSON when omitted.")
def evaluate(orig_path, anon_path, metric_csv, out_path):
    """Run the evaluation metric suite over two manifests."""
    from .metrics import evaluate as run_metrics
    from .metrics import load_manifest

    orig = load_manifest(orig_path)
    anon = load_manifest(anon_path)
    names = [m.strip() for m in metric_csv.split(",") if m.strip()]
    report = run_metrics(orig, anon, names)
    if out_path is None:
        click.echo(json.dumps(report.to_dict(), indent=2))
        return
    out = Path(out_path)
    if out.suffix == ".md":
        _atomic_write_text(out, report.to_markdown())
    else:
        _atomic_write_text(out, json.dumps(report.to_dict(), indent=2) + "\n")
    click.echo(f"report: {out}")


@cli.group()
def backends():
    """Backend service utilities."""


@backends.command("serve-mock")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8601, show_default=True, type=int)
def serve_mock(host, port):
    """Serve the deterministic mock backends over the v1 protocol."""
    import uvicorn

    from .backends.mock_app import mock_app

    click.echo(f"mock backends on http://{host}:{port} ({VERSION_STRING})")
    uvicorn.run(mock_app, host=host, port=port, log_level="info")


@backends.command()
@click.option("--url", default=None, help="Backend base URL (default: ANONPIPE_BACKEND_URL).")
def check(url):
    """Probe a backend service: health plus one round trip per op."""
    import numpy as np

    from .backends.client import BackendClient
    from .backends.golden import build_golden_requests

    base = url or os.environ.get("ANONPIPE_BACKEND_URL")
    if not base:
        raise click.UsageError("pass --url or export ANONPIPE_BACKEND_URL")
    client = BackendClient(base, timeout=30.0, transport_retries=0)
    failures = 0
    try:
        info = client.health()
        click.echo(f"health: {info.get('status')} engine={info.get('engine', '?')}")
    except AnonpipeError as exc:
        click.echo(f"health: FAIL ({exc})")
        failures += 1
    for op, req in build_golden_requests().items():
        try:
            resp = client.call(req)
            resp.typed_result(op)
            click.echo(f"{op}: ok")
        except AnonpipeError as exc:
            click.echo(f"{op}: FAIL ({exc})")
            failures += 1
    if failures:
        raise BackendError(f"{failures} endpoint(s) failed")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8600, show_default=True, type=int)
def serve(host, port):
    """Serve the engine API (scenes, pose, evaluate, anonymize)."""
    import uvicorn

    from .service.app import create_app

    click.echo(f"engine API on http://{host}:{port} ({VERSION_STRING})")
    uvicorn.run(create_app(), host=host, port=port, log_level="info")


def main(argv: list[str] | None = None) -> int:
    """Dispatch and map failures onto the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except _Partial:
        return EXIT_PARTIAL
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, MetricError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except MediaError as exc:
        click.echo(f"media error: {exc}", err=True)
        return EXIT_MEDIA
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return EXIT_BACKEND
    except AnonpipeError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
