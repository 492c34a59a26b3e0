"""Batch CLI: replay a stroke log against a TIFF stack and export results."""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click

from . import annotation, meshopt, strokelog, surface, volume
from .errors import (
    DecodeError,
    DimensionMismatch,
    EmptyStack,
    IoError,
    SchemaError,
    UnsupportedPixelFormat,
    VoxelinkError,
)

EXIT_INPUT_ERROR = 2
EXIT_SCHEMA_ERROR = 3
EXIT_IO_ERROR = 4
EXIT_OTHER = 1


def _parse_tuple(text: str, n: int, name: str):
    parts = text.split(",")
    if len(parts) != n:
        raise click.BadParameter(f"{name} needs {n} comma-separated values")
    return tuple(float(p) for p in parts)


@click.group()
def main():
    """voxelink: volumetric segmentation engine."""


@main.command()
@click.option("--stack", "stack_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory of .tif/.tiff slices (lexicographic order).")
@click.option("--strokes", "strokes_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON-lines stroke log to replay.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory for masks, mesh and metadata.")
@click.option("--spacing", default="0.3,0.3,0.5", show_default=True,
              help="Voxel spacing in mm: sx,sy,sz.")
@click.option("--window", default="400,1800", show_default=True,
              help="Intensity window: center,width (16-bit sources).")
@click.option("--iso", default=0.5, show_default=True, type=float,
              help="Iso-level for surface extraction.")
@click.option("--keep-ratio", default=0.25, show_default=True, type=float,
              help="Fraction of triangles to keep after decimation.")
@click.option("--yield", "yield_interval", default=1000, show_default=True,
              type=int, help="Cubes per extraction progress chunk.")
def run(stack_dir, strokes_file, out_dir, spacing, window, iso, keep_ratio,
        yield_interval):
    """Load a stack, replay strokes, extract + decimate, export everything."""
    try:
        spacing_t = _parse_tuple(spacing, 3, "--spacing")
        window_t = _parse_tuple(window, 2, "--window")

        t0 = time.perf_counter()
        paths = volume.list_stack_dir(stack_dir)
        vol = volume.load_tiff_stack(paths, spacing=spacing_t, window=window_t)
        mask = volume.MaskVolume.empty_like(vol)
        t_load = time.perf_counter() - t0

        t0 = time.perf_counter()
        n_strokes = 0
        for stroke, canvas in strokelog.read_stroke_log(strokes_file):
            annotation.apply_stroke(mask, canvas, stroke)
            n_strokes += 1
        t_strokes = time.perf_counter() - t0

        config = surface.MCConfig(iso_level=iso, yield_interval=yield_interval)
        t0 = time.perf_counter()
        grid = surface.build_density_grid(mask, config, spacing=vol.spacing)
        mesh = surface.extract_isosurface(grid, config)
        t_extract = time.perf_counter() - t0

        t0 = time.perf_counter()
        deduped = meshopt.dedupe_vertices(mesh, 0.0)
        result = meshopt.decimate(
            deduped, meshopt.DecimationConfig(target_ratio=keep_ratio)
        )
        t_decimate = time.perf_counter() - t0

        t0 = time.perf_counter()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        volume.export_mask_stack(mask, out, "mask")
        volume.write_volume_meta(vol, out / "volume.meta")
        meshopt.write_stl(result.mesh, out / "mesh.stl")
        t_export = time.perf_counter() - t0

        click.echo(
            f"strokes={n_strokes} "
            f"triangles_before={mesh.triangle_count} "
            f"triangles_after={result.mesh.triangle_count} "
            f"load_s={t_load:.3f} strokes_s={t_strokes:.3f} "
            f"extract_s={t_extract:.3f} decimate_s={t_decimate:.3f} "
            f"export_s={t_export:.3f}"
        )
    except SchemaError as exc:
        click.echo(f"stroke log error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA_ERROR)
    except (EmptyStack, DimensionMismatch, UnsupportedPixelFormat,
            DecodeError) as exc:
        click.echo(f"input error: {exc}", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    except IoError as exc:
        click.echo(f"write error: {exc}", err=True)
        sys.exit(EXIT_IO_ERROR)
    except VoxelinkError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_OTHER)


@main.command()
@click.option("--port", default=None, type=int,
              help="Listen port (default: $VOXELINK_PORT or 8787).")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(port, host):
    """Run the interactive HTTP/WebSocket service."""
    import os

    import uvicorn

    from .service import create_app

    if port is None:
        port = int(os.environ.get("VOXELINK_PORT", "8787"))
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
