"""Stroke log wire format: one JSON object per stroke.

Schema::

    {"stroke_id": str, "mode": "additive"|"subtractive", "radius_px": float,
     "canvas": {"origin": [x,y,z], "u_axis": [x,y,z], "v_axis": [x,y,z],
                "width_mm": float, "height_mm": float,
                "axis": "axial"|"coronal"|"sagittal", "index": int,
                "pixel_dims": [pw, ph]},
     "samples": [{"tip": [x,y,z], "direction": [x,y,z],
                  "t_ms": float, "pressed": bool}, ...]}

Both the HTTP service and the batch CLI consume this format; it is the
deterministic replay contract.
"""

from __future__ import annotations

import json
from typing import Iterator, Tuple

from .annotation import CanvasPlane, Stroke, StylusSample
from .errors import SchemaError


def _vec3(obj, key, ctx):
    try:
        v = obj[key]
    except (KeyError, TypeError):
        raise SchemaError(f"{ctx}: missing {key!r}")
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise SchemaError(f"{ctx}: {key!r} must be a 3-element array")
    try:
        return [float(x) for x in v]
    except (TypeError, ValueError):
        raise SchemaError(f"{ctx}: {key!r} must contain numbers")


def parse_stroke(obj: dict) -> Tuple[Stroke, CanvasPlane]:
    """Validate one stroke-log object; raises SchemaError on bad input."""
    if not isinstance(obj, dict):
        raise SchemaError("stroke must be a JSON object")
    try:
        mode = obj["mode"]
        radius = float(obj["radius_px"])
        canvas_obj = obj["canvas"]
        samples_obj = obj["samples"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"stroke: missing or invalid field ({exc})")
    if mode not in ("additive", "subtractive"):
        raise SchemaError(f"stroke: unknown mode {mode!r}")
    if not isinstance(samples_obj, list):
        raise SchemaError("stroke: samples must be an array")

    pd = canvas_obj.get("pixel_dims")
    if not isinstance(pd, (list, tuple)) or len(pd) != 2:
        raise SchemaError("canvas: pixel_dims must be [pw, ph]")
    try:
        canvas = CanvasPlane(
            origin=_vec3(canvas_obj, "origin", "canvas"),
            u_axis=_vec3(canvas_obj, "u_axis", "canvas"),
            v_axis=_vec3(canvas_obj, "v_axis", "canvas"),
            width_mm=float(canvas_obj["width_mm"]),
            height_mm=float(canvas_obj["height_mm"]),
            axis=canvas_obj["axis"],
            index=int(canvas_obj["index"]),
            pixel_dims=(int(pd[0]), int(pd[1])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"canvas: {exc}")

    samples = []
    for i, s in enumerate(samples_obj):
        try:
            samples.append(
                StylusSample(
                    tip=_vec3(s, "tip", f"sample {i}"),
                    direction=_vec3(s, "direction", f"sample {i}"),
                    t_ms=float(s.get("t_ms", 0.0)),
                    pressed=bool(s.get("pressed", True)),
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"sample {i}: {exc}")
    try:
        stroke = Stroke(
            mode=mode,
            radius_px=radius,
            samples=samples,
            stroke_id=str(obj.get("stroke_id", "")),
        )
    except ValueError as exc:
        raise SchemaError(str(exc))
    return stroke, canvas


def stroke_to_json(stroke: Stroke, canvas: CanvasPlane) -> dict:
    return {
        "stroke_id": stroke.stroke_id,
        "mode": stroke.mode,
        "radius_px": stroke.radius_px,
        "canvas": {
            "origin": list(canvas.origin),
            "u_axis": list(canvas.u_axis),
            "v_axis": list(canvas.v_axis),
            "width_mm": canvas.width_mm,
            "height_mm": canvas.height_mm,
            "axis": canvas.axis,
            "index": canvas.index,
            "pixel_dims": list(canvas.pixel_dims),
        },
        "samples": [
            {
                "tip": list(s.tip),
                "direction": list(s.direction),
                "t_ms": s.t_ms,
                "pressed": s.pressed,
            }
            for s in stroke.samples
        ],
    }


def read_stroke_log(path) -> Iterator[Tuple[Stroke, CanvasPlane]]:
    """Parse a JSON-lines stroke log file."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc})")
            yield parse_stroke(obj)
