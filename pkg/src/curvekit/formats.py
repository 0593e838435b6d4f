"""JSON interchange: scene files, prediction files and corpus manifests.

Documents are written in a canonical layout so that write -> read -> write is
byte-identical: two-space indentation, innermost numeric arrays on one line,
floats in shortest round-trip form, and keys in a fixed order.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .curves import CLASS_IDS, CLASS_NAMES, CURVE_CLASSES, PARAM_SIZES, NormalizationTransform, curve_from_array
from .errors import SchemaError
from .metrics import ScoredCurve
from .setopt import resolve
from .slot import BLOCK_SIZES, BLOCKS, LOGITS, SLOT_SIZE, PredictionSlot
from .synthgen import Scene, SceneSpec

SCENE_VERSION = "curvekit.scene/1"
PREDICTION_VERSION = "curvekit.prediction/1"
MANIFEST_VERSION = "curvekit.manifest/1"

PathLike = Union[str, Path]


# -- canonical writer -------------------------------------------------------


def _number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    f = float(x)
    if not math.isfinite(f):
        raise ValueError(f"non-finite value {f!r} cannot be serialized")
    if f == 0.0:
        f = 0.0  # drop the sign of negative zero
    return repr(f)


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating, bool, np.bool_))


def _emit(value, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if value is None:
        return "null"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if _is_scalar(value):
        return _number(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_emit(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(_is_scalar(v) for v in value):
            return "[" + ", ".join(_number(v) for v in value) + "]"
        return "[\n" + ",\n".join(inner + _emit(v, indent + 1) for v in value) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(doc) -> str:
    return _emit(doc, 0) + "\n"


def write_json(path: PathLike, doc) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


# -- reader with located errors ---------------------------------------------

_decoder = json.JSONDecoder()


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in " \t\r\n":
        pos += 1
    return pos


def _locate(text: str, path: list) -> Optional[int]:
    """Line number of the value at ``path`` in ``text`` (best effort)."""
    pos = _skip_ws(text, 0)
    try:
        for key in path:
            if isinstance(key, str):
                if text[pos] != "{":
                    return None
                pos = _skip_ws(text, pos + 1)
                while text[pos] != "}":
                    name, pos = json.decoder.scanstring(text, pos + 1)
                    pos = _skip_ws(text, _skip_ws(text, pos) + 1)
                    if name == key:
                        break
                    _, pos = _decoder.raw_decode(text, pos)
                    pos = _skip_ws(text, pos)
                    if text[pos] == ",":
                        pos = _skip_ws(text, pos + 1)
                else:
                    return None
            else:
                if text[pos] != "[":
                    return None
                pos = _skip_ws(text, pos + 1)
                for _ in range(key):
                    _, pos = _decoder.raw_decode(text, pos)
                    pos = _skip_ws(text, _skip_ws(text, pos) + 1)
    except (IndexError, ValueError):
        return None
    return text.count("\n", 0, pos) + 1


def _path_str(path: list) -> str:
    out = ""
    for k in path:
        out += f"[{k}]" if isinstance(k, int) else (f".{k}" if out else k)
    return out


class _Reader:
    def __init__(self, text: str, source: str = ""):
        self.text = text
        self.source = source
        try:
            self.doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg} ({self._prefix()}column {exc.colno})", line=exc.lineno) from exc

    def _prefix(self):
        return f"{self.source}, " if self.source else ""

    def fail(self, path: list, message: str):
        where = _path_str(path)
        if self.source:
            where = f"{self.source}:{where}" if where else self.source
        raise SchemaError(message, where, _locate(self.text, path))

    def get(self, obj: dict, key: str, path: list, kind=None, required: bool = True):
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
        if key not in obj:
            if required:
                self.fail(path, f"missing field {key!r}")
            return None
        value = obj[key]
        if kind is not None and not isinstance(value, kind):
            self.fail(path + [key], f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
        return value

    def numbers(self, value, path: list, length: Optional[int] = None) -> np.ndarray:
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            self.fail(path, "expected an array of numbers")
        if length is not None and len(value) != length:
            self.fail(path, f"expected {length} numbers, got {len(value)}")
        arr = np.array(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            self.fail(path, "values must be finite")
        return arr

    def version(self, expected: str):
        v = self.get(self.doc, "version", [], str)
        if v != expected:
            self.fail(["version"], f"unsupported version {v!r}, expected {expected!r}")

    def curve(self, obj, path: list):
        name = self.get(obj, "class", path, str)
        cls = CLASS_IDS.get(name)
        if cls not in CURVE_CLASSES:
            self.fail(path + ["class"], f"unknown curve class {name!r}")
        params = self.numbers(self.get(obj, "params", path), path + ["params"], PARAM_SIZES[cls])
        try:
            return curve_from_array(cls, params)
        except ValueError as exc:
            self.fail(path + ["params"], str(exc))


def _read_text(path: PathLike) -> str:
    return Path(path).read_text(encoding="utf-8")


# -- curves -----------------------------------------------------------------


def curve_to_dict(curve) -> dict:
    return {"class": CLASS_NAMES[curve.cls], "params": curve.to_array()}


# -- scene files ------------------------------------------------------------


def scene_to_doc(scene: Scene) -> dict:
    prov = dict(scene.provenance)
    if scene.spec is not None:
        prov["spec"] = scene.spec.to_dict()
    if scene.transform is not None:
        prov["normalization"] = {"center": list(scene.transform.center), "scale": scene.transform.scale}
    return {
        "version": SCENE_VERSION,
        "points": np.asarray(scene.points, dtype=float),
        "curves": [curve_to_dict(c) for c in scene.curves],
        "provenance": prov,
    }


def parse_scene(text: str, source: str = "") -> Scene:
    r = _Reader(text, source)
    r.version(SCENE_VERSION)
    raw = r.get(r.doc, "points", [], list)
    for i, p in enumerate(raw):
        if not isinstance(p, list) or len(p) != 3:
            r.fail(["points", i], "expected a point [x, y, z]")
    pts = np.array(raw, dtype=float).reshape(-1, 3) if raw else np.zeros((0, 3))
    if not np.all(np.isfinite(pts)):
        bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
        r.fail(["points", bad], "coordinates must be finite")
    curves = [r.curve(c, ["curves", i]) for i, c in enumerate(r.get(r.doc, "curves", [], list))]
    prov = r.get(r.doc, "provenance", [], dict, required=False) or {}
    spec = transform = None
    if "spec" in prov:
        try:
            spec = SceneSpec.from_dict(prov["spec"])
        except (KeyError, TypeError, ValueError) as exc:
            r.fail(["provenance", "spec"], f"invalid scene spec: {exc}")
    if "normalization" in prov:
        n = prov["normalization"]
        center = r.numbers(r.get(n, "center", ["provenance", "normalization"]),
                           ["provenance", "normalization", "center"], 3)
        scale = r.get(n, "scale", ["provenance", "normalization"], (int, float))
        transform = NormalizationTransform(tuple(float(c) for c in center), float(scale))
    rest = {k: v for k, v in prov.items() if k not in ("spec", "normalization")}
    return Scene(pts, curves, spec, transform, rest)


def write_scene(path: PathLike, scene: Scene) -> None:
    write_json(path, scene_to_doc(scene))


def read_scene(path: PathLike) -> Scene:
    return parse_scene(_read_text(path), str(path))


# -- prediction files -------------------------------------------------------

_BLOCK_KEYS = {c: CLASS_NAMES[c] for c in CURVE_CLASSES}


def slots_to_doc(slots) -> dict:
    return {
        "version": PREDICTION_VERSION,
        "slots": [
            {"logits": s.logits, "blocks": {_BLOCK_KEYS[c]: s.block(c) for c in CURVE_CLASSES}}
            for s in slots
        ],
    }


def curves_to_doc(curves) -> dict:
    return {
        "version": PREDICTION_VERSION,
        "curves": [{**curve_to_dict(c.curve), "confidence": float(c.confidence)} for c in curves],
    }


class Predictions:
    """A parsed prediction file: raw slots or resolved curves (exactly one is set)."""

    def __init__(self, slots=None, curves=None):
        self.slots = slots
        self.curves = curves

    def resolved(self) -> list:
        if self.curves is not None:
            return list(self.curves)
        return resolve(self.slots)


def parse_predictions(text: str, source: str = "") -> Predictions:
    r = _Reader(text, source)
    r.version(PREDICTION_VERSION)
    has_slots, has_curves = "slots" in r.doc, "curves" in r.doc
    if has_slots == has_curves:
        r.fail([], "expected exactly one of 'slots' or 'curves'")
    if has_slots:
        slots = []
        for i, s in enumerate(r.get(r.doc, "slots", [], list)):
            path = ["slots", i]
            v = np.zeros(SLOT_SIZE)
            v[LOGITS] = r.numbers(r.get(s, "logits", path), path + ["logits"], 5)
            blocks = r.get(s, "blocks", path, dict)
            for c in CURVE_CLASSES:
                key = _BLOCK_KEYS[c]
                v[BLOCKS[c]] = r.numbers(r.get(blocks, key, path + ["blocks"]), path + ["blocks", key], BLOCK_SIZES[c])
            slots.append(PredictionSlot(v))
        return Predictions(slots=slots)
    curves = []
    for i, c in enumerate(r.get(r.doc, "curves", [], list)):
        path = ["curves", i]
        curve = r.curve(c, path)
        conf = r.get(c, "confidence", path, (int, float))
        if isinstance(conf, bool) or not 0.0 <= conf <= 1.0:
            r.fail(path + ["confidence"], f"confidence must lie in [0, 1], got {conf!r}")
        curves.append(ScoredCurve(curve, float(conf)))
    return Predictions(curves=curves)


def read_predictions(path: PathLike) -> Predictions:
    return parse_predictions(_read_text(path), str(path))


def read_scored_curves(path: PathLike) -> list:
    """Resolved curves from a prediction file, or a scene's gt at confidence 1."""
    text = _read_text(path)
    try:
        version = json.loads(text).get("version")
    except (json.JSONDecodeError, AttributeError):
        version = None
    if version == SCENE_VERSION:
        return [ScoredCurve(c, 1.0) for c in parse_scene(text, str(path)).curves]
    return parse_predictions(text, str(path)).resolved()


def write_curves(path: PathLike, curves) -> None:
    write_json(path, curves_to_doc(curves))


def write_slots(path: PathLike, slots) -> None:
    write_json(path, slots_to_doc(slots))


# -- manifests --------------------------------------------------------------


def manifest_doc(entries: list[dict]) -> dict:
    return {"version": MANIFEST_VERSION, "scenes": entries}


def read_manifest(path: PathLike) -> list[dict]:
    r = _Reader(_read_text(path), str(path))
    r.version(MANIFEST_VERSION)
    entries = r.get(r.doc, "scenes", [], list)
    for i, e in enumerate(entries):
        r.get(e, "file", ["scenes", i], str)
    return entries


def load_json(path: PathLike) -> Any:
    return _Reader(_read_text(path), str(path)).doc
