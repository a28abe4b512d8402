"""Layered video manifests: per-layer, per-segment bits and PSNR.

Layer 0 is the base layer (BL); higher indices are enhancement layers (EL).
Tile bitrates are assumed to be pre-aggregated (whole GOP for the BL, viewport
tiles for the EL), so a manifest is just two small tables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .rng import XorShift64Star

NUM_LAYERS = 2
BL, EL = 0, 1


class ManifestFormatError(ValueError):
    """The manifest file could not be parsed."""


class ManifestValidationError(ValueError):
    """The manifest parsed but violates an invariant."""


@dataclass(frozen=True)
class SegmentInfo:
    bits: int
    psnr_db: float


@dataclass(frozen=True)
class LayerTrack:
    layer_id: str
    qp: int
    segments: tuple[SegmentInfo, ...]


@dataclass(frozen=True)
class VideoManifest:
    video_id: str
    segment_duration_s: float
    num_segments: int
    layers: tuple[LayerTrack, ...]

    def __post_init__(self):
        validate_manifest(self)

    @property
    def num_layers(self) -> int:
        return len(self.layers)


def validate_manifest(m: VideoManifest, num_layers: int | None = None) -> None:
    if not isinstance(m.num_segments, int) or m.num_segments < 1:
        raise ManifestValidationError(f"num_segments must be a positive integer, got {m.num_segments!r}")
    if not (math.isfinite(m.segment_duration_s) and m.segment_duration_s > 0):
        raise ManifestValidationError(f"segment_duration_s must be > 0, got {m.segment_duration_s!r}")
    if not m.layers:
        raise ManifestValidationError("layers: at least one layer is required")
    if num_layers is not None and len(m.layers) != num_layers:
        raise ManifestValidationError(f"layers: expected {num_layers} layers, got {len(m.layers)}")
    for li, layer in enumerate(m.layers):
        where = f"layers[{li}]"
        if not isinstance(layer.qp, int) or not 0 <= layer.qp <= 51:
            raise ManifestValidationError(f"{where}.qp must be an integer in [0, 51], got {layer.qp!r}")
        if len(layer.segments) != m.num_segments:
            raise ManifestValidationError(
                f"{where}.segments has {len(layer.segments)} entries, expected num_segments={m.num_segments}"
            )
        for si, seg in enumerate(layer.segments):
            if not isinstance(seg.bits, int) or seg.bits <= 0:
                raise ManifestValidationError(f"{where}.segments[{si}].bits must be a positive integer")
            if not (math.isfinite(seg.psnr_db) and seg.psnr_db > 0):
                raise ManifestValidationError(f"{where}.segments[{si}].psnr_db must be finite and > 0")


def _check_index(m: VideoManifest, layer: int, idx: int) -> None:
    if not 0 <= layer < len(m.layers):
        raise IndexError(f"layer {layer} out of range for {len(m.layers)} layers")
    if not 0 <= idx < m.num_segments:
        raise IndexError(f"segment {idx} out of range for {m.num_segments} segments")


def segment_bits(m: VideoManifest, layer: int, idx: int) -> int:
    _check_index(m, layer, idx)
    return m.layers[layer].segments[idx].bits


def segment_psnr(m: VideoManifest, layer: int, idx: int) -> float:
    _check_index(m, layer, idx)
    return m.layers[layer].segments[idx].psnr_db


def psnr_from_mse(mse: float, peak: float = 255.0) -> float:
    """PSNR in dB of an 8-bit plane with mean squared error ``mse``."""
    if mse <= 0:
        raise ValueError("mse must be positive")
    return 10.0 * math.log10(peak * peak / mse)


def manifest_from_mse(
    video_id: str,
    segment_duration_s: float,
    layers: list[tuple[str, int, list[tuple[int, float]]]],
) -> VideoManifest:
    """Build a manifest from ``(layer_id, qp, [(bits, y_mse), ...])`` tables."""
    tracks = []
    for layer_id, qp, rows in layers:
        segs = tuple(SegmentInfo(int(bits), psnr_from_mse(mse)) for bits, mse in rows)
        tracks.append(LayerTrack(layer_id, qp, segs))
    n = len(tracks[0].segments) if tracks else 0
    return VideoManifest(video_id, float(segment_duration_s), n, tuple(tracks))


def manifest_to_dict(m: VideoManifest) -> dict:
    return {
        "video_id": m.video_id,
        "segment_duration_s": m.segment_duration_s,
        "num_segments": m.num_segments,
        "layers": [
            {
                "layer_id": layer.layer_id,
                "qp": layer.qp,
                "segments": [{"bits": s.bits, "psnr_db": s.psnr_db} for s in layer.segments],
            }
            for layer in m.layers
        ],
    }


def _field(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ManifestFormatError(f"{where}: missing field '{key}'")
    value = obj[key]
    # bool is an int subclass; reject it explicitly
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ManifestFormatError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def manifest_from_dict(data: dict, num_layers: int | None = None) -> VideoManifest:
    number = (int, float)
    video_id = _field(data, "video_id", str, "manifest")
    duration = float(_field(data, "segment_duration_s", number, "manifest"))
    n = _field(data, "num_segments", int, "manifest")
    raw_layers = _field(data, "layers", list, "manifest")
    layers = []
    for li, raw in enumerate(raw_layers):
        where = f"layers[{li}]"
        segs = []
        for si, rs in enumerate(_field(raw, "segments", list, where)):
            sw = f"{where}.segments[{si}]"
            segs.append(SegmentInfo(_field(rs, "bits", int, sw), float(_field(rs, "psnr_db", number, sw))))
        layers.append(LayerTrack(_field(raw, "layer_id", str, where), _field(raw, "qp", int, where), tuple(segs)))
    m = VideoManifest(video_id, duration, n, tuple(layers))
    if num_layers is not None:
        validate_manifest(m, num_layers)
    return m


def load_manifest(path: str | Path, num_layers: int | None = None) -> VideoManifest:
    """Read and validate a JSON manifest.

    ``num_layers`` additionally pins the layer count; the simulator itself
    checks for exactly two when an environment is built.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return manifest_from_dict(data, num_layers)


def save_manifest(m: VideoManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(m), indent=1) + "\n", encoding="utf-8")


def synth_manifest(num_segments: int = 36, seed: int = 0, segment_duration_s: float = 1.0,
                   video_id: str | None = None) -> VideoManifest:
    """Random two-layer manifest with QP 35 / QP 15 style gaps.

    BL bits ~ U[0.5, 1.5] Mbit, EL bits = U[3, 6] x BL, BL PSNR ~ U[30, 34] dB,
    EL PSNR ~ U[40, 46] dB. Draw order per segment: BL bits, EL factor,
    BL PSNR, EL PSNR.
    """
    rng = XorShift64Star(seed)
    bl, el = [], []
    for _ in range(num_segments):
        bl_bits = int(round(rng.uniform(0.5e6, 1.5e6)))
        el_bits = int(round(bl_bits * rng.uniform(3.0, 6.0)))
        bl_psnr = rng.uniform(30.0, 34.0)
        el_psnr = rng.uniform(40.0, 46.0)
        bl.append(SegmentInfo(bl_bits, bl_psnr))
        el.append(SegmentInfo(el_bits, el_psnr))
    return VideoManifest(
        video_id or f"synth-{seed}",
        float(segment_duration_s),
        num_segments,
        (LayerTrack("BL", 35, tuple(bl)), LayerTrack("EL", 15, tuple(el))),
    )
