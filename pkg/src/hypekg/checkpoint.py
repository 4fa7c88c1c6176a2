"""Binary checkpoint (header + little-endian f64 arrays) with a JSON manifest sidecar."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import DataError
from .model import ParameterStore, mlp_shapes

log = logging.getLogger(__name__)

MAGIC = b"HYPE"
VERSION = 1
HEADER = struct.Struct("<4sIIIIId32s")
TABLES = ("ent_cen", "ent_lim", "rel_cen", "rel_lim")


@dataclass
class Checkpoint:
    store: ParameterStore
    entities: list
    relations: list
    config: RunConfig
    step: int = 0
    metrics: dict = field(default_factory=dict)


def array_order(d: int, h: int, trainable_curvature: bool) -> list:
    names = list(TABLES) + sorted(mlp_shapes(d, h))
    return names + (["curvature"] if trainable_curvature else [])


def _shapes(d, h, n_ent, n_rel, trainable):
    shapes = {"ent_cen": (n_ent, d), "ent_lim": (n_ent, d), "rel_cen": (n_rel, d), "rel_lim": (n_rel, d)}
    shapes.update(mlp_shapes(d, h))
    if trainable:
        shapes["curvature"] = ()
    return shapes


def save(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    mc = ckpt.store.config
    d, h = mc.d, mc.h
    arrays = ckpt.store.arrays
    trainable = "curvature" in arrays
    header = HEADER.pack(MAGIC, VERSION, d, len(ckpt.entities), len(ckpt.relations), h,
                         float(mc.curvature), ckpt.config.digest())
    with open(path, "wb") as fh:
        fh.write(header)
        for name in array_order(d, h, trainable):
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    manifest = {
        "format": "hypekg-checkpoint",
        "version": VERSION,
        "config": ckpt.config.to_text(),
        "config_digest": ckpt.config.digest().hex(),
        "entities": list(ckpt.entities),
        "relations": list(ckpt.relations),
        "step": int(ckpt.step),
        "metrics": ckpt.metrics,
        "trainable_curvature": trainable,
    }
    with open(str(path) + ".json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def load(path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
        manifest = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"bad checkpoint manifest for {path}: {exc}") from None
    if len(raw) < HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, d, n_ent, n_rel, h, curvature, digest = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    if version > VERSION:
        raise DataError(f"{path}: format version {version} is newer than supported version {VERSION}")
    if digest.hex() != manifest.get("config_digest"):
        raise DataError(f"{path}: manifest digest does not match the header")
    if len(manifest["entities"]) != n_ent or len(manifest["relations"]) != n_rel:
        raise DataError(f"{path}: vocabulary sizes disagree with the header")
    config = RunConfig.from_text(manifest["config"], f"{path}.json")
    trainable = bool(manifest.get("trainable_curvature", False))
    shapes = _shapes(d, h, n_ent, n_rel, trainable)
    expected = HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(raw) != expected:
        raise DataError(f"{path}: {len(raw)} bytes, header implies {expected}")
    arrays, off = {}, HEADER.size
    for name in array_order(d, h, trainable):
        n = int(np.prod(shapes[name]))
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shapes[name])
        off += 8 * n
    mc = config.model_config()
    if mc.d != d or mc.h != h or mc.curvature != curvature:
        log.warning("%s: header dimensions differ from the stored config", path)
    store = ParameterStore(arrays, mc)
    return Checkpoint(store, manifest["entities"], manifest["relations"], config,
                      manifest.get("step", 0), manifest.get("metrics", {}))


def check_config(ckpt: Checkpoint, config: RunConfig) -> bool:
    """Warn (not fail) when ``config`` differs from the checkpoint's."""
    if config.digest() != ckpt.config.digest():
        log.warning("config digest differs from the checkpoint's; using the checkpoint's model settings")
        return False
    return True
