"""Run directory layout and file formats.

A training run directory holds::

    config.cfg          flat key = value snapshot of the TrainConfig
    metrics.csv         one row per epoch, columns listed in metrics_columns()
    final_output.json   p_g, images, mean image and generator angles at the end
    checkpoints/epoch_NNNN/{generator.json, disc.txt}
    manifest.json       config, seeds, data source, timestamps, artifact paths

All floats are written with ``repr`` (shortest round-trip form), so tables
are reproducible bit for bit.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .discriminator import save_checkpoint
from .errors import DatasetParseError

OUTPUT_FORMAT = "dualpqc-generator-output v1"
MANIFEST_FORMAT = "dualpqc-run-manifest v1"
RUN_FILES = ("config.cfg", "metrics.csv", "final_output.json", "manifest.json")


def metrics_columns(n: int) -> list:
    dim = 2**n
    cols = ["epoch", "loss_g", "loss_d", "penalty", "kl_mean", "kl_mean_reverse", "disc_updates", "gen_updates"]
    cols += [f"p_g_{i}" for i in range(dim)]
    cols += [f"mean_{j}" for j in range(dim)]
    cols += [f"kl_set{s}_img{i}" for s in range(dim) for i in range(dim)]
    return cols


def metrics_row(record) -> list:
    row = [record.epoch, record.loss_g, record.loss_d, record.penalty, record.kl_mean, record.kl_mean_reverse]
    row += [record.disc_updates, record.gen_updates]
    row += list(record.p_g) + list(record.mean_image) + list(np.ravel(record.image_kl))
    return [v if isinstance(v, int) else repr(float(v)) for v in row]


class MetricsWriter:
    def __init__(self, path, n: int):
        self.path = Path(path)
        self.path.write_text(",".join(metrics_columns(n)) + "\n")

    def append(self, record):
        with self.path.open("a") as fh:
            fh.write(",".join(str(v) for v in metrics_row(record)) + "\n")


def read_metrics(path) -> list:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_generator_output(path, n, output, mean, params) -> None:
    doc = {
        "format": OUTPUT_FORMAT,
        "n": n,
        "p_g": [float(v) for v in output.p_g],
        "images": [[float(v) for v in row] for row in output.images],
        "mean_image": [float(v) for v in mean],
        "phi1": [float(v) for v in params.phi1],
        "phi2": [float(v) for v in params.phi2],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_generator_output(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != OUTPUT_FORMAT:
        raise DatasetParseError(f"{path}: unrecognized generator output format {doc.get('format')!r}")
    for key in ("p_g", "images", "phi1", "phi2"):
        doc[key] = np.asarray(doc[key], dtype=float)
    return doc


def write_checkpoint(run_dir, epoch, gen, disc) -> Path:
    ck = Path(run_dir) / "checkpoints" / f"epoch_{epoch:04d}"
    ck.mkdir(parents=True, exist_ok=True)
    (ck / "generator.json").write_text(
        json.dumps({"epoch": epoch, "phi1": gen.phi1.tolist(), "phi2": gen.phi2.tolist()}) + "\n"
    )
    save_checkpoint(disc, ck / "disc.txt")
    return ck


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, config_text, data_source, started, finished, artifacts) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "code_version": __version__,
        "config": config_text,
        "data": data_source,
        "started": started,
        "finished": finished,
        "artifacts": artifacts,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MANIFEST_FORMAT:
        raise DatasetParseError(f"{path}: not a run manifest")
    return doc
