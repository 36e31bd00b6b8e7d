"""JSON artifacts and the on-disk corpus directory format.

Calibrated dominant sets persist as JSON (full-precision floats, key-sorted,
so identical inputs serialize byte-identically). A corpus lives in a
directory of FAST1 tensors named q_<layer>_<head>_<sample>.fast,
k_<...>.fast, and optional v_<...>.fast, described by a manifest.json with
the head dimension, frequency base, query positions, and the chunk layout
("paired" or "half-split"; half-split queries and keys are permuted to
paired-adjacent on load). All writes are atomic: temp file, then rename.
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile

import numpy as np

from .agreement import mean_ca
from .calibration import CalibrationCorpus, DominantSet, HeadId
from .harness import PlantedSpec
from .rope import RopeConfig
from .scores import HeadSample
from .tensorfile import half_split_to_paired, read_tensor, write_tensor

MANIFEST_NAME = "manifest.json"
LAYOUTS = ("paired", "half-split")
_TENSOR_RE = re.compile(r"^([qkv])_(\d+)_(\d+)_(\d+)\.fast$")


class ValidationError(ValueError):
    """An artifact violates its schema; the message carries the JSON path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _write_text_atomic(path, text: str) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    """Write JSON deterministically: sorted keys, two-space indent, full
    round-trip float precision, trailing newline."""
    _write_text_atomic(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def dominant_to_json(ds: DominantSet) -> dict:
    return {
        "config": {
            "d": ds.cfg.head_dim,
            "base": ds.cfg.base,
            "n_tip": ds.n_tip,
            "window": ds.window,
        },
        "heads": {
            head.label(): [{"chunk": c, "mean_ca": v} for c, v in pairs]
            for head, pairs in ds.entries.items()
        },
        "provenance": ds.provenance,
    }


def save_dominant(path, ds: DominantSet) -> None:
    ds.validate()
    write_json(path, dominant_to_json(ds))


def _require(obj, key, kinds, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ValidationError(f"{path}.{key}", "missing field")
    val = obj[key]
    if not isinstance(val, kinds) or isinstance(val, bool):
        raise ValidationError(
            f"{path}.{key}", f"expected {kinds}, got {type(val).__name__}"
        )
    return val


def load_dominant(path) -> DominantSet:
    """Load and re-validate a dominant-set artifact.

    Violations raise ValidationError with the JSON path of the offending
    field.
    """
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    config = _require(doc, "config", dict, "$")
    d = _require(config, "d", int, "config")
    base = float(_require(config, "base", (int, float), "config"))
    n_tip = _require(config, "n_tip", int, "config")
    window = _require(config, "window", int, "config")
    try:
        cfg = RopeConfig(head_dim=d, base=base)
    except ValueError as e:
        raise ValidationError("config", str(e))
    if not 1 <= n_tip <= cfg.num_chunks:
        raise ValidationError(
            "config.n_tip", f"{n_tip} out of range [1, {cfg.num_chunks}]"
        )
    if window < 1:
        raise ValidationError("config.window", f"must be >= 1, got {window}")
    heads_doc = _require(doc, "heads", dict, "$")
    entries: dict[HeadId, tuple[tuple[int, float], ...]] = {}
    for label, items in heads_doc.items():
        hpath = f"heads.{label}"
        try:
            head = HeadId.parse(label)
        except ValueError as e:
            raise ValidationError(hpath, str(e))
        if not isinstance(items, list):
            raise ValidationError(hpath, "expected a list of chunk entries")
        if len(items) != n_tip:
            raise ValidationError(hpath, f"expected {n_tip} entries, got {len(items)}")
        pairs = []
        for i, item in enumerate(items):
            chunk = _require(item, "chunk", int, f"{hpath}[{i}]")
            value = float(_require(item, "mean_ca", (int, float), f"{hpath}[{i}]"))
            if not 0 <= chunk < cfg.num_chunks:
                raise ValidationError(
                    f"{hpath}[{i}].chunk", f"{chunk} out of range [0, {cfg.num_chunks})"
                )
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise ValidationError(
                    f"{hpath}[{i}].mean_ca", f"{value} outside [0, 1]"
                )
            pairs.append((chunk, value))
        chunks = [c for c, _ in pairs]
        if len(set(chunks)) != len(chunks):
            raise ValidationError(hpath, "duplicate chunk indices")
        keys = [(-v, c) for c, v in pairs]
        if keys != sorted(keys):
            raise ValidationError(hpath, "entries not sorted by mean_ca desc, chunk asc")
        entries[head] = tuple(pairs)
    return DominantSet(
        cfg=cfg,
        n_tip=n_tip,
        window=window,
        entries=entries,
        provenance=doc.get("provenance", ""),
    )


def _tensor_name(kind: str, head: HeadId, sample: int) -> str:
    return f"{kind}_{head.layer}_{head.head}_{sample}.fast"


def save_corpus(dirpath, corpus: CalibrationCorpus, truth=None) -> None:
    """Write a corpus directory: tensors first, manifest last.

    `truth` optionally maps heads to the planted specs that generated them;
    it is embedded in the manifest so recovery experiments can replay it.
    """
    dirpath = os.fspath(dirpath)
    os.makedirs(dirpath, exist_ok=True)
    sample_entries = []
    for head in corpus.heads:
        for i, s in enumerate(corpus.samples[head]):
            write_tensor(os.path.join(dirpath, _tensor_name("q", head, i)), s.q)
            write_tensor(os.path.join(dirpath, _tensor_name("k", head, i)), s.keys)
            if s.values is not None:
                write_tensor(
                    os.path.join(dirpath, _tensor_name("v", head, i)), s.values
                )
            sample_entries.append(
                {"layer": head.layer, "head": head.head, "sample": i, "q_pos": s.q_pos}
            )
    manifest = {
        "d": corpus.cfg.head_dim,
        "base": corpus.cfg.base,
        "layout": "paired",
        "provenance": corpus.provenance,
        "samples": sample_entries,
    }
    if truth is not None:
        manifest["truth"] = {
            head.label(): {
                "head_dim": spec.head_dim,
                "context_len": spec.context_len,
                "planted": list(spec.planted),
                "important": list(spec.important),
                "amplitude": spec.amplitude,
                "sigma": spec.sigma,
                "seed": spec.seed,
                "n_samples": spec.n_samples,
                "base": spec.base,
            }
            for head, spec in truth.items()
        }
    write_json(os.path.join(dirpath, MANIFEST_NAME), manifest)


def load_corpus(dirpath):
    """Load a corpus directory.

    Returns (corpus, truth_or_None). Every query tensor must have a matching
    key tensor and the manifest must cover every tensor file present.
    """
    dirpath = os.fspath(dirpath)
    manifest_path = os.path.join(dirpath, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise ValidationError("manifest", f"no {MANIFEST_NAME} in {dirpath}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    d = _require(manifest, "d", int, "$")
    base = float(_require(manifest, "base", (int, float), "$"))
    layout = _require(manifest, "layout", str, "$")
    if layout not in LAYOUTS:
        raise ValidationError("layout", f"unknown layout {layout!r}, expected {LAYOUTS}")
    try:
        cfg = RopeConfig(head_dim=d, base=base)
    except ValueError as e:
        raise ValidationError("d", str(e))
    entries = _require(manifest, "samples", list, "$")

    expected_files = {MANIFEST_NAME}
    samples: dict[HeadId, dict[int, HeadSample]] = {}
    for i, entry in enumerate(entries):
        path = f"samples[{i}]"
        head = HeadId(_require(entry, "layer", int, path), _require(entry, "head", int, path))
        sample_idx = _require(entry, "sample", int, path)
        q_pos = _require(entry, "q_pos", int, path)
        q_name = _tensor_name("q", head, sample_idx)
        k_name = _tensor_name("k", head, sample_idx)
        v_name = _tensor_name("v", head, sample_idx)
        q_file = os.path.join(dirpath, q_name)
        k_file = os.path.join(dirpath, k_name)
        if not os.path.exists(q_file):
            raise ValidationError(path, f"missing tensor file {q_name}")
        if not os.path.exists(k_file):
            raise ValidationError(path, f"query {q_name} has no matching key {k_name}")
        q = read_tensor(q_file)
        keys = read_tensor(k_file)
        values = None
        expected_files.update((q_name, k_name))
        if os.path.exists(os.path.join(dirpath, v_name)):
            values = read_tensor(os.path.join(dirpath, v_name))
            expected_files.add(v_name)
        if layout == "half-split":
            q = half_split_to_paired(q)
            keys = half_split_to_paired(keys)
        try:
            sample = HeadSample(q=q, q_pos=q_pos, keys=keys, values=values)
            sample.check_config(cfg)
        except ValueError as e:
            raise ValidationError(path, str(e))
        samples.setdefault(head, {})[sample_idx] = sample

    for name in os.listdir(dirpath):
        if _TENSOR_RE.match(name) and name not in expected_files:
            raise ValidationError("samples", f"tensor file {name} not in manifest")

    corpus = CalibrationCorpus(
        cfg=cfg,
        samples={
            head: [by_idx[i] for i in sorted(by_idx)] for head, by_idx in samples.items()
        },
        provenance=manifest.get("provenance", ""),
    )
    truth = None
    if "truth" in manifest:
        truth = {}
        for label, spec_doc in manifest["truth"].items():
            head = HeadId.parse(label)
            truth[head] = PlantedSpec(
                head_dim=spec_doc["head_dim"],
                context_len=spec_doc["context_len"],
                planted=tuple(spec_doc["planted"]),
                important=tuple(spec_doc["important"]),
                amplitude=spec_doc["amplitude"],
                sigma=spec_doc["sigma"],
                seed=spec_doc["seed"],
                n_samples=spec_doc["n_samples"],
                base=spec_doc.get("base", 10000.0),
            )
    return corpus, truth


def heatmap_rows(corpus: CalibrationCorpus, window: int):
    """Mean agreement of every chunk for every head.

    Returns (labels, matrix) where matrix[i, j] is the mean agreement of
    chunk j for the head labeled labels[i].
    """
    labels = [head.label() for head in corpus.heads]
    matrix = np.array(
        [
            [
                mean_ca(corpus.samples[head], c, window, corpus.cfg)
                for c in range(corpus.cfg.num_chunks)
            ]
            for head in corpus.heads
        ],
        dtype=np.float64,
    )
    return labels, matrix


def write_heatmap_csv(path, labels, matrix) -> None:
    """Agreement heatmap as CSV: one row per head, one column per chunk,
    cells to four decimals."""
    matrix = np.asarray(matrix, dtype=np.float64)
    lines = ["head," + ",".join(str(c) for c in range(matrix.shape[1]))]
    for label, row in zip(labels, matrix):
        lines.append(label + "," + ",".join(f"{v:.4f}" for v in row))
    _write_text_atomic(path, "\n".join(lines) + "\n")
