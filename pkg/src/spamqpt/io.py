"""File formats: frames and estimates as JSON, counts as CSV.

Hilbert-Schmidt vectors are written in the normalized generalized Gell-Mann
basis with the identity first; for a qubit the order is ``(1, X, Y, Z)/sqrt 2``.
Probabilities are never stored, only integer counts and shot totals.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DimensionError, ShapeMismatchError
from .tomo import Estimate, Frame, ProbMatrix

FRAME_FORMAT = "spamqpt-frame/1"
ESTIMATE_FORMAT = "spamqpt-estimate/1"
BASIS_DOC = "normalized generalized Gell-Mann, identity first; d=2: (I, X, Y, Z)/sqrt(2)"
COUNT_COLUMNS = ("prep_label", "basis_label", "outcome_label", "counts", "shots")


class ParseError(ValueError):
    """Input file is malformed."""


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def header_line(cfg_hash: str, seed) -> str:
    return f"spamqpt {__version__} config_hash={cfg_hash} base_seed={seed}"


def meta(cfg_hash: str, seed) -> dict:
    return {"tool": "spamqpt", "version": __version__, "config_hash": cfg_hash, "base_seed": seed}


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def frame_to_dict(frame: Frame) -> dict:
    return {
        "format": FRAME_FORMAT,
        "dim": frame.dim,
        "basis": BASIS_DOC,
        "effects": {"labels": list(frame.effect_labels), "vectors": frame.m0.tolist()},
        "states": {"labels": list(frame.state_labels), "vectors": frame.s0.T.tolist()},
    }


def write_frame(frame: Frame, path) -> None:
    Path(path).write_text(json.dumps(frame_to_dict(frame), indent=2) + "\n")


def read_frame(path) -> Frame:
    try:
        raw = json.loads(Path(path).read_text())
        effects, states = raw["effects"], raw["states"]
        m0 = np.array(effects["vectors"], dtype=float)
        s0 = np.array(states["vectors"], dtype=float).T
        e_labels, s_labels = effects["labels"], states["labels"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"cannot read frame file {path}: {exc}") from exc
    try:
        return Frame(m0, s0, e_labels, s_labels)
    except DimensionError as exc:
        raise ParseError(f"frame file {path} is inconsistent: {exc}") from exc


def counts_rows(table: ProbMatrix, outcome_pairs: dict):
    """Rows of a counts file from a sampled table.

    ``outcome_pairs`` maps each basis label to its two outcome labels.
    """
    if table.shots is None or not np.all(np.isfinite(table.shots)):
        raise ValueError("only finite-shot data can be written as counts")
    rows = []
    for j, prep in enumerate(table.col_labels):
        for basis, outcomes in outcome_pairs.items():
            for o in outcomes:
                i = table.row_labels.index(o)
                n = int(table.shots[i, j])
                rows.append((prep, basis, o, int(round(table.values[i, j] * n)), n))
    return rows


def write_counts(table: ProbMatrix, outcome_pairs: dict, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUNT_COLUMNS)
        w.writerows(counts_rows(table, outcome_pairs))


def read_counts(path) -> ProbMatrix:
    """Read a counts CSV into a labelled frequency table.

    Rows are outcome labels in order of first appearance, columns are
    preparation labels. Every (outcome, preparation) cell must be present.
    """
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise ParseError(f"cannot read counts file {path}: {exc}") from exc
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or set(COUNT_COLUMNS) - set(reader.fieldnames):
        raise ParseError(f"counts file {path} needs columns {', '.join(COUNT_COLUMNS)}")
    cells = {}
    outcomes, preps = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            k, n = int(row["counts"]), int(row["shots"])
        except (TypeError, ValueError):
            raise ParseError(f"{path}:{lineno}: counts and shots must be integers") from None
        if n < 1 or not 0 <= k <= n:
            raise ParseError(f"{path}:{lineno}: need 0 <= counts <= shots and shots >= 1")
        o, p = row["outcome_label"], row["prep_label"]
        if (o, p) in cells:
            raise ParseError(f"{path}:{lineno}: duplicate entry for outcome {o!r}, prep {p!r}")
        cells[(o, p)] = (k, n)
        if o not in outcomes:
            outcomes.append(o)
        if p not in preps:
            preps.append(p)
    if not cells:
        raise ParseError(f"counts file {path} has no data rows")
    freq = np.empty((len(outcomes), len(preps)))
    shots = np.empty_like(freq)
    for i, o in enumerate(outcomes):
        for j, p in enumerate(preps):
            if (o, p) not in cells:
                raise ShapeMismatchError(f"counts file {path} has no entry for outcome {o!r}, prep {p!r}")
            k, n = cells[(o, p)]
            freq[i, j], shots[i, j] = k / n, n
    return ProbMatrix(freq, shots, outcomes, preps)


def _complex_list(values):
    return [[float(np.real(v)), float(np.imag(v))] for v in values]


def estimate_to_dict(est: Estimate, fidelity: dict | None = None) -> dict:
    out = {
        "method": est.method,
        "gauge_p": est.gauge_p,
        "g_hat": est.g_hat.mat.tolist(),
        "g0_hat": np.asarray(est.g0_hat).tolist(),
        "e_hat": None if est.e_hat is None else est.e_hat.mat.tolist(),
        "m_hat": None if est.m_hat is None else np.asarray(est.m_hat).tolist(),
        "s_hat": None if est.s_hat is None else np.asarray(est.s_hat).tolist(),
        "diagnostics": {
            k: (_complex_list(v) if k == "spectrum" else v) for k, v in est.diagnostics.items()
        },
    }
    if fidelity is not None:
        out["fidelity"] = fidelity
    return out


def read_estimate(path) -> dict:
    raw = json.loads(Path(path).read_text())
    if raw.get("format") != ESTIMATE_FORMAT:
        raise ParseError(f"{path} is not a {ESTIMATE_FORMAT} file")
    return raw
