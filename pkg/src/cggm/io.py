"""Data ingestion and result files.

Contingency tables are whitespace-separated counts in lexicographic order
with the LAST variable varying fastest and the first varying slowest (so a
2x2 table reads ``n00 n01 n10 n11``). Case files are CSV with a header row
and ``NA`` for missing values.
"""

import csv
import json
import logging
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .estimators import (
    cramers_v_summary, degree_and_association_summary, edge_inclusion_probs,
    expected_cell_counts, mean_correlation, observed_cell_counts, EmpiricalMarginal,
)
from .rank import ObservedData

log = logging.getLogger(__name__)

SUMMARY_SCHEMA_VERSION = 1
ROCHDALE_NAMES = list("abcdefgh")


def expand_table(counts, levels):
    """Case rows (level codes) for a flat count vector, last variable fastest."""
    counts = np.asarray(counts)
    if counts.ndim != 1 or len(counts) != int(np.prod(levels)):
        raise ValueError(f"expected {int(np.prod(levels))} cells, got {counts.size}")
    if np.any(counts < 0):
        raise ValueError("cell counts must be nonnegative")
    if counts.sum() == 0:
        raise ValueError("table has no observations")
    cells = np.array(np.unravel_index(np.arange(len(counts)), levels)).T
    return np.repeat(cells, counts.astype(np.int64), axis=0)


def parse_contingency_table(path, p=None, levels_per_var=None, names=None):
    """Read a count table into binary/ordinal :class:`ObservedData`."""
    text = Path(path).read_text()
    try:
        counts = np.array([int(tok) for tok in text.split()], dtype=np.int64)
    except ValueError as exc:
        raise ValueError(f"{path}: table entries must be integers ({exc})") from None
    if levels_per_var is None:
        if p is None:
            raise ValueError("need p or levels_per_var")
        levels_per_var = [2] * p
    levels = [int(d) for d in levels_per_var]
    if p is not None and len(levels) != p:
        raise ValueError(f"{len(levels)} level counts given for p={p}")
    if any(d < 2 for d in levels):
        raise ValueError("every variable needs at least 2 levels")
    cases = expand_table(counts, levels)
    kinds = ["binary" if d == 2 else "ordinal" for d in levels]
    return ObservedData(cases.astype(float), kinds, names, levels)


def rochdale():
    """The Rochdale 2^8 table (665 cases, variables a..h)."""
    ref = resources.files("cggm") / "data" / "rochdale.txt"
    with resources.as_file(ref) as path:
        return parse_contingency_table(path, 8, names=ROCHDALE_NAMES)


def write_contingency_table(path, counts, per_line=16):
    counts = list(int(c) for c in counts)
    lines = [" ".join(map(str, counts[i:i + per_line])) for i in range(0, len(counts), per_line)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_case_data(path, kinds=None, levels=None):
    """Read a CSV case file; kinds are inferred unless given per column.

    Inference: a column whose observed values are all nonnegative integers is
    binary (two distinct values 0/1) or ordinal; anything else is continuous.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    p = len(header)
    for k, r in enumerate(body, start=2):
        if len(r) != p:
            raise ValueError(f"{path}: line {k} has {len(r)} fields, expected {p}")
    x = np.full((len(body), p), np.nan)
    for j, r in enumerate(body):
        for v, tok in enumerate(r):
            tok = tok.strip()
            if tok in ("NA", ""):
                continue
            try:
                x[j, v] = float(tok)
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {tok!r} in column "
                                 f"{header[v]}, row {j + 1}") from None
    if kinds is None:
        kinds = []
        for v in range(p):
            col = x[:, v][~np.isnan(x[:, v])]
            integral = len(col) and np.all(col == np.round(col)) and np.all(col >= 0)
            if integral and set(np.unique(col)) <= {0.0, 1.0}:
                kinds.append("binary")
            elif integral:
                kinds.append("ordinal")
            else:
                kinds.append("continuous")
    if len(body) == 1:
        log.warning("%s: a single case imposes no rank constraints", path)
    return ObservedData(x, kinds, header, levels)


# ------------------------------------------------------------- outputs

def _fmt(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_trace(path, traces, append=False):
    """``iteration,chain,edge_count`` rows (iterations are 1-based)."""
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not append:
            w.writerow(["iteration", "chain", "edge_count"])
        for c, tr in enumerate(traces):
            for it, ne in enumerate(tr, start=1):
                w.writerow([it, c, int(ne)])


def write_samples(path, summary):
    """Thinned samples: ``sample``, one 0/1 column per pair ``e_v1_v2`` then
    the strict upper triangle of Upsilon as ``u_v1_v2`` (1-based labels)."""
    p = summary.p
    iu, ju = np.triu_indices(p, 1)
    header = (["sample"] + [f"e_{i + 1}_{j + 1}" for i, j in zip(iu, ju)]
              + [f"u_{i + 1}_{j + 1}" for i, j in zip(iu, ju)])
    rows = []
    for s, (g, u) in enumerate(zip(summary.thinned_graphs, summary.thinned_upsilons)):
        rows.append([s] + [int(b) for b in g] + [float(x) for x in u[iu, ju]])
    _write_rows(path, header, rows)


def write_results(outdir, summary, data, config, chains=None, draws=10_000, bf_threshold=100.0,
                  rng=None, extra=None, cell_stride=1):
    """Write the result files of a run into ``outdir``; returns a dict of paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    names = data.names
    p = data.p
    iu, ju = np.triu_indices(p, 1)
    paths = {}

    probs = edge_inclusion_probs(summary)
    paths["edges"] = out / "edges.csv"
    _write_rows(paths["edges"], ["v1", "v2", "name1", "name2", "inclusion_prob"],
                [[i + 1, j + 1, names[i], names[j], float(probs[i, j])] for i, j in zip(iu, ju)])

    ups = mean_correlation(summary)
    paths["correlation"] = out / "correlation.csv"
    _write_rows(paths["correlation"], [""] + names,
                [[names[i]] + [float(x) for x in ups[i]] for i in range(p)])

    record = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "n": data.n, "p": p, "variables": names, "kinds": data.kinds,
        "config": {k: v for k, v in vars(config).items()},
        "retained_samples": summary.S,
        "thinned_samples": int(len(summary.thinned_upsilons)),
        "mean_edge_count": summary.mean_edge_count,
        "chain_mean_edge_counts": summary.chain_mean_edges,
        "acceptance_rates": summary.acceptance,
    }

    if data.discrete and len(summary.thinned_upsilons):
        marg = EmpiricalMarginal.from_data(data)
        cv = cramers_v_summary(summary, marg)
        paths["cramers_v"] = out / "cramers_v.csv"
        _write_rows(paths["cramers_v"],
                    ["v1", "v2", "name1", "name2", "cramers_v", "prob_h1", "bayes_factor",
                     "above", "below"],
                    [[i + 1, j + 1, names[i], names[j], float(cv.mean[i, j]),
                      float(cv.prob_h1[i, j]), float(cv.bayes_factor[i, j]),
                      int(cv.above[i, j]), int(cv.below[i, j])] for i, j in zip(iu, ju)])
        deg, assoc = degree_and_association_summary(probs, cv.mean, cv.bayes_factor, bf_threshold)

        expected = expected_cell_counts(summary, data, draws=draws, rng=rng, stride=cell_stride)
        observed = observed_cell_counts(data)
        levels = tuple(int(d) for d in data.n_codes)
        cells = np.array(np.unravel_index(np.arange(len(observed)), levels)).T
        paths["cells"] = out / "cells.csv"
        _write_rows(paths["cells"], ["cell", "observed", "expected"],
                    [[" ".join(str(c + 1) for c in cell), int(o), float(e)]
                     for cell, o, e in zip(cells, observed, expected)])
        record["squared_error"] = float(((observed - expected) ** 2).sum())
    else:
        deg, assoc = degree_and_association_summary(probs, np.zeros((p, p)), np.zeros((p, p)),
                                                    bf_threshold)
    paths["degrees"] = out / "degrees.csv"
    _write_rows(paths["degrees"], ["v", "name", "expected_degree", "cumulative_cramers_v"],
                [[v + 1, names[v], float(deg[v]), float(assoc[v])] for v in range(p)])

    if chains is not None:
        paths["trace"] = out / "trace.csv"
        write_trace(paths["trace"], [c.trace for c in chains])
    paths["samples"] = out / "samples.csv"
    write_samples(paths["samples"], summary)
    if extra:
        record.update(extra)
    paths["summary"] = out / "summary.json"
    # JSON has no NaN/inf: round-trip them to null
    record = json.loads(json.dumps(record, default=_json_default), parse_constant=lambda c: None)
    paths["summary"].write_text(json.dumps(record, indent=2, allow_nan=False) + "\n")
    return paths


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
