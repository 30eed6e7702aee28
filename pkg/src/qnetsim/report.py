"""Tables and figures from experiment records.

Tables are plain CSV. Figures go through matplotlib's Agg backend so they
render without a display.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import BILOCAL_CLASSICAL_BOUND, BILOCAL_QUANTUM_VALUE, triangle_labelled, triangle_theory  # noqa: E402
from .runner import ExperimentConfig, _entry_vector, num_bits  # noqa: E402

# derived keys copied into the summary table, per experiment
SUMMARY_COLUMNS = {
    "commnet": ["p_win", "sigma_p_win", "sigma_p_win_bootstrap", "certified_entangled", "settings_used", "subset"],
    "star": ["S", "sigma_S", "sigma_S_multinomial", "sigma_S_bootstrap", "violation", "kl_source_independence"],
    "bilocal": ["B", "sigma_B_bootstrap", "classical_bound", "violation"],
    "triangle": ["kl_vs_theory"],
}
MITIGATED_COLUMNS = {
    "commnet": ["p_win", "certified_entangled"],
    "star": ["S", "kl_source_independence"],
    "bilocal": ["B"],
    "triangle": ["kl_vs_theory"],
}


def summary_rows(records: Sequence[dict]) -> list[dict]:
    """One row per record, sorted by (experiment, n, seed)."""
    rows = []
    for rec in records:
        cfg = rec["config"]
        exp = cfg["experiment"]
        row = {
            "experiment": exp,
            "n": cfg.get("n"),
            "shots": cfg.get("shots"),
            "seed": cfg.get("seed"),
            "noise": "none" if cfg.get("noise") is None else "yes",
            "mitigation": cfg.get("mitigation", "none"),
        }
        raw = rec["derived"]["raw"]
        for key in SUMMARY_COLUMNS[exp]:
            row[key] = raw.get(key)
        mit = rec["derived"].get("mitigated")
        if mit is not None:
            for key in MITIGATED_COLUMNS[exp]:
                row[f"mitigated_{key}"] = mit.get(key)
        rows.append(row)
    rows.sort(key=lambda r: (r["experiment"], r["n"] or 0, r["seed"] or 0))
    return rows


def histogram_rows(record: dict) -> list[dict]:
    """(setting, outcome, probability) rows.

    The triangle is reported over the 64 label triples "a b c"; the other
    experiments list every setting's outcome bitstrings.
    """
    config = ExperimentConfig.from_dict(record["config"])
    width = num_bits(config)
    if config.experiment == "triangle":
        p = triangle_labelled(_entry_vector(record["settings"][0], width))
        return [
            {"setting": "", "outcome": f"{a + 1} {b + 1} {c + 1}", "probability": float(p[a, b, c])}
            for a in range(4)
            for b in range(4)
            for c in range(4)
        ]
    rows = []
    for entry in record["settings"]:
        vec = _entry_vector(entry, width)
        for i in range(vec.size):
            rows.append({"setting": entry["setting"], "outcome": format(i, f"0{width}b"), "probability": float(vec[i])})
    return rows


def write_csv(rows: Sequence[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields: list[str] = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    return path


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# figures

def plot_triangle(record: dict, path: str | Path) -> Path:
    """Bar chart of the 64 labelled outcomes against the ideal distribution."""
    config = ExperimentConfig.from_dict(record["config"])
    p = triangle_labelled(_entry_vector(record["settings"][0], num_bits(config))).reshape(-1)
    q = triangle_labelled(triangle_theory()).reshape(-1)
    fig, ax = plt.subplots(figsize=(10, 3.2))
    x = np.arange(64)
    ax.bar(x, p, width=0.8, color="tab:blue", label="simulated")
    ax.step(x, q, where="mid", color="k", lw=1, label="ideal")
    ax.set_xticks(x[::4])
    ax.set_xticklabels([f"{a}{b}1" for a in range(1, 5) for b in range(1, 5)], fontsize=6, rotation=90)
    ax.set_xlabel("outcome abc")
    ax.set_ylabel("probability")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_settings(record: dict, path: str | Path) -> Path:
    """Heat map of p(outcome | setting) for the first 64 settings."""
    config = ExperimentConfig.from_dict(record["config"])
    width = num_bits(config)
    entries = record["settings"][:64]
    mat = np.array([_entry_vector(e, width) for e in entries])
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.18 * len(entries) + 1)))
    im = ax.imshow(mat, aspect="auto", interpolation="nearest", cmap="viridis", vmin=0)
    ax.set_yticks(range(len(entries)))
    ax.set_yticklabels([e["setting"] for e in entries], fontsize=5)
    ax.set_xlabel("outcome index (MSB first)")
    fig.colorbar(im, ax=ax, label="probability")
    return _save(fig, path)


def plot_sweep(rows: Sequence[dict], path: str | Path) -> Path | None:
    """p_win or S against n, with the classical and quantum reference lines."""
    by_exp = {r["experiment"] for r in rows}
    if len(by_exp) != 1 or by_exp & {"bilocal", "triangle"}:
        return _plot_values(rows, path) if rows else None
    exp = by_exp.pop()
    key, sig, lo, hi, ylabel = {
        "commnet": ("p_win", "sigma_p_win", 0.5, 1.0, "winning probability"),
        "star": ("S", "sigma_S", 1.0, math.sqrt(2), "S_N"),
    }[exp]
    n = np.array([r["n"] for r in rows])
    y = np.array([r[key] for r in rows], dtype=float)
    err = np.array([r.get(sig) or r.get(f"{sig}_bootstrap") or 0.0 for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.errorbar(n, y, yerr=err, fmt="o-", capsize=3, label="simulated")
    ax.axhline(lo, color="tab:red", ls="--", lw=1, label="classical")
    ax.axhline(hi, color="k", ls=":", lw=1, label="quantum")
    ax.set_xlabel("n")
    ax.set_ylabel(ylabel)
    ax.set_xticks(n)
    ax.legend(frameon=False)
    return _save(fig, path)


def _plot_values(rows, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    labels, values = [], []
    for r in rows:
        key = {"commnet": "p_win", "star": "S", "bilocal": "B", "triangle": "kl_vs_theory"}[r["experiment"]]
        labels.append(f"{r['experiment']}{'' if r['n'] is None else r['n']}")
        values.append(r.get(key) or 0.0)
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=45, fontsize=7)
    if all(r["experiment"] == "bilocal" for r in rows):
        ax.axhline(BILOCAL_CLASSICAL_BOUND, color="tab:red", ls="--", lw=1, label="bilocal bound")
        ax.axhline(BILOCAL_QUANTUM_VALUE, color="k", ls=":", lw=1, label="quantum")
        ax.set_ylim(BILOCAL_CLASSICAL_BOUND - 3, BILOCAL_QUANTUM_VALUE + 1)
        ax.legend(frameon=False)
    ax.set_ylabel("derived value")
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
