"""Tab-separated plot data derived from a run summary.

``ratio.tsv``  accuracy against the amplification ratio, per schedule family
``gamma.tsv``  accuracy against the amplification factor, per base schedule
``epoch.tsv``  per-epoch accuracy of the best schedule and the baseline mean

Every file carries the baseline mean as a reference column.
"""
from __future__ import annotations

import json
import os
import re

from ..checkpoint import atomic_write_bytes
from ..metrics import read_metrics


class MissingRunsError(FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing run outputs:\n  " + "\n  ".join(self.missing))


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def _table(header, rows) -> bytes:
    lines = ["\t".join(header)] + ["\t".join(_fmt(v) for v in row) for row in rows]
    return ("\n".join(lines) + "\n").encode()


def load_summary(path) -> dict:
    with open(path) as fh:
        summary = json.load(fh)
    summary["_dir"] = os.path.dirname(os.path.abspath(path))
    return summary


def _epoch_means(summary: dict, entry: dict) -> dict:
    """epoch -> (mean train acc, mean test acc) over the entry's runs."""
    acc = {}
    for run in entry["runs"]:
        for r in read_metrics(os.path.join(summary["_dir"], run["csv"])):
            acc.setdefault(r.epoch, []).append((r.train_acc, r.test_acc))
    return {e: (sum(a for a, _ in v) / len(v), sum(b for _, b in v) / len(v))
            for e, v in sorted(acc.items())}


_GSUFFIX = re.compile(r"_G[^_]+$")


def emit_plot_data(summary, out_dir=None) -> list:
    """Write the plot files next to the summary (or into ``out_dir``); returns their paths."""
    if not isinstance(summary, dict):
        summary = load_summary(summary)
    out_dir = out_dir or summary["_dir"]
    os.makedirs(out_dir, exist_ok=True)
    points = summary["points"]
    missing = []
    for e in points:
        if e["n_runs"] < len(e["seeds"]):
            done = {r["seed"] for r in e["runs"]}
            missing += [f"{e['label']} seed {s}" for s in e["seeds"] if s not in done]
        for run in e["runs"]:
            path = os.path.join(summary["_dir"], run["csv"])
            if not os.path.isfile(path):
                missing.append(path)
    if missing:
        raise MissingRunsError(missing)

    base = summary["baseline"]
    ref = (base["mean_test_acc"], base["mean_train_acc"])
    written = []
    stats = ("mean_test_acc", "best_test_acc", "mean_train_acc", "best_train_acc")

    ratio_rows = []
    for e in points:
        if e["kind"] == "S1":
            ratio_rows.append(("S1", e["gamma"], e["mm"], e["label"]))
        elif e["kind"] == "S2":
            ratio_rows.append((f"S2_{e['mm']:g}", e["gamma"], e["nn"], e["label"]))
    if ratio_rows:
        by_label = {e["label"]: e for e in points}
        rows = [(fam, g, x, lab) + tuple(by_label[lab][k] for k in stats) + ref
                for fam, g, x, lab in sorted(ratio_rows)]
        path = os.path.join(out_dir, "ratio.tsv")
        atomic_write_bytes(path, _table(("family", "gamma", "ratio", "label") + stats
                                        + ("baseline_mean_test_acc", "baseline_mean_train_acc"), rows))
        written.append(path)

    groups = {}
    for e in points:
        if e["kind"] in ("S1", "S2"):
            groups.setdefault(_GSUFFIX.sub("", e["label"]), []).append(e)
    gamma_rows = []
    for key, members in groups.items():
        if len({m["gamma"] for m in members}) > 1:
            gamma_rows += [(key, m["gamma"], m["label"]) + tuple(m[k] for k in stats) + ref
                           for m in sorted(members, key=lambda m: m["gamma"])]
    if gamma_rows:
        path = os.path.join(out_dir, "gamma.tsv")
        atomic_write_bytes(path, _table(("base", "gamma", "label") + stats
                                        + ("baseline_mean_test_acc", "baseline_mean_train_acc"),
                                        gamma_rows))
        written.append(path)

    amplified = points[1:] or points[:1]
    best = max(amplified, key=lambda e: e["best_test_acc"])
    base_curve = _epoch_means(summary, points[0])
    best_curve = _epoch_means(summary, best)
    rows = [(ep, best["label"], best_curve[ep][1], best_curve[ep][0],
             base_curve[ep][1], base_curve[ep][0]) for ep in best_curve]
    path = os.path.join(out_dir, "epoch.tsv")
    atomic_write_bytes(path, _table(("epoch", "label", "test_acc", "train_acc",
                                     "baseline_mean_test_acc", "baseline_mean_train_acc"), rows))
    written.append(path)
    return written
