"""Per-epoch training records and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .checkpoint import atomic_write_bytes

HEADER = ("epoch", "phase", "lr", "beta", "gamma", "train_loss", "train_acc", "test_acc",
          "wall_ms", "seed")


@dataclass
class MetricsRecord:
    epoch: int
    phase: int
    lr: float
    beta: float
    gamma: float
    train_loss: float
    train_acc: float
    test_acc: float
    wall_ms: float
    seed: int
    # last epoch of a phase, where the per-phase evaluation also lands
    phase_end: bool = False


def _real(x: float) -> str:
    return f"{x:.6g}"


def format_metrics(records) -> str:
    records = list(records)
    if not records:
        raise ValueError("refusing to write an empty metrics file")
    lines = [",".join(HEADER)]
    for r in records:
        lines.append(",".join([
            str(r.epoch), str(r.phase), _real(r.lr), _real(r.beta), _real(r.gamma),
            _real(r.train_loss), _real(r.train_acc), _real(r.test_acc), _real(r.wall_ms),
            str(r.seed)]))
    return "\n".join(lines) + "\n"


def write_metrics(records, path) -> None:
    atomic_write_bytes(path, format_metrics(records).encode("ascii"))


def parse_metrics(text: str) -> list:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != HEADER:
        raise ValueError(f"metrics header must be {','.join(HEADER)}")
    out = []
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != len(HEADER):
            raise ValueError(f"metrics row has {len(row)} fields: {row}")
        e, ph, lr, b, g, loss, tr, te, ms, seed = row
        out.append(MetricsRecord(int(e), int(ph), float(lr), float(b), float(g), float(loss),
                                 float(tr), float(te), float(ms), int(seed)))
    return out


def read_metrics(path) -> list:
    with open(path, newline="") as fh:
        return parse_metrics(fh.read())
