"""Per-epoch training history and its delimited on-disk form.

The CSV columns are epoch, train_loss, train_acc, val_loss, val_acc, lr,
ce_part, kl_part. Floats are written with repr-level precision so a re-read
table reproduces the original values exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr", "ce_part", "kl_part")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float
    ce_part: float
    kl_part: float

    def __post_init__(self):
        values = [self.train_loss, self.train_acc, self.val_loss, self.val_acc, self.lr, self.ce_part, self.kl_part]
        if any(not math.isfinite(v) for v in values):
            raise ValueError(f"epoch {self.epoch}: history values must be finite, got {values}")


@dataclass
class RunHistory:
    """One record per completed epoch, in order."""

    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        expected = self.records[-1].epoch + 1 if self.records else record.epoch
        if self.records and record.epoch != expected:
            raise ValueError(f"expected epoch {expected}, got {record.epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, RunHistory) and self.records == other.records

    @property
    def final(self) -> EpochRecord:
        if not self.records:
            raise ValueError("history is empty")
        return self.records[-1]

    def best_epoch(self) -> EpochRecord:
        """Best by val accuracy; ties go to lower val loss, then earlier epoch."""
        if not self.records:
            raise ValueError("history is empty")
        return min(self.records, key=lambda r: (-r.val_acc, r.val_loss, r.epoch))

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]


def write_history_csv(history: RunHistory, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for r in history:
            writer.writerow([r.epoch] + [repr(v) for v in _row_values(r)])
    return path


def append_history_csv(record: EpochRecord, path: str | Path) -> None:
    """Append one epoch row, writing the header on first use."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(COLUMNS)
        writer.writerow([record.epoch] + [repr(v) for v in _row_values(record)])


def read_history_csv(path: str | Path) -> RunHistory:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != COLUMNS:
            raise ValueError(f"{path}: expected header {list(COLUMNS)}, got {header}")
        history = RunHistory()
        for row in reader:
            if not row:
                continue
            history.append(
                EpochRecord(
                    epoch=int(row[0]),
                    train_loss=float(row[1]),
                    train_acc=float(row[2]),
                    val_loss=float(row[3]),
                    val_acc=float(row[4]),
                    lr=float(row[5]),
                    ce_part=float(row[6]),
                    kl_part=float(row[7]),
                )
            )
    return history


def render_history_figure(history: RunHistory, path: str | Path) -> Path:
    """Two panels: train/val accuracy (red/blue) and val loss."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not len(history):
        raise ValueError("cannot plot an empty history")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    epochs = [r.epoch for r in history]
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(10, 4))
    ax_acc.plot(epochs, [r.train_acc for r in history], color="red", marker=".", label="train")
    ax_acc.plot(epochs, [r.val_acc for r in history], color="blue", marker=".", label="val")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("video top-1 accuracy")
    ax_acc.set_ylim(-0.02, 1.02)
    ax_acc.legend()
    ax_loss.plot(epochs, [r.val_loss for r in history], color="tab:orange", marker=".")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("val loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _row_values(r: EpochRecord) -> list[float]:
    d = asdict(r)
    return [float(d[c]) for c in COLUMNS[1:]]
