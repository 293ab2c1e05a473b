"""Per-context anomaly thresholds: tau_c = mu_c + lambda * sigma_c.

Statistics are fitted on reconstruction losses of one split (training by
default), with population sigma. A window is anomalous iff its score is
strictly above tau; a score exactly at tau is normal. Contexts with fewer
than two samples are flagged and get no threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingThreshold

GLOBAL_ID = -1
DEFAULT_LAMBDA = 5.0
MIN_SAMPLES = 2


@dataclass(frozen=True)
class ThresholdEntry:
    context_id: int
    n: int
    mu: float
    sigma: float
    tau: float | None   # None when the context was flagged as insufficient


@dataclass
class ThresholdTable:
    lam: float
    fit_split: str
    entries: dict[int, ThresholdEntry] = field(default_factory=dict)

    @property
    def flagged(self) -> tuple[int, ...]:
        return tuple(sorted(c for c, e in self.entries.items()
                            if e.tau is None and c != GLOBAL_ID))

    def tau(self, context_id: int) -> float:
        entry = self.entries.get(context_id)
        if entry is None or entry.tau is None:
            raise MissingThreshold(f"no threshold fitted for context {context_id}")
        return entry.tau

    @property
    def global_tau(self) -> float:
        return self.tau(GLOBAL_ID)

    def classify(self, score: float, context_id: int) -> bool:
        """True iff the score is anomalous under the context threshold."""
        return score > self.tau(context_id)

    def severity(self, score: float, context_id: int) -> float:
        t = self.tau(context_id)
        return (score - t) / t


def _entry(context_id: int, losses: np.ndarray, lam: float) -> ThresholdEntry:
    losses = np.asarray(losses, dtype=np.float64)
    n = int(losses.shape[0])
    if n < MIN_SAMPLES:
        mu = float(losses.mean()) if n else float("nan")
        return ThresholdEntry(context_id, n, mu, float("nan"), None)
    mu = float(losses.mean())
    sigma = float(losses.std())   # population: divide by n
    return ThresholdEntry(context_id, n, mu, sigma, mu + lam * sigma)


def fit(losses_by_context: dict[int, np.ndarray], lam: float = DEFAULT_LAMBDA,
        fit_split: str = "train") -> ThresholdTable:
    """Fit per-context entries plus a global entry over the pooled losses."""
    table = ThresholdTable(lam=lam, fit_split=fit_split)
    pooled = []
    for cid in sorted(losses_by_context):
        losses = np.asarray(losses_by_context[cid], dtype=np.float64)
        table.entries[cid] = _entry(cid, losses, lam)
        pooled.append(losses)
    all_losses = np.concatenate(pooled) if pooled else np.zeros(0)
    table.entries[GLOBAL_ID] = _entry(GLOBAL_ID, all_losses, lam)
    return table


def save_table(path: Path, table: ThresholdTable) -> None:
    """CSV with one row per context plus a 'global' row, full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["context_id", "n", "mu", "sigma", "tau"])
        ordered = sorted(c for c in table.entries if c != GLOBAL_ID)
        for cid in ordered + [GLOBAL_ID]:
            e = table.entries[cid]
            writer.writerow([
                "global" if cid == GLOBAL_ID else cid,
                e.n,
                repr(e.mu),
                repr(e.sigma),
                "" if e.tau is None else repr(e.tau),
            ])
        writer.writerow(["# lambda", repr(table.lam), "fit_split",
                         table.fit_split, ""])


def load_table(path: Path) -> ThresholdTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    lam, fit_split = DEFAULT_LAMBDA, "train"
    entries: dict[int, ThresholdEntry] = {}
    for row in rows[1:]:
        if row[0] == "# lambda":
            lam, fit_split = float(row[1]), row[3]
            continue
        cid = GLOBAL_ID if row[0] == "global" else int(row[0])
        entries[cid] = ThresholdEntry(
            context_id=cid, n=int(row[1]), mu=float(row[2]),
            sigma=float(row[3]), tau=float(row[4]) if row[4] else None)
    table = ThresholdTable(lam=lam, fit_split=fit_split)
    table.entries = entries
    return table
