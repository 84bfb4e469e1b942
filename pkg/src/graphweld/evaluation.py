"""Precision / recall / F1 of predicted alignments against ground truth."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .model import AccountRef

Pair = tuple[AccountRef, AccountRef]


@dataclass(frozen=True)
class Scores:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class EvalReport:
    groups: Mapping[str, Scores]

    @property
    def combined(self) -> Scores:
        return self.groups["all"]

    def __getitem__(self, key: str) -> Scores:
        return self.groups[key]


def _canon(p) -> Pair:
    a, b = AccountRef(*p[0]), AccountRef(*p[1])
    return (a, b) if a.network < b.network else (b, a)


def pair_label(i: int, j: int) -> str:
    return f"{i}-{j}"


def evaluate(predicted: Iterable, truth: Iterable, network_pairs: Sequence[tuple[int, int]]) -> EvalReport:
    """Counts per network pair plus ``"all"``; inputs are iterables of account pairs in any order."""
    pred = {_canon(p) for p in predicted}
    true = {_canon(p) for p in truth}
    groups = {}
    for i, j in network_pairs:
        ps = {p for p in pred if (p[0].network, p[1].network) == (i, j)}
        ts = {p for p in true if (p[0].network, p[1].network) == (i, j)}
        groups[pair_label(i, j)] = Scores(len(ps & ts), len(ps - ts), len(ts - ps))
    groups["all"] = Scores(len(pred & true), len(pred - true), len(true - pred))
    return EvalReport(groups)


REPORT_VERSION = "#graphweld.report\t1"


def format_report(reports: Mapping[str, EvalReport], group_order: Sequence[str]) -> str:
    """Fixed-column table: one row per method, P/R/F1 per dataset grouping."""
    head = f"{'method':<12}" + "".join(f"{g + ' P':>10}{g + ' R':>10}{g + ' F1':>10}" for g in group_order)
    lines = [REPORT_VERSION, head]
    for method, rep in reports.items():
        row = f"{method:<12}"
        for g in group_order:
            s = rep[g]
            row += f"{s.precision:>10.4f}{s.recall:>10.4f}{s.f1:>10.4f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, dict[str, tuple[float, float, float]]]:
    lines = text.splitlines()
    if not lines or lines[0] != REPORT_VERSION:
        raise ValueError("not a graphweld report (bad version line)")
    # header cells are "<group> P", "<group> R", "<group> F1"
    cols = lines[1].split()[1:]
    groups = cols[0::6]
    out = {}
    for line in lines[2:]:
        parts = line.split()
        vals = list(map(float, parts[1:]))
        out[parts[0]] = {g: tuple(vals[3 * k:3 * k + 3]) for k, g in enumerate(groups)}
    return out
