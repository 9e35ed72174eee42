"""Correlation estimates, the Bell-type security statistic, QBER and verdicts.

The statistic sums the nine per-setting-pair correlations with the sign pattern
fixed by the source state: eight terms enter positively and the one
anticorrelated pair (third Alice group with third Bob group) enters negated.
Any local hidden variable assignment caps the statistic at 7 while the ideal
quantum value is 9, so a statistic significantly below threshold flags an
eavesdropper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

LHV_BOUND = 7.0
QUANTUM_MAX = 9.0

VERDICT_CLEAN = "Clean"
VERDICT_EAVESDROPPING = "Eavesdropping"
VERDICT_INCONCLUSIVE = "Inconclusive"


class EmptyCellError(ValueError):
    """Raised when a correlation cell has no revealed samples."""


@dataclass
class CorrelationCounts:
    """Counts of +1 and -1 products of the designated observable pair."""

    c_plus: int = 0
    c_minus: int = 0

    @property
    def total(self) -> int:
        return self.c_plus + self.c_minus

    def add(self, product: int) -> None:
        if product == 1:
            self.c_plus += 1
        elif product == -1:
            self.c_minus += 1
        else:
            raise ValueError(f"product must be +1 or -1, got {product!r}")


def correlation_E(counts: CorrelationCounts) -> float:
    """(c_plus - c_minus) / (c_plus + c_minus); exact +/-1 on deterministic data."""
    if counts.total == 0:
        raise EmptyCellError("no revealed samples for this setting pair")
    return (counts.c_plus - counts.c_minus) / counts.total


def correlation_stderr(counts: CorrelationCounts) -> float:
    """Binomial-approximation standard error of the correlation estimate."""
    n = counts.total
    if n == 0:
        raise EmptyCellError("no revealed samples for this setting pair")
    e = correlation_E(counts)
    return math.sqrt(max(0.0, 1.0 - e * e) / n)


def bell_statistic(e_values: Sequence[float]) -> float:
    """Sum of the first eight correlations minus the ninth (the anticorrelated pair)."""
    if len(e_values) != 9:
        raise ValueError(f"expected 9 correlation values, got {len(e_values)}")
    return float(sum(e_values[:8]) - e_values[8])


def qber(bit_pairs) -> float:
    """Fraction of revealed key positions where the two parties' bits differ."""
    mismatches = 0
    total = 0
    for bit_a, bit_b in bit_pairs:
        total += 1
        mismatches += bit_a != bit_b
    if total == 0:
        raise EmptyCellError("no revealed rounds to estimate the error rate")
    return mismatches / total


def verdict(bell_s: float, threshold: float, stderr: float) -> str:
    """Three-sigma decision: Clean above threshold, Eavesdropping below, else Inconclusive."""
    if not LHV_BOUND < threshold < QUANTUM_MAX:
        raise ValueError(f"threshold must lie in ({LHV_BOUND}, {QUANTUM_MAX}), got {threshold!r}")
    if bell_s - 3.0 * stderr > threshold:
        return VERDICT_CLEAN
    if bell_s + 3.0 * stderr < threshold:
        return VERDICT_EAVESDROPPING
    return VERDICT_INCONCLUSIVE


@dataclass
class SecurityReport:
    """Everything the classical plane derives from one session's revealed sample."""

    e_values: List[Optional[float]]
    e_stderr: List[Optional[float]]
    cell_counts: List[CorrelationCounts]
    bell_s: Optional[float]
    bell_stderr: Optional[float]
    qber: Optional[float]
    verdict: str
    efficiency: Optional[float]  # sifted key bits per coincidence, before reveal
    coincidences: int
    sifted: int
    revealed: int
    key_length: int
    threshold: float = field(default=8.0)


def build_report(
    cell_counts: Sequence[CorrelationCounts],
    qber_mismatches: int,
    qber_total: int,
    coincidences: int,
    sifted: int,
    revealed: int,
    key_length: int,
    threshold: float,
) -> SecurityReport:
    """Assemble the report from per-pair counts; empty cells force Inconclusive."""
    if len(cell_counts) != 9:
        raise ValueError("expected counts for 9 setting pairs")
    e_values: List[Optional[float]] = []
    e_stderr: List[Optional[float]] = []
    for counts in cell_counts:
        if counts.total == 0:
            e_values.append(None)
            e_stderr.append(None)
        else:
            e_values.append(correlation_E(counts))
            e_stderr.append(correlation_stderr(counts))
    if any(v is None for v in e_values):
        bell_s = None
        bell_stderr = None
        final_verdict = VERDICT_INCONCLUSIVE
    else:
        bell_s = bell_statistic(e_values)
        bell_stderr = math.sqrt(sum(s * s for s in e_stderr))
        final_verdict = verdict(bell_s, threshold, bell_stderr)
    qber_value = qber_mismatches / qber_total if qber_total else None
    efficiency = sifted / coincidences if coincidences else None
    return SecurityReport(
        e_values=e_values,
        e_stderr=e_stderr,
        cell_counts=list(cell_counts),
        bell_s=bell_s,
        bell_stderr=bell_stderr,
        qber=qber_value,
        verdict=final_verdict,
        efficiency=efficiency,
        coincidences=coincidences,
        sifted=sifted,
        revealed=revealed,
        key_length=key_length,
        threshold=threshold,
    )


def efficiency_report(session, baseline) -> dict:
    """Raw key bits per coincidence for both protocols plus their ratio."""
    if not session.report.coincidences:
        raise ValueError("session has no coincidences")
    if not baseline.coincidences:
        raise ValueError("baseline has no coincidences")
    ours = session.report.efficiency
    base = baseline.raw_key_fraction
    if not base:
        raise ValueError("baseline produced no key rounds")
    return {"ours": ours, "baseline": base, "ratio": ours / base}
