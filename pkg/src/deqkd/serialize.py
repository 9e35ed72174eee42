"""Canonical report serialization: stable key order, fixed float formatting.

Reports must be byte-identical across processes and runs, so floats are
rendered with 9 significant digits, dictionaries keep construction order, and
nothing non-deterministic (timestamps, paths, hosts) enters the document.
"""

from __future__ import annotations

import io
import math

from . import __version__
from .security import SecurityReport

ARTIFACT_VERSION = f"deqkd {__version__}"

_PAIR_NAMES = (
    "A1B1", "A1B2", "A1B3",
    "A2B1", "A2B2", "A2B3",
    "A3B1", "A3B2", "A3B3",
)


def _fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"report floats must be finite, got {x!r}")
    if x == 0.0:
        x = 0.0  # normalize -0.0
    return format(x, ".9g")


def _emit(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt_float(obj))
    elif isinstance(obj, str):
        out.append('"')
        for ch in obj:
            if ch == '"':
                out.append('\\"')
            elif ch == "\\":
                out.append("\\\\")
            elif ord(ch) < 0x20:
                out.append(f"\\u{ord(ch):04x}")
            else:
                out.append(ch)
        out.append('"')
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(",")
            _emit(str(key), out)
            out.append(":")
            _emit(value, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, value in enumerate(obj):
            if i:
                out.append(",")
            _emit(value, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} canonically")


def canonical_json(obj) -> str:
    """Deterministic JSON text: insertion-ordered keys, '.9g' floats, no whitespace."""
    out: list = []
    _emit(obj, out)
    out.append("\n")
    return "".join(out)


def security_report_dict(report: SecurityReport) -> dict:
    doc = {
        "e_values": [None if v is None else float(v) for v in report.e_values],
        "e_stderr": [None if v is None else float(v) for v in report.e_stderr],
        "bell_s": None if report.bell_s is None else float(report.bell_s),
        "bell_stderr": None if report.bell_stderr is None else float(report.bell_stderr),
        "qber": None if report.qber is None else float(report.qber),
        "verdict": report.verdict,
        "efficiency": None if report.efficiency is None else float(report.efficiency),
        "counts": {
            "coincidences": report.coincidences,
            "sifted": report.sifted,
            "revealed": report.revealed,
            "key_length": report.key_length,
            "pairs": [
                {"pair": name, "c_plus": c.c_plus, "c_minus": c.c_minus}
                for name, c in zip(_PAIR_NAMES, report.cell_counts)
            ],
        },
    }
    return doc


def session_report_doc(config, report: SecurityReport) -> dict:
    """The canonical session report: version, config echo, security summary."""
    doc = {"version": ARTIFACT_VERSION, "config": config.echo()}
    doc.update(security_report_dict(report))
    return doc


def baseline_report_doc(baseline) -> dict:
    """Report for the matching-settings reference protocol."""
    return {
        "version": ARTIFACT_VERSION,
        "config": baseline.config.echo(),
        "raw_key_fraction": None if baseline.raw_key_fraction is None
        else float(baseline.raw_key_fraction),
        "qber": None if baseline.qber is None else float(baseline.qber),
        "counts": {
            "rounds": baseline.rounds,
            "coincidences": baseline.coincidences,
            "key_rounds": baseline.key_rounds,
            "key_length": len(baseline.key_a),
        },
    }


def records_csv(records) -> str:
    """Per-round export: settings, detection flags, readout triples, reveal flag."""
    buf = io.StringIO()
    buf.write("round_id,setting_a,setting_b,detected_a,detected_b,"
              "oa1,oa2,oa3,ob1,ob2,ob3,revealed\n")
    for rec in records:
        oa = rec.outcomes_a if rec.outcomes_a is not None else ("", "", "")
        ob = rec.outcomes_b if rec.outcomes_b is not None else ("", "", "")
        buf.write(
            f"{rec.round_id},{rec.setting_a.value},{rec.setting_b.value},"
            f"{int(rec.detected_a)},{int(rec.detected_b)},"
            f"{oa[0]},{oa[1]},{oa[2]},{ob[0]},{ob[1]},{ob[2]},{int(rec.revealed)}\n"
        )
    return buf.getvalue()
