"""Command line interface: in-process runs, network roles, group dumps, sweeps.

Exit codes: 0 success, 1 configuration error, 2 runtime or I/O failure,
3 aborted network session.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .channel import EVE_STRATEGIES
from .observables import groups_as_dict
from .protocol import (
    MODE_EKERT,
    MODE_ENT,
    MODES,
    SessionConfig,
    run_ekert_baseline,
    run_session,
)
from .serialize import (
    baseline_report_doc,
    canonical_json,
    records_csv,
    session_report_doc,
)
from .wire import MessageLog, WireError, run_party, serve_source

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ABORTED = 3

SESSION_DEFAULTS = dict(
    mode=MODE_ENT, rounds=100_000, seed=1, eta=1.0, pauli_p=0.0, eve="none",
    noise_after_eve=False, reveal_frac=0.1, threshold=8.0,
)


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise ConfigError(message)


@dataclass
class Config:
    """Fully resolved invocation: subcommand, session parameters, plumbing."""

    command: str
    session: Optional[SessionConfig] = None
    out: str = "report.json"
    csv: Optional[str] = None
    role: str = "none"
    listen: Optional[Tuple[str, int]] = None
    source: Optional[Tuple[str, int]] = None
    peer: Optional[Tuple[str, int]] = None
    msg_log: Optional[str] = None
    withhold_reveal: bool = False
    sweep_param: Optional[str] = None
    sweep_from: float = 0.0
    sweep_to: float = 0.0
    sweep_steps: int = 0


def _add_session_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="JSON file with defaults for any session flag")
    parser.add_argument("--mode", choices=MODES, default=None,
                        help="protocol mode (default ent)")
    parser.add_argument("--rounds", type=int, default=None,
                        help="emitted pairs per session (default 100000)")
    parser.add_argument("--seed", type=int, default=None,
                        help="64-bit session seed (default 1)")
    parser.add_argument("--eta", type=float, default=None,
                        help="per-photon detection probability (default 1.0)")
    parser.add_argument("--pauli-p", type=float, default=None,
                        help="per-qubit depolarizing probability (default 0)")
    parser.add_argument("--eve", choices=EVE_STRATEGIES, default=None,
                        help="eavesdropping strategy (default none)")
    parser.add_argument("--noise-after-eve", action="store_true", default=None,
                        help="apply channel noise after Eve instead of before")
    parser.add_argument("--reveal-frac", type=float, default=None,
                        help="fraction of sifted rounds sacrificed for the test (default 0.1)")
    parser.add_argument("--threshold", type=float, default=None,
                        help="detection threshold on the Bell statistic (default 8.0)")


def build_parser() -> _Parser:
    parser = _Parser(prog="deqkd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[], help="run a session in process")
    _add_session_args(p_run)
    p_run.add_argument("--out", default="report.json", help="report path (default report.json)")
    p_run.add_argument("--csv", default=None, metavar="FILE",
                       help="also export per-round records as CSV")

    p_net = sub.add_parser("net", help="run one role of the three-process network mode")
    _add_session_args(p_net)
    p_net.add_argument("--role", choices=("alice", "bob", "source"), required=True)
    p_net.add_argument("--listen", default=None, metavar="HOST:PORT",
                       help="listen address (source; bob's classical plane)")
    p_net.add_argument("--source", default=None, metavar="HOST:PORT",
                       help="source address (alice, bob)")
    p_net.add_argument("--peer", default=None, metavar="HOST:PORT",
                       help="bob's classical-plane address (alice)")
    p_net.add_argument("--out", default="report.json", help="report path (parties)")
    p_net.add_argument("--msg-log", default=None, metavar="FILE",
                       help="append a JSONL trace of every wire message")
    p_net.add_argument("--withhold-reveal", action="store_true", default=False,
                       help="debug: never reveal outcomes (bob only)")

    p_dump = sub.add_parser("dump-groups", help="dump the six observable groups as JSON")
    p_dump.add_argument("--out", default=None, help="write to a file instead of stdout")

    p_sweep = sub.add_parser("sweep", help="sweep a channel parameter, emit CSV of (p, S, QBER)")
    _add_session_args(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=("pauli_p",),
                         help="parameter to sweep")
    p_sweep.add_argument("--from", dest="sweep_from", type=float, required=True)
    p_sweep.add_argument("--to", dest="sweep_to", type=float, required=True)
    p_sweep.add_argument("--steps", dest="sweep_steps", type=int, required=True)
    p_sweep.add_argument("--out", default=None, help="write CSV to a file instead of stdout")
    return parser


def _parse_addr(text: Optional[str], flag: str) -> Optional[Tuple[str, int]]:
    if text is None:
        return None
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ConfigError(f"{flag} expects HOST:PORT, got {text!r}")
    return host, int(port)


def _session_from_args(args) -> SessionConfig:
    values = dict(SESSION_DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--config: cannot read {args.config!r}: {exc}")
        unknown = set(file_values) - set(values)
        if unknown:
            raise ConfigError(f"--config: unknown keys {sorted(unknown)}")
        values.update(file_values)
    for key in values:
        arg = getattr(args, key, None)
        if arg is not None:
            values[key] = arg
    try:
        return SessionConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def parse_config(argv=None) -> Config:
    """Resolve argv plus optional config file into a validated Config."""
    args = build_parser().parse_args(argv)
    cfg = Config(command=args.command)
    if args.command in ("run", "net", "sweep"):
        cfg.session = _session_from_args(args)
    if args.command in ("run", "net"):
        cfg.out = args.out
    if args.command == "run":
        cfg.csv = args.csv
    if args.command == "net":
        cfg.role = args.role
        cfg.listen = _parse_addr(args.listen, "--listen")
        cfg.source = _parse_addr(args.source, "--source")
        cfg.peer = _parse_addr(args.peer, "--peer")
        cfg.msg_log = args.msg_log
        cfg.withhold_reveal = args.withhold_reveal
        if cfg.session.mode == MODE_EKERT:
            raise ConfigError("network mode supports modes ent and pm only")
        if cfg.role == "source" and cfg.listen is None:
            raise ConfigError("role source requires --listen")
        if cfg.role == "alice" and (cfg.source is None or cfg.peer is None):
            raise ConfigError("role alice requires --source and --peer")
        if cfg.role == "bob" and (cfg.source is None or cfg.listen is None):
            raise ConfigError("role bob requires --source and --listen")
        if cfg.withhold_reveal and cfg.role != "bob":
            raise ConfigError("--withhold-reveal applies to role bob only")
    if args.command == "dump-groups":
        cfg.out = args.out
    if args.command == "sweep":
        cfg.sweep_param = args.param
        cfg.sweep_from = args.sweep_from
        cfg.sweep_to = args.sweep_to
        cfg.sweep_steps = args.sweep_steps
        cfg.out = args.out
        if cfg.sweep_steps < 2:
            raise ConfigError("--steps must be at least 2")
        if not 0.0 <= cfg.sweep_from <= cfg.sweep_to <= 1.0:
            raise ConfigError("sweep range must satisfy 0 <= from <= to <= 1")
        if cfg.session.reveal_frac <= 0:
            raise ConfigError("sweep requires reveal_frac > 0 to estimate S")
    return cfg


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _session_summary(doc: dict) -> str:
    bell = doc["bell_s"]
    err = doc["qber"]
    return (
        f"S={'n/a' if bell is None else format(bell, '.3f')} "
        f"QBER={'n/a' if err is None else format(err, '.3f')} "
        f"verdict={doc['verdict']} "
        f"key_bits={doc['counts']['key_length']}"
    )


def cmd_run(cfg: Config) -> int:
    if cfg.session.mode == MODE_EKERT:
        baseline = run_ekert_baseline(cfg.session)
        doc = baseline_report_doc(baseline)
        frac = doc["raw_key_fraction"]
        err = doc["qber"]
        summary = (
            f"raw_key_fraction={'n/a' if frac is None else format(frac, '.4f')} "
            f"QBER={'n/a' if err is None else format(err, '.3f')} "
            f"key_bits={doc['counts']['key_length']}"
        )
    else:
        result = run_session(cfg.session)
        doc = session_report_doc(cfg.session, result.report)
        summary = _session_summary(doc)
        if cfg.csv:
            _write_text(cfg.csv, records_csv(result.records))
    _write_text(cfg.out, canonical_json(doc))
    print(summary)
    return EXIT_OK


def cmd_net(cfg: Config) -> int:
    log = MessageLog(cfg.msg_log) if cfg.msg_log else None
    try:
        if cfg.role == "source":
            serve_source(cfg.session, cfg.listen, log)
            print("source: session served")
            return EXIT_OK
        doc = run_party(
            cfg.session, cfg.role, cfg.source,
            peer_addr=cfg.peer, listen_addr=cfg.listen,
            log=log, withhold_reveal=cfg.withhold_reveal,
        )
        _write_text(cfg.out, canonical_json(doc))
        print(f"{cfg.role}: {_session_summary(doc)}")
        return EXIT_OK
    finally:
        if log:
            log.close()


def cmd_dump_groups(cfg: Config) -> int:
    text = canonical_json(groups_as_dict())
    if cfg.out:
        _write_text(cfg.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(cfg: Config) -> int:
    lines = [f"{cfg.sweep_param},bell_s,qber\n"]
    for step, value in enumerate(np.linspace(cfg.sweep_from, cfg.sweep_to, cfg.sweep_steps)):
        session = replace(cfg.session, pauli_p=float(value), seed=cfg.session.seed + step)
        report = run_session(session).report
        bell = "" if report.bell_s is None else format(report.bell_s, ".9g")
        err = "" if report.qber is None else format(report.qber, ".9g")
        lines.append(f"{format(float(value), '.9g')},{bell},{err}\n")
    text = "".join(lines)
    if cfg.out:
        _write_text(cfg.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "net": cmd_net,
    "dump-groups": cmd_dump_groups,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"deqkd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"deqkd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WireError as exc:
        print(f"deqkd: session aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except OSError as exc:
        print(f"deqkd: i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
