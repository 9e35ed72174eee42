"""Length-prefixed JSON wire protocol and the three network roles.

Framing: a 4-byte big-endian length prefix followed by one UTF-8 JSON object.
Message types: HELLO, SETTINGS, DETECTIONS, REVEAL_REQUEST, REVEAL, REPORT,
BYE; every message carries the session id derived from the config echo.

The quantum phase is served by the source process acting as a trusted
simulation oracle: each party submits its per-round group choices and receives
its detection flags and readout triples back.  The source therefore learns
both settings before sampling; that is a simulation compromise, documented
loudly, and not part of the adversary model.  The classical sifting plane then
runs peer to peer between Alice and Bob: detection announcement, settings
announcement, reveal of the sacrificed sample, report cross-check.  No
settings announcement travels between the parties before the source has
finished sampling every round.

Both parties draw from the same named substreams an in-process session would
use, so the emitted reports are byte-identical to a local run with the same
seed and config.
"""

from __future__ import annotations

import hashlib
import json
import socket
import struct
import sys
import time
from typing import Dict, List, Optional, Tuple

from . import security
from .observables import Setting
from .protocol import (
    MODE_ENT,
    MODE_PM,
    RngStreams,
    SessionConfig,
    STREAM_REVEAL,
    STREAM_SETTINGS_A,
    STREAM_SETTINGS_B,
    draw_setting,
    mark_reveal,
    run_round,
    sift_lookup,
    stream_rng,
    PAIR_INDEX,
    SiftedRound,
    summarize_sift,
)
from .serialize import ARTIFACT_VERSION, canonical_json, session_report_doc

MSG_HELLO = "HELLO"
MSG_SETTINGS = "SETTINGS"
MSG_DETECTIONS = "DETECTIONS"
MSG_REVEAL_REQUEST = "REVEAL_REQUEST"
MSG_REVEAL = "REVEAL"
MSG_REPORT = "REPORT"
MSG_BYE = "BYE"

SOCKET_TIMEOUT = 60.0
CONNECT_RETRY_WINDOW = 15.0


class WireError(RuntimeError):
    """Connection loss or protocol violation; the session is aborted."""


def session_id(config: SessionConfig) -> str:
    return hashlib.sha256(canonical_json(config.echo()).encode()).hexdigest()[:16]


def send_msg(sock: socket.socket, obj: dict) -> None:
    raw = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    try:
        sock.sendall(struct.pack("!I", len(raw)) + raw)
    except OSError as exc:
        raise WireError(f"send failed: {exc}") from exc


def _recvall(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except OSError as exc:
            raise WireError(f"recv failed: {exc}") from exc
        if not chunk:
            raise WireError("connection closed mid-session")
        buf += chunk
    return buf


def recv_msg(sock: socket.socket) -> dict:
    (length,) = struct.unpack("!I", _recvall(sock, 4))
    try:
        msg = json.loads(_recvall(sock, length).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"malformed message: {exc}") from exc
    if not isinstance(msg, dict) or "type" not in msg or "session_id" not in msg:
        raise WireError("message lacks type or session_id")
    return msg


class MessageLog:
    """Append-only JSONL trace of every message an endpoint sends or receives."""

    def __init__(self, path):
        self._fh = open(path, "a", encoding="utf-8")

    def record(self, direction: str, peer: str, msg: dict) -> None:
        self._fh.write(json.dumps({"dir": direction, "peer": peer, "msg": msg},
                                  separators=(",", ":")) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


class Endpoint:
    def __init__(self, sock: socket.socket, peer: str, sid: str,
                 log: Optional[MessageLog] = None):
        sock.settimeout(SOCKET_TIMEOUT)
        self.sock = sock
        self.peer = peer
        self.sid = sid
        self.log = log

    def send(self, msg_type: str, **payload) -> None:
        msg = {"type": msg_type, "session_id": self.sid, **payload}
        if self.log:
            self.log.record("send", self.peer, msg)
        send_msg(self.sock, msg)

    def recv(self, expect: str) -> dict:
        msg = recv_msg(self.sock)
        if self.log:
            self.log.record("recv", self.peer, msg)
        if msg["session_id"] != self.sid:
            raise WireError(f"session id mismatch from {self.peer}")
        if msg["type"] != expect:
            raise WireError(f"expected {expect} from {self.peer}, got {msg['type']}")
        return msg

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def connect_with_retry(addr: Tuple[str, int]) -> socket.socket:
    deadline = time.monotonic() + CONNECT_RETRY_WINDOW
    while True:
        try:
            return socket.create_connection(addr, timeout=SOCKET_TIMEOUT)
        except OSError as exc:
            if time.monotonic() >= deadline:
                raise WireError(f"cannot connect to {addr}: {exc}") from exc
            time.sleep(0.05)


def _check_round_ids(ids, rounds: int, context: str) -> None:
    for rid in ids:
        if not isinstance(rid, int) or not 0 <= rid < rounds:
            raise WireError(f"{context} references unknown round id {rid!r}")


def _hello_payload(config: SessionConfig, role: str) -> dict:
    return {"role": role, "config": config.echo(), "version": ARTIFACT_VERSION}


def _verify_hello(msg: dict, config: SessionConfig, expected_role: str) -> None:
    if msg.get("role") != expected_role:
        raise WireError(f"expected HELLO from {expected_role}, got {msg.get('role')!r}")
    if msg.get("config") != config.echo():
        raise WireError("peer config echo does not match this process's config")


# ---------------------------------------------------------------------------
# Source role: trusted oracle for the quantum phase.

def serve_source(config: SessionConfig, listen_addr: Tuple[str, int],
                 log: Optional[MessageLog] = None) -> None:
    """Accept both parties, sample every round on their settings, return outcomes."""
    if config.mode not in (MODE_ENT, MODE_PM):
        raise WireError(f"network mode supports {MODE_ENT!r} and {MODE_PM!r} only")
    sid = session_id(config)
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind(listen_addr)
    server.listen(2)
    server.settimeout(SOCKET_TIMEOUT)
    endpoints: Dict[str, Endpoint] = {}
    settings: Dict[str, List[int]] = {}
    try:
        while len(endpoints) < 2:
            try:
                conn, _ = server.accept()
            except OSError as exc:
                raise WireError(f"accept failed: {exc}") from exc
            ep = Endpoint(conn, "party", sid, log)
            hello = ep.recv(MSG_HELLO)
            role = hello.get("role")
            if role not in ("alice", "bob") or role in endpoints:
                raise WireError(f"unexpected HELLO role {role!r}")
            _verify_hello(hello, config, role)
            ep.peer = role
            msg = ep.recv(MSG_SETTINGS)
            ids = msg.get("round_ids", [])
            labels = msg.get("settings", [])
            if len(ids) != config.rounds or len(labels) != config.rounds:
                raise WireError(f"{role} submitted {len(ids)} settings, expected {config.rounds}")
            _check_round_ids(ids, config.rounds, "SETTINGS")
            if ids != list(range(config.rounds)):
                raise WireError("settings must cover every round in order")
            prefix = "A" if role == "alice" else "B"
            if any(not isinstance(s, str) or len(s) != 2 or s[0] != prefix or s[1] not in "123"
                   for s in labels):
                raise WireError(f"{role} submitted malformed setting labels")
            endpoints[role] = ep
            settings[role] = [int(s[1]) - 1 for s in labels]

        streams = RngStreams.from_seed(config.seed)
        channel_cfg = config.channel()
        records = [
            run_round(config.mode, channel_cfg, streams, rid,
                      settings["alice"][rid], settings["bob"][rid])
            for rid in range(config.rounds)
        ]
        for role, ep in endpoints.items():
            if role == "alice":
                detected = [r.round_id for r in records if r.detected_a]
                outcomes = [list(r.outcomes_a) for r in records if r.detected_a]
            else:
                detected = [r.round_id for r in records if r.detected_b]
                outcomes = [list(r.outcomes_b) for r in records if r.detected_b]
            ep.send(MSG_DETECTIONS, round_ids=detected, outcomes=outcomes)
            ep.send(MSG_BYE)
    finally:
        for ep in endpoints.values():
            ep.close()
        server.close()


# ---------------------------------------------------------------------------
# Party roles: quantum phase against the source, then peer-to-peer sifting.

def _quantum_phase(config: SessionConfig, role: str, source_addr,
                   my_settings: List[int], log) -> Dict[int, tuple]:
    prefix = "A" if role == "alice" else "B"
    sid = session_id(config)
    ep = Endpoint(connect_with_retry(source_addr), "source", sid, log)
    try:
        ep.send(MSG_HELLO, **_hello_payload(config, role))
        ep.send(
            MSG_SETTINGS,
            round_ids=list(range(config.rounds)),
            settings=[f"{prefix}{i + 1}" for i in my_settings],
        )
        det = ep.recv(MSG_DETECTIONS)
        _check_round_ids(det.get("round_ids", []), config.rounds, "DETECTIONS")
        if len(det.get("round_ids", [])) != len(det.get("outcomes", [])):
            raise WireError("DETECTIONS ids and outcomes lengths differ")
        ep.recv(MSG_BYE)
    finally:
        ep.close()
    return {rid: tuple(out) for rid, out in zip(det["round_ids"], det["outcomes"])}


def _party_report(config: SessionConfig, role: str, coincidences: List[int],
                  settings_a: Dict[int, Setting], settings_b: Dict[int, Setting],
                  own_outcomes: Dict[int, tuple], peer_reveals: Dict[int, tuple],
                  revealed_ids: List[int]):
    """Build the sifted view one party can see; returns (report, key_bits)."""
    revealed_set = set(revealed_ids)
    sifted = []
    key_bits = []
    for rid in coincidences:
        sa, sb = settings_a[rid], settings_b[rid]
        a_idx, b_idx, sign = sift_lookup(sa, sb)
        mine = own_outcomes[rid]
        theirs = peer_reveals.get(rid)
        if role == "alice":
            oa, ob = mine, theirs
        else:
            oa, ob = theirs, mine
        bit_a = (1 + oa[a_idx]) // 2 if oa is not None else None
        bit_b = (1 + sign * ob[b_idx]) // 2 if ob is not None else None
        product = oa[a_idx] * ob[b_idx] if oa is not None and ob is not None else None
        revealed = rid in revealed_set
        sifted.append(SiftedRound(
            round_id=rid,
            pair=PAIR_INDEX[(sa, sb)],
            product=product,
            bit_a=bit_a,
            bit_b=bit_b,
            revealed=revealed,
        ))
        if not revealed:
            key_bits.append(str(bit_a if role == "alice" else bit_b))
    cells, mismatches, total, revealed_n, n_sifted = summarize_sift(sifted)
    report = security.build_report(
        cell_counts=cells,
        qber_mismatches=mismatches,
        qber_total=total,
        coincidences=n_sifted,
        sifted=n_sifted,
        revealed=revealed_n,
        key_length=len(key_bits),
        threshold=config.threshold,
    )
    return report, "".join(key_bits)


def _classical_plane(config: SessionConfig, role: str, ep: Endpoint,
                     my_detected: Dict[int, tuple], my_settings: List[int],
                     withhold_reveal: bool = False) -> dict:
    """Peer-to-peer sifting; Alice initiates every exchange, Bob mirrors it."""
    prefix, peer_prefix = ("A", "B") if role == "alice" else ("B", "A")
    initiator = role == "alice"

    def exchange(msg_type: str, **payload) -> dict:
        if initiator:
            ep.send(msg_type, **payload)
            return ep.recv(msg_type)
        msg = ep.recv(msg_type)
        ep.send(msg_type, **payload)
        return msg

    hello = exchange(MSG_HELLO, **_hello_payload(config, role))
    _verify_hello(hello, config, "bob" if initiator else "alice")

    my_ids = sorted(my_detected)
    peer_det = exchange(MSG_DETECTIONS, round_ids=my_ids)
    _check_round_ids(peer_det.get("round_ids", []), config.rounds, "DETECTIONS")
    peer_ids = peer_det["round_ids"]

    my_labels = [f"{prefix}{my_settings[rid] + 1}" for rid in my_ids]
    peer_settings_msg = exchange(MSG_SETTINGS, round_ids=my_ids, settings=my_labels)
    _check_round_ids(peer_settings_msg.get("round_ids", []), config.rounds, "SETTINGS")
    if len(peer_settings_msg["round_ids"]) != len(peer_settings_msg["settings"]):
        raise WireError("SETTINGS ids and labels lengths differ")
    try:
        peer_settings = {
            rid: Setting(label)
            for rid, label in zip(peer_settings_msg["round_ids"], peer_settings_msg["settings"])
        }
    except ValueError as exc:
        raise WireError(f"malformed peer setting label: {exc}") from exc
    if any(s.party != peer_prefix for s in peer_settings.values()):
        raise WireError("peer announced settings for the wrong party")

    coincidences = sorted(set(my_ids) & set(peer_ids))

    # Alice owns the reveal substream and selects the sacrificed sample.
    if initiator:
        rng = stream_rng(config.seed, STREAM_REVEAL)
        revealed_ids = [rid for rid in coincidences
                        if mark_reveal(rng, config.reveal_frac)]
        ep.send(MSG_REVEAL_REQUEST, round_ids=revealed_ids)
    else:
        req = ep.recv(MSG_REVEAL_REQUEST)
        _check_round_ids(req.get("round_ids", []), config.rounds, "REVEAL_REQUEST")
        revealed_ids = req["round_ids"]
        if not set(revealed_ids) <= set(coincidences):
            raise WireError("REVEAL_REQUEST references non-coincidence rounds")

    my_reveal_ids = [] if withhold_reveal else list(revealed_ids)
    my_reveal_out = [list(my_detected[rid]) for rid in my_reveal_ids]
    peer_reveal_msg = exchange(MSG_REVEAL, round_ids=my_reveal_ids, outcomes=my_reveal_out)
    if not set(peer_reveal_msg.get("round_ids", [])) <= set(revealed_ids):
        raise WireError("REVEAL references rounds that were not requested")
    if len(peer_reveal_msg["round_ids"]) != len(peer_reveal_msg.get("outcomes", [])):
        raise WireError("REVEAL ids and outcomes lengths differ")
    peer_reveals = {
        rid: tuple(out)
        for rid, out in zip(peer_reveal_msg["round_ids"], peer_reveal_msg["outcomes"])
    }

    if role == "alice":
        settings_a = {rid: Setting(f"A{my_settings[rid] + 1}") for rid in coincidences}
        settings_b = peer_settings
    else:
        settings_a = peer_settings
        settings_b = {rid: Setting(f"B{my_settings[rid] + 1}") for rid in coincidences}
    report, _key = _party_report(
        config, role, coincidences, settings_a, settings_b,
        my_detected, peer_reveals, revealed_ids,
    )
    doc = session_report_doc(config, report)
    peer_report = exchange(MSG_REPORT, report=doc)
    if peer_report.get("report") != doc:
        print(f"deqkd: warning: {role}: peer report differs from local report",
              file=sys.stderr)
    exchange(MSG_BYE)
    return doc


def run_party(config: SessionConfig, role: str, source_addr,
              peer_addr=None, listen_addr=None,
              log: Optional[MessageLog] = None, withhold_reveal: bool = False) -> dict:
    """Run one communicating party end to end; returns the report document."""
    if config.mode not in (MODE_ENT, MODE_PM):
        raise WireError(f"network mode supports {MODE_ENT!r} and {MODE_PM!r} only")
    if role == "alice":
        settings_stream = stream_rng(config.seed, STREAM_SETTINGS_A)
    elif role == "bob":
        settings_stream = stream_rng(config.seed, STREAM_SETTINGS_B)
    else:
        raise ValueError(f"unknown party role {role!r}")
    my_settings = [draw_setting(settings_stream) for _ in range(config.rounds)]

    # Bob opens his classical-plane listener before the quantum phase so
    # Alice's connect cannot race his source exchange.
    server = None
    if role == "bob":
        if listen_addr is None:
            raise ValueError("bob requires a listen address")
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind(listen_addr)
        server.listen(1)
        server.settimeout(SOCKET_TIMEOUT)

    try:
        my_detected = _quantum_phase(config, role, source_addr, my_settings, log)
        sid = session_id(config)
        if role == "alice":
            if peer_addr is None:
                raise ValueError("alice requires a peer address")
            ep = Endpoint(connect_with_retry(peer_addr), "bob", sid, log)
        else:
            try:
                conn, _ = server.accept()
            except OSError as exc:
                raise WireError(f"accept failed: {exc}") from exc
            ep = Endpoint(conn, "alice", sid, log)
        try:
            return _classical_plane(config, role, ep, my_detected, my_settings,
                                    withhold_reveal=withhold_reveal)
        finally:
            ep.close()
    finally:
        if server is not None:
            server.close()
