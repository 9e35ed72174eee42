"""Protocol sessions: pair emission, group measurement, sifting, deterministic keys.

Three modes are supported.  In entanglement mode the source emits the doubly
entangled pair and both parties measure a uniformly random apparatus group; in
prepare-and-measure mode Alice measures her photon at the source, which
prepares photon 2 in the matching conditional state before it crosses the
channel to Bob.  Every coincidence yields exactly one key bit because each
setting combination has one perfectly correlated readout pair.  The third mode
is a reference simulation of the matching-settings protocol (three analyzer
angles per side on a polarization singlet) used only for efficiency
comparisons: there just 2 of 9 setting pairs produce key.

Randomness is split into named substreams derived from the session seed, one
per purpose (settings per party, loss, noise, Eve, measurement, reveal), so a
session distributed over several processes consumes exactly the same draws as
an in-process run and reproduces it bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from . import security
from .channel import (
    ChannelConfig,
    EVE_IR_BOTH,
    EVE_IR_PHOTON2,
    EVE_NONE,
    EveRecord,
    apply_loss,
    apply_pauli_noise,
    eve_intercept_resend_both,
    eve_intercept_resend_photon2,
)
from .observables import ALICE_SETTINGS, BOB_SETTINGS, Setting, alice_groups, bob_groups
from .qmath import PAIR_STATE, born_sample, make_rng, measure_subsystem, tensor

MODE_ENT = "ent"
MODE_PM = "pm"
MODE_EKERT = "ekert"
MODES = (MODE_ENT, MODE_PM, MODE_EKERT)

_EVE_BY_MODE = {
    MODE_ENT: (EVE_NONE, EVE_IR_BOTH),
    MODE_PM: (EVE_NONE, EVE_IR_PHOTON2),
    MODE_EKERT: (EVE_NONE,),
}

# Named substreams of the session seed; every purpose owns its generator so
# draw sequences are independent of how work is distributed across processes.
STREAM_SETTINGS_A = 0
STREAM_SETTINGS_B = 1
STREAM_LOSS = 2
STREAM_NOISE = 3
STREAM_EVE = 4
STREAM_MEASURE = 5
STREAM_REVEAL = 6


@dataclass
class RngStreams:
    settings_a: np.random.Generator
    settings_b: np.random.Generator
    loss: np.random.Generator
    noise: np.random.Generator
    eve: np.random.Generator
    measure: np.random.Generator
    reveal: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        return cls(*(make_rng([seed, sid]) for sid in range(7)))


def stream_rng(seed: int, stream_id: int) -> np.random.Generator:
    """One named substream; network roles rebuild exactly the streams they own."""
    return make_rng([seed, stream_id])


@dataclass(frozen=True)
class SessionConfig:
    """Protocol-level configuration; echoed verbatim into every report."""

    mode: str = MODE_ENT
    rounds: int = 100_000
    seed: int = 1
    eta: float = 1.0
    pauli_p: float = 0.0
    eve: str = EVE_NONE
    noise_after_eve: bool = False
    reveal_frac: float = 0.1
    threshold: float = 8.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if not 0.0 <= self.reveal_frac <= 1.0:
            raise ValueError(f"reveal_frac must be in [0, 1], got {self.reveal_frac!r}")
        if not security.LHV_BOUND < self.threshold < security.QUANTUM_MAX:
            raise ValueError(
                f"threshold must lie in ({security.LHV_BOUND}, {security.QUANTUM_MAX}),"
                f" got {self.threshold!r}"
            )
        if self.eve not in _EVE_BY_MODE[self.mode]:
            raise ValueError(
                f"eve strategy {self.eve!r} is not applicable in mode {self.mode!r}"
                f" (allowed: {_EVE_BY_MODE[self.mode]})"
            )
        self.channel()  # validates eta / pauli_p ranges

    def channel(self) -> ChannelConfig:
        return ChannelConfig(
            eta=self.eta,
            pauli_p=self.pauli_p,
            eve=self.eve,
            noise_after_eve=self.noise_after_eve,
        )

    def echo(self) -> dict:
        return {
            "mode": self.mode,
            "rounds": self.rounds,
            "seed": self.seed,
            "eta": self.eta,
            "pauli_p": self.pauli_p,
            "eve": self.eve,
            "noise_after_eve": self.noise_after_eve,
            "reveal_frac": self.reveal_frac,
            "threshold": self.threshold,
        }


# Designated readout pair per setting combination: (alice op index, bob op
# index, expected product sign).  Exactly one combination is anticorrelated.
SIFT_TABLE = {
    (Setting.A1, Setting.B1): (1, 0, +1),
    (Setting.A1, Setting.B2): (0, 0, +1),
    (Setting.A1, Setting.B3): (2, 0, +1),
    (Setting.A2, Setting.B1): (1, 1, +1),
    (Setting.A2, Setting.B2): (0, 1, +1),
    (Setting.A2, Setting.B3): (2, 1, +1),
    (Setting.A3, Setting.B1): (1, 2, +1),
    (Setting.A3, Setting.B2): (0, 2, +1),
    (Setting.A3, Setting.B3): (2, 2, -1),
}

#: Canonical ordering of setting pairs for correlation vectors; the
#: anticorrelated pair comes last so the statistic negates the final entry.
PAIR_ORDER = tuple(
    (a, b) for a in ALICE_SETTINGS for b in BOB_SETTINGS
)
PAIR_INDEX = {pair: k for k, pair in enumerate(PAIR_ORDER)}


def sift_lookup(a: Setting, b: Setting) -> Tuple[int, int, int]:
    """The unique perfectly correlated observable pair for one setting combination."""
    if a.party != "A" or b.party != "B":
        raise ValueError(f"sift_lookup expects (A-setting, B-setting), got ({a}, {b})")
    return SIFT_TABLE[(a, b)]


@dataclass(slots=True)
class RoundRecord:
    """Everything one emitted pair produced, including Eve's hidden record."""

    round_id: int
    setting_a: Setting
    setting_b: Setting
    detected_a: bool
    detected_b: bool
    outcomes_a: Optional[tuple]  # (o1, o2, o3) readout triple, present iff detected
    outcomes_b: Optional[tuple]
    eve: Optional[EveRecord] = None
    revealed: bool = False


@dataclass(slots=True)
class SiftedRound:
    """One coincidence after sifting; product is of the designated pair only."""

    round_id: int
    pair: int                      # index into PAIR_ORDER
    product: Optional[int]         # o_a[a_idx] * o_b[b_idx]; None if one side unknown
    bit_a: Optional[int]
    bit_b: Optional[int]
    revealed: bool


@dataclass
class SessionResult:
    config: SessionConfig
    records: List[RoundRecord]
    key_a: str
    key_b: str
    report: security.SecurityReport


@lru_cache(maxsize=None)
def _joint_basis(ia: int, ib: int) -> np.ndarray:
    va = alice_groups()[ia].eigenbasis
    vb = bob_groups()[ib].eigenbasis
    rows = np.array([tensor(va[i], vb[j]) for i in range(4) for j in range(4)])
    rows.setflags(write=False)
    return rows


def draw_setting(rng: np.random.Generator) -> int:
    """Uniform group index draw; one call per round, in round order."""
    return int(rng.integers(3))


def run_round(
    mode: str,
    cfg: ChannelConfig,
    streams: RngStreams,
    round_id: int,
    setting_a_idx: Optional[int] = None,
    setting_b_idx: Optional[int] = None,
) -> RoundRecord:
    """Simulate one emitted pair end to end and record the readouts."""
    ia = draw_setting(streams.settings_a) if setting_a_idx is None else setting_a_idx
    ib = draw_setting(streams.settings_b) if setting_b_idx is None else setting_b_idx
    ga = alice_groups()[ia]
    gb = bob_groups()[ib]
    detected_a, detected_b = apply_loss(streams.loss, cfg.eta)
    eve_rec = None

    if mode == MODE_ENT:
        psi = PAIR_STATE
        if cfg.pauli_p > 0 and not cfg.noise_after_eve:
            psi = apply_pauli_noise(psi, cfg.pauli_p, streams.noise)
        if cfg.eve == EVE_IR_BOTH:
            psi, eve_rec = eve_intercept_resend_both(psi, streams.eve)
        if cfg.pauli_p > 0 and cfg.noise_after_eve:
            psi = apply_pauli_noise(psi, cfg.pauli_p, streams.noise)
        idx, _ = born_sample(psi, _joint_basis(ia, ib), streams.measure)
        ao, bo = divmod(idx, 4)
    elif mode == MODE_PM:
        # Alice measures photon 1 at the source; photon 2 leaves already
        # collapsed onto the matching 4-dim conditional state.
        ao, phi = measure_subsystem(PAIR_STATE, ga.eigenbasis, streams.measure)
        if cfg.pauli_p > 0 and not cfg.noise_after_eve:
            phi = apply_pauli_noise(phi, cfg.pauli_p, streams.noise)
        if cfg.eve == EVE_IR_PHOTON2:
            phi, eve_rec = eve_intercept_resend_photon2(phi, streams.eve)
        if cfg.pauli_p > 0 and cfg.noise_after_eve:
            phi = apply_pauli_noise(phi, cfg.pauli_p, streams.noise)
        bo, _ = born_sample(phi, gb.eigenbasis, streams.measure)
    else:
        raise ValueError(f"run_round handles modes {MODE_ENT!r} and {MODE_PM!r}, got {mode!r}")

    return RoundRecord(
        round_id=round_id,
        setting_a=ga.setting,
        setting_b=gb.setting,
        detected_a=detected_a,
        detected_b=detected_b,
        outcomes_a=ga.labels[ao] if detected_a else None,
        outcomes_b=gb.labels[bo] if detected_b else None,
        eve=eve_rec,
    )


def mark_reveal(rng: np.random.Generator, reveal_frac: float) -> bool:
    """One Bernoulli draw per sifted round, taken in ascending round order."""
    return reveal_frac > 0 and bool(rng.random() < reveal_frac)


def sift(
    records,
    table=None,
    rng: Optional[np.random.Generator] = None,
    reveal_frac: float = 0.0,
) -> Tuple[str, str, List[SiftedRound]]:
    """Keep coincidences, derive one key bit each, sacrifice a revealed sample.

    Alice's bit is (1 + o_a)/2 for her designated readout; Bob folds the
    table sign into his, so the keys agree rather than complement each other.
    Revealed rounds are excluded from both keys.
    """
    if table is None:
        table = SIFT_TABLE
    if reveal_frac > 0 and rng is None:
        raise ValueError("reveal_frac > 0 requires an rng")
    bits_a = []
    bits_b = []
    sifted: List[SiftedRound] = []
    for rec in records:
        if not (rec.detected_a and rec.detected_b):
            continue
        a_idx, b_idx, sign = table[(rec.setting_a, rec.setting_b)]
        oa = rec.outcomes_a[a_idx]
        ob = rec.outcomes_b[b_idx]
        bit_a = (1 + oa) // 2
        bit_b = (1 + sign * ob) // 2
        revealed = mark_reveal(rng, reveal_frac)
        rec.revealed = revealed
        sifted.append(SiftedRound(
            round_id=rec.round_id,
            pair=PAIR_INDEX[(rec.setting_a, rec.setting_b)],
            product=oa * ob,
            bit_a=bit_a,
            bit_b=bit_b,
            revealed=revealed,
        ))
        if not revealed:
            bits_a.append(str(bit_a))
            bits_b.append(str(bit_b))
    return "".join(bits_a), "".join(bits_b), sifted


def summarize_sift(sifted) -> Tuple[list, int, int, int, int]:
    """Per-pair correlation counts and error tallies over the revealed sample."""
    cells = [security.CorrelationCounts() for _ in range(9)]
    mismatches = 0
    total = 0
    revealed = 0
    for s in sifted:
        if not s.revealed:
            continue
        revealed += 1
        if s.product is None:
            continue  # peer withheld its reveal; round still sacrificed
        cells[s.pair].add(s.product)
        total += 1
        mismatches += s.bit_a != s.bit_b
    return cells, mismatches, total, revealed, len(sifted)


def run_session(config: SessionConfig) -> SessionResult:
    """Run a full entanglement or prepare-and-measure session in process."""
    if config.mode not in (MODE_ENT, MODE_PM):
        raise ValueError(f"run_session handles modes {MODE_ENT!r}/{MODE_PM!r};"
                         f" use run_ekert_baseline for {MODE_EKERT!r}")
    streams = RngStreams.from_seed(config.seed)
    cfg = config.channel()
    records = [
        run_round(config.mode, cfg, streams, round_id)
        for round_id in range(config.rounds)
    ]
    key_a, key_b, sifted = sift(records, SIFT_TABLE, streams.reveal, config.reveal_frac)
    cells, mismatches, total, revealed, n_sifted = summarize_sift(sifted)
    report = security.build_report(
        cell_counts=cells,
        qber_mismatches=mismatches,
        qber_total=total,
        coincidences=n_sifted,
        sifted=n_sifted,
        revealed=revealed,
        key_length=len(key_a),
        threshold=config.threshold,
    )
    return SessionResult(config=config, records=records, key_a=key_a, key_b=key_b, report=report)


def run_pm_variant(config: SessionConfig) -> SessionResult:
    """Prepare-and-measure variation of the protocol; sifting is unchanged."""
    if config.mode != MODE_PM:
        config = replace(config, mode=MODE_PM)
    return run_session(config)


# ---------------------------------------------------------------------------
# Matching-settings baseline (three analyzer angles per side on a polarization
# singlet).  Implemented only at the sift-accounting level needed to compare
# raw key fractions: 2 of 9 setting pairs have equal angles and yield key.

BASELINE_ALICE_ANGLES = (0.0, np.pi / 4, np.pi / 2)
BASELINE_BOB_ANGLES = (np.pi / 4, np.pi / 2, 3 * np.pi / 4)
BASELINE_KEY_PAIRS = frozenset({(1, 0), (2, 1)})  # equal-angle combinations

_SINGLET = np.zeros(4, dtype=complex)
_SINGLET[1] = 1 / np.sqrt(2)   # |HV>
_SINGLET[2] = -1 / np.sqrt(2)  # |VH>
_SINGLET.setflags(write=False)


@dataclass
class BaselineResult:
    config: SessionConfig
    rounds: int
    coincidences: int
    key_rounds: int
    raw_key_fraction: Optional[float]
    qber: Optional[float]
    key_a: str = field(repr=False, default="")
    key_b: str = field(repr=False, default="")


@lru_cache(maxsize=None)
def _analyzer_joint_basis(ia: int, ib: int) -> np.ndarray:
    def analyzer(theta):
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, s], [-s, c]], dtype=complex)  # rows: +1 then -1 outcome

    va = analyzer(BASELINE_ALICE_ANGLES[ia])
    vb = analyzer(BASELINE_BOB_ANGLES[ib])
    rows = np.array([np.kron(va[i], vb[j]) for i in range(2) for j in range(2)])
    rows.setflags(write=False)
    return rows


def run_ekert_baseline(config: SessionConfig) -> BaselineResult:
    """Reference protocol run: random analyzer angles on a polarization singlet.

    Equal angles give perfect anticorrelation, so Bob flips his bit on key
    rounds; all other setting pairs are discarded.
    """
    streams = RngStreams.from_seed(config.seed)
    coincidences = 0
    key_rounds = 0
    mismatches = 0
    bits_a = []
    bits_b = []
    for _ in range(config.rounds):
        ia = draw_setting(streams.settings_a)
        ib = draw_setting(streams.settings_b)
        detected_a, detected_b = apply_loss(streams.loss, config.eta)
        psi = _SINGLET
        if config.pauli_p > 0:
            psi = apply_pauli_noise(psi, config.pauli_p, streams.noise)
        idx, _ = born_sample(psi, _analyzer_joint_basis(ia, ib), streams.measure)
        if not (detected_a and detected_b):
            continue
        coincidences += 1
        if (ia, ib) not in BASELINE_KEY_PAIRS:
            continue
        key_rounds += 1
        oa = 1 - 2 * (idx // 2)
        ob = 1 - 2 * (idx % 2)
        bit_a = (1 + oa) // 2
        bit_b = (1 - ob) // 2  # anticorrelated at equal angles
        mismatches += bit_a != bit_b
        bits_a.append(str(bit_a))
        bits_b.append(str(bit_b))
    return BaselineResult(
        config=config,
        rounds=config.rounds,
        coincidences=coincidences,
        key_rounds=key_rounds,
        raw_key_fraction=key_rounds / coincidences if coincidences else None,
        qber=mismatches / key_rounds if key_rounds else None,
        key_a="".join(bits_a),
        key_b="".join(bits_b),
    )
