"""Simulator and analysis toolkit for a deterministic double-entanglement QKD protocol."""

__version__ = "0.1.0"

from .channel import (  # noqa: F401
    ChannelConfig,
    EVE_IR_BOTH,
    EVE_IR_PHOTON2,
    EVE_NONE,
    EveRecord,
)
from .observables import (  # noqa: F401
    ObservableGroup,
    Setting,
    build_group,
    eigenequation_vector,
    mub_overlap,
    pauli_set,
)
from .protocol import (  # noqa: F401
    BaselineResult,
    RoundRecord,
    SessionConfig,
    SessionResult,
    SIFT_TABLE,
    run_ekert_baseline,
    run_pm_variant,
    run_session,
    sift_lookup,
)
from .security import (  # noqa: F401
    LHV_BOUND,
    QUANTUM_MAX,
    SecurityReport,
    bell_statistic,
    correlation_E,
    efficiency_report,
    verdict,
)
