"""Three-party OAM-mode messaging over turbulent crosstalk channels.

Messages ride on correlator ratios that the collective mode-flip channel
cannot touch; the package covers the full pipeline from state preparation
through channel transit, Monte Carlo measurement, estimation and decoding.
"""

from .channel import BadParamsError, Channel, ChannelModel, ChannelParams, apply, kraus_of, make_channel
from .codec import (
    Constellation,
    DEFAULT_CONSTELLATION,
    DegenerateInputError,
    Message,
    closed_form_invariants,
    decode,
    encode,
)
from .invariants import (
    InvariantSpec,
    InvariantValue,
    ScanReport,
    eval_invariant,
    invariance_scan,
    lookup,
    registry,
)
from .opexpr import OpExpr, PauliString, parse, pauli_decompose, to_text
from .protocol import (
    CollaborationReport,
    DecodingUnavailableError,
    Estimate,
    InvariantEstimate,
    MeasurementRecord,
    NoQualifyingRoundsError,
    ProtocolReport,
    RecordSet,
    collaboration_test,
    estimate_invariant,
    estimate_string,
    run_protocol,
    simulate,
)
from .qcore import (
    DensityMatrix,
    Operator,
    StateCoefficients,
    StateVector,
    ZeroStateError,
    born_probabilities,
    density_of,
    embed,
    expectation,
    make_state,
    pauli_matrix,
    random_coefficients,
)

__version__ = "0.1.0"
