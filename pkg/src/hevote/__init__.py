"""Encrypted prompt-ensemble voting kernels over a simulated CKKS backend."""

from .argmax import (
    BoundsViolationError,
    NormBounds,
    PackingLayout,
    hom_max,
    normalize,
    pack,
    phoenix_argmax,
    quick_max,
    secpe_argmax,
    unpack,
)
from .backend import (
    BackendParams,
    CostModel,
    DepthExhaustedError,
    ExactBackend,
    OpCounters,
    SimulatedBackend,
    SlotOverflowError,
    SlotVector,
    load_backend_params,
    make_backend,
)
from .bench import BenchRecord, run_bench
from .ensemble import (
    CostBreakdown,
    LogitBatch,
    SchemaError,
    VoteResult,
    aggregate,
    load_logits,
    oracle_vote,
    run_vote,
    vote,
)
from .estimators import EncryptedArgmax, PrivateEnsembleClassifier, SignApproximator
from .poly import EvalPlan, Polynomial, evaluate, plan
from .sign import CompositeSign, ErrorCertificate, SignConfig, build_sign, certify, sign_eval

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
