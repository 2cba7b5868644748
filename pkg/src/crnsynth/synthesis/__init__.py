from .backends import BackendError, Builtin, SmtProcess, SolverTimeout
from .encoding import (EncodingError, SymbolicEncoding, SynthesisProblem, emit_smtlib, encode,
                       encode_structure, encode_trajectory, encode_uniqueness, model_to_crn)
from .search import (EXHAUSTED, LIMIT, TIMEOUT, SynthesisOutcome, enumerate_solutions,
                     increment_k)

__all__ = [
    "BackendError", "Builtin", "SmtProcess", "SolverTimeout", "EncodingError",
    "SymbolicEncoding", "SynthesisProblem", "emit_smtlib", "encode", "encode_structure",
    "encode_trajectory", "encode_uniqueness", "model_to_crn", "EXHAUSTED", "LIMIT",
    "TIMEOUT", "SynthesisOutcome", "enumerate_solutions", "increment_k",
]
