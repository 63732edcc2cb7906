"""Relative heat-risk indices from census features via fidelity-maximizing reference matrices."""
from .errors import SpectralRiskError
from .preprocess import FeatureVector, build_feature_vectors, l2_normalize, min_max, orient
from .reference import (
    SolverOptions,
    SolverReport,
    TailRule,
    estimate_reference,
    heuristic_vector,
    principal_eigenvector,
    reference_oracle,
    similarity_set,
    tail_cluster,
)
from .risk import RiskRecord, risk_generalized, risk_rank_one, score_all
from .symmat import DensityMatrix, SymMatrix, eig, fidelity, fidelity_pure, sqrt_psd, trace_inner

__version__ = "0.1.0"
