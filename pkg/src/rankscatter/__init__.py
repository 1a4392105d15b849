"""Signed-rank and pseudo-Gaussian tests for homogeneity of scatter matrices.

The main entry points are :func:`align` (estimate a common frame and compute
signs and pooled ranks), :func:`rank_test`, :func:`pseudo_gaussian_test` and
:func:`box_m_test`. :mod:`rankscatter.efficiency` computes asymptotic
relative efficiencies and :mod:`rankscatter.simulation` runs Monte Carlo
studies.
"""
from .elliptical import EllipticalFamily, EllipticalSampleSpec, standardization_constant
from .estimators import (AlignedFrame, GroupedSample, align, estimate_parameters, frame_at,
                         hr_estimate, pooled_ranks, tyler_pooled, tyler_shape)
from .exceptions import (ConfigError, ConvergenceFailure, DegenerateConstraint, DegenerateData,
                         DimensionMismatch, DomainError, InfiniteKurtosis, InvalidParameter,
                         KurtosisDenominator, NotPositiveDefinite, ParseError,
                         QuadratureFailure, RankScatterError, SingularCovariance,
                         ZeroAlternative, ZeroVector)
from .homogeneity import (StatisticParts, TestReport, box_m_statistic, box_m_test,
                          degrees_of_freedom, pooled_kurtosis, pseudo_gaussian_test,
                          quadratic_form_statistic, rank_statistic_parts, rank_test,
                          signed_rank_scatter)
from .scores import ScoreFunction

__version__ = "0.1.0"

__all__ = [
    "AlignedFrame", "EllipticalFamily", "EllipticalSampleSpec", "GroupedSample",
    "ScoreFunction", "StatisticParts", "TestReport",
    "align", "box_m_statistic", "box_m_test", "degrees_of_freedom", "estimate_parameters",
    "frame_at", "hr_estimate", "pooled_kurtosis", "pooled_ranks", "pseudo_gaussian_test",
    "quadratic_form_statistic", "rank_statistic_parts", "rank_test", "signed_rank_scatter",
    "standardization_constant", "tyler_pooled", "tyler_shape",
    "ConfigError", "ConvergenceFailure", "DegenerateConstraint", "DegenerateData",
    "DimensionMismatch", "DomainError", "InfiniteKurtosis", "InvalidParameter",
    "KurtosisDenominator", "NotPositiveDefinite", "ParseError", "QuadratureFailure",
    "RankScatterError", "SingularCovariance", "ZeroAlternative", "ZeroVector",
]
