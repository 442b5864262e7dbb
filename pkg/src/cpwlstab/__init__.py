"""Stability certificates and attraction-region estimates for autonomous ODEs
via continuous piecewise-linear approximation."""

from .certificates import (
    CertificateParams,
    PointVerdict,
    asymptotic_stability_set,
    lemma1_test,
    make_params,
    omega_membership,
    systematic_test,
)
from .system_def import VectorField, eval_field, eval_jacobian, load_system, parse_system

__all__ = [
    "CertificateParams",
    "PointVerdict",
    "VectorField",
    "asymptotic_stability_set",
    "eval_field",
    "eval_jacobian",
    "lemma1_test",
    "load_system",
    "make_params",
    "omega_membership",
    "parse_system",
    "systematic_test",
]
