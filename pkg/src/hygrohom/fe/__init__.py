"""Finite-element kernels: quadrature, hierarchic basis, assembly, saddle solves."""

from hygrohom.fe.assembly import (
    VOIGT_PAIRS,
    assemble_capacity,
    assemble_conductivity,
    assemble_elasticity,
    assemble_flux_load,
    assemble_mass,
    assemble_traction_load,
    material_field,
    strain_operator,
)
from hygrohom.fe.quadrature import QuadratureRule, tet_rule, triangle_rule
from hygrohom.fe.saddle import SaddleResult, SaddleSystem, solve_saddle
from hygrohom.fe.space import BasisSet, FunctionSpace, basis_values, function_space

__all__ = [
    "VOIGT_PAIRS",
    "assemble_capacity",
    "assemble_conductivity",
    "assemble_elasticity",
    "assemble_flux_load",
    "assemble_mass",
    "assemble_traction_load",
    "material_field",
    "strain_operator",
    "QuadratureRule",
    "tet_rule",
    "triangle_rule",
    "SaddleResult",
    "SaddleSystem",
    "solve_saddle",
    "BasisSet",
    "FunctionSpace",
    "basis_values",
    "function_space",
]
