"""couettelab: a numerical laboratory for perturbations of plane Couette flow.

Pseudo-spectral simulation of the perturbation system in a shear-periodic
box, closed-form linear propagators for the mixing-enhanced decay and
lift-up mechanisms, space-time energy functionals, empirical constants
for the underlying inequalities, and a stability-threshold experiment.
"""
from .domain import DomainSpec, SpectralField, PhysicalField
from .operators import VelocityState, CoefficientFields
from .dns import SimConfig, ICSpec, simulate, streak_simulate
from .records import TrajectoryRecord
from .norms import EnergyReport, energy_functionals

__all__ = [
    "DomainSpec",
    "SpectralField",
    "PhysicalField",
    "VelocityState",
    "CoefficientFields",
    "SimConfig",
    "ICSpec",
    "simulate",
    "streak_simulate",
    "TrajectoryRecord",
    "EnergyReport",
    "energy_functionals",
]

__version__ = "0.1.0"
