"""Statistical mechanics of combat: stochastic attrition models fitted by adaptive simulated annealing."""

from .errors import (DegenerateDataError, DegenerateMetricError, DomainError, FormatError, NumericError,
                     SmcError, SpecificationError, UsageError)
from .model import (CoefficientSet, ModelSpec, StateVector, Term, Unit, diffusion, drift, janus5,
                    table1_coefficients)
from .trajectory import Ensemble, Trajectory
from .likelihood import EpochTransition, TransitionCost, epoch_cost, lagrangian, total_cost
from .momenta import CmiSeries, ensemble_cmi, energy_density, force, mass, momenta
from .simulator import SimConfig, ensemble, run, step
from .asa import AsaConfig, AsaResult, minimize
from .fit import FitReport, fit_ensemble

__version__ = "0.1.0"
