"""Spotlight inversion: removing nuisance-parameter clutter from linear
inverse problems by projecting the data onto the complement of the clutter
range."""
from .bayes import (GaussianPosterior, limit_consistency_check, map_full, map_naive,
                    map_projected, posterior_conditioning, posterior_marginalization,
                    relative_error)
from .errors import (ConfigError, ConvergenceError, DimensionError, InvalidPartitionError,
                     NoInformationError, NumericalError, PreconditionError, SpotlightError)
from .model import (GaussianPriorSpec, PartitionedForwardModel, partition_model, simulate_data,
                    whiten)
from .projector import (ProjectedModel, SpotlightBasis, apply_P, apply_P_perp,
                        exact_complement_basis, project_model, randomized_basis, truncated_basis)
from .truncation import (TruncationAnalysis, clutter_snr_bound, expected_residual_clutter,
                         r_curve, select_rank)

__version__ = "0.1.0"
