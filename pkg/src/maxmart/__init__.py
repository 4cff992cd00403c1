"""Simulation and verification of nonnegative local martingales and their times of maximum."""

from .azema import (AzemaEstimate, MarkovState, additive_check, conditional_doob_check,
                    nested_z_estimate, z_before_rho, z_ratio)
from .decomposition import (compensator_poisson_death, d_at_rho_samples, d_process,
                            log_lstar_mean, stieltjes_a)
from .errors import ConfigError, DomainError, MaxmartError, ParameterError, StructuralError
from .hedging import HedgeResult, digital_price, first_passage, super_replicate
from .maxtime import (MaxRecord, check_rho_identity, max_attained, max_record, rho_left,
                      rho_right)
from .models import (ContinuousExp, PoissonDeath, PoissonUp, batch_records, batch_simulate,
                     kardaras_condition, simulate, simulate_continuous_exp,
                     simulate_poisson_death, simulate_poisson_up)
from .paths import CadlagPath, SupPath, left_limit_at, running_sup, sup_is_continuous, value_at
from .rng import Seed
from .stats import KsVerdict, ecdf, ks_uniform, mean_ci

__version__ = "0.1.0"
