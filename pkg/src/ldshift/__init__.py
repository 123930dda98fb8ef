"""Finite-t large-deviation diagnostics for shift-invariant measures on finite alphabets."""

from .coupling import BlockLayout, PsiDiagnostics, block_counts, build_psi, compat_defect, psi_certificate
from .curves import PressureCurve, RateFunction
from .decoupling import (DecouplingReport, DecouplingSpec, extend_word, ssd_from_sld_ud, verify_sld,
                         verify_ssd, verify_ud)
from .errors import (AbsoluteContinuityError, AlphabetMismatch, BudgetExceeded, CheckFailure, ConfigError,
                     ConvergenceError, LDShiftError)
from .gamma import GammaSpec, GammaTerm
from .ldp import (chernoff_curve, chernoff_exponent, empirical_ldp_probe, entropy_pressure,
                  entropy_pressure_curve, finite_pressure, fluctuation_identities, legendre_transform,
                  pressure_curve)
from .level3 import (EntropyReport, entropy_rates, ks_subadditivity_check, level3_fr_check,
                     mean_entropy_production, mixture_affinity_check)
from .measures import (Bernoulli, HiddenRenewal, Markov, MatrixProduct, Measure, Mixture, ProductPair,
                       ThetaLift, Uniform, build_product_pair, log_marginal, stationarity_check, theta_lift)
from .observables import ObservableSpec
from .renewal import RenewalPair, kappa, one_sided_derivatives, preset, q_curve, rho_solve, validate_renewal
from .words import Alphabet, Involution, Word, enumerate_words

__version__ = "0.1.0"
