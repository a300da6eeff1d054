"""Heston path simulation with exact BESQ transitions and adaptive integrated variance."""

from .specfun import BesselOrder, bessel_quotient, log_modified_bessel_i
from .samplers import (RngStream, BesselDistParams, sample_gamma, sample_poisson,
                       sample_normal, sample_bessel, bessel_pmf)
from .besq import (HestonParams, TimeMap, BridgeSegment, tau_of_t, t_of_tau, v_of_x,
                   sample_transition, sample_bridge_midvalue)
from .moments import (MomentPrecisionError, WeightParams, MomentCoefficients, BridgeMoments,
                      coefficients, bridge_moments, laplace_transform, laplace_moments_fd,
                      solve_phi_numeric, phi_quantities)
from .adapt import (RefineSpace, AdaptConfig, IntegralEstimate, AdaptDepthError,
                    estimate_integral, segment_variance)
from .heston import (Scheme, PathState, StepResult, PriceResult, step_exact,
                     step_predictor_corrector, simulate_terminal, price_european_call)

REFERENCE_PRICE = 6.8061

__version__ = "0.1.0"
