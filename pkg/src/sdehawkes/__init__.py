"""Hawkes processes with stochastic excitation levels.

A self-exciting point process whose per-event jump sizes follow either a
fixed value, iid Gamma draws, a geometric Brownian motion or an
exponentiated Ornstein-Uhlenbeck process.  The package provides exact
linear-cost simulation, a quadratic thinning oracle, closed-form likelihood
quantities, a hybrid Gibbs/Metropolis-Hastings fitter with latent branching
structure, EM-reduction checks and goodness-of-fit diagnostics.
"""

__version__ = "0.1.0"

from .model import (
    BranchingStructure,
    ContagionPath,
    EventSequence,
    HawkesParams,
    base_intensity,
    integrated_intensity,
    intensity_at,
    log_likelihood,
)
from .sde import (
    Constant,
    ExpLangevin,
    GapSeries,
    Gbm,
    IidGamma,
    SdeSpec,
    exp_langevin_step,
    exp_langevin_transition_logpdf,
    gaps_from_events,
    gbm_step,
    gbm_transition_logpdf,
    mean_level_fn,
    sample_path,
)
from .simulate import SimulationResult, simulate, simulate_ogata
from .mcmc import (
    Chain,
    ChainState,
    Hyperparams,
    McmcConfig,
    NonFinitePosteriorError,
    branching_probabilities,
    gibbs_sample_z,
    log_posterior,
    mh_log_accept_a,
    mh_log_accept_generic,
    mh_log_accept_tau,
    mh_log_accept_y_gbm,
    run_mcmc,
)
from .em import em_q_value, em_responsibilities, em_update_psi
from .diagnostics import (
    chain_summary,
    effective_sample_size,
    expected_intensity_curve,
    geweke_joint_test,
    split_rhat,
    time_rescaling_test,
)

__all__ = [name for name in dir() if not name.startswith("_")]
