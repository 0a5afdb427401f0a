"""Simulation of fractional Brownian motion over a shared Brownian driver and
delayed stochastic integration for piecewise-predictable integrands, with the
dyadic conditional-expectation extension and a Monte Carlo verification
harness for the moment identities and the small-Hurst continuity behaviour.
"""

from .kernels import (
    HurstParameter,
    PowerKernelCell,
    gh_transform,
    hurst_constant,
    mvn_kernel,
    truncation_horizon,
)
from .noise import (
    NoiseBatch,
    NoisePath,
    ProcessPath,
    SimulationGrid,
    dr_energy_closed_form,
    dr_pointwise_closed_form,
    generate_noise,
    generate_noise_batch,
    make_grid,
    synthesize_dr,
    synthesize_fbm,
    synthesize_w,
)
from .integrands import (
    BrownianIntegrand,
    DeterministicIntegrand,
    FbmIntegrand,
    Integrand,
    PiecewisePredictableIntegrand,
    QuadraticBrownianIntegrand,
    RlFbmIntegrand,
    SegmentGrid,
    dyadic_projection,
    x_norm,
    y_norm,
)
from .integrator import (
    DelayedIntegralResult,
    ExtensionTrace,
    delayed_integral_xd,
    delayed_segment,
    extended_integral,
    ito_integral,
    riemann_fbm_integral,
)
from .experiments import (
    DeskConfig,
    MCResult,
    cauchy_decay_study,
    continuity_study,
    nonconvergence_demo,
    parse_integrand,
    shiryaev_identity_check,
    verify_dr_moments,
)

__version__ = "0.1.0"
