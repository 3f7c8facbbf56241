"""Monte Carlo sampling of Gaussian-state phase space for Bell tests.

Trajectories are drawn from the (positive) quasi-probability density of
the optical vacuum, propagated through parametric-gain and analyzer
models, and reduced to symmetrically-ordered intensity moments from
which CHSH and coincidence-ratio Bell quantities are estimated.
"""

__version__ = "0.1.0"

from .bell import (PAIR_LABELS, WickOracle, analytic_moments, chsh_analytic,
                   chsh_critical_gain, clauser_horne_analytic,
                   correlation_analytic, optimal_angles, wick_oracle)
from .config import (RunConfig, SpatialSettings, config_from_ini,
                     demo_spatial_config, demo_spatial_settings, load_config)
from .errors import ConfigError, EstimationError, SamplingCheckError
from .modes import (PORT_LABELS, AnalyzerSettings, FourModeState,
                    bell_port_block, gain_to_squeeze, measure_bell_ports,
                    squeeze_to_gain)
from .phasespace import (corrected_photon_number, sample_vacuum_modes,
                         stream_generator, symmetric_intensity)
from .runner import (RunArtifacts, SpatialImageArtifacts, run_point,
                     spatial_image, sweep_efficiency, sweep_gain)
from .spatial import (CrystalParams, FieldGrid, PixelPairSelection,
                      SamplingReport, check_sampling, far_field,
                      init_vacuum_grid, propagate, ring_geometry,
                      scan_intersection_pixels, spatial_trajectory_block)
from .stats import (BellResult, MomentAccumulator, bell_estimate,
                    confidence_interval, convergence_series, stderr_mean)

__all__ = [
    "__version__",
    "AnalyzerSettings", "BellResult", "ConfigError", "CrystalParams",
    "EstimationError", "FieldGrid", "FourModeState", "MomentAccumulator",
    "PAIR_LABELS", "PORT_LABELS", "PixelPairSelection", "RunArtifacts",
    "RunConfig", "SamplingCheckError", "SamplingReport",
    "SpatialImageArtifacts", "SpatialSettings", "WickOracle",
    "analytic_moments", "bell_estimate", "bell_port_block", "check_sampling",
    "chsh_analytic", "chsh_critical_gain", "clauser_horne_analytic",
    "config_from_ini", "confidence_interval", "convergence_series",
    "corrected_photon_number", "correlation_analytic", "demo_spatial_config",
    "demo_spatial_settings", "far_field", "gain_to_squeeze",
    "init_vacuum_grid", "load_config", "measure_bell_ports", "optimal_angles",
    "propagate", "ring_geometry", "run_point", "sample_vacuum_modes",
    "scan_intersection_pixels", "spatial_image", "spatial_trajectory_block",
    "squeeze_to_gain", "stderr_mean", "stream_generator", "sweep_efficiency",
    "sweep_gain", "symmetric_intensity", "wick_oracle",
]
