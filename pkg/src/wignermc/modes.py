"""Four-mode model of a type-II down-conversion source with polarization
analyzers and lossy detectors.

Two pixels (1 and 2) each carry a horizontal and a vertical mode.  Two
independent two-mode squeezers pump the crossed pairs (1H, 2V) and
(1V, 2H), which entangles the polarizations of the pixel pair.  Each
pixel is then analyzed by a rotatable polarizing beam splitter and the
port intensities are recorded, optionally after mixing with fresh vacuum
to model detector efficiency.

Per-trajectory draw order (one stream per trajectory):

    8 normals   vacuum quadratures of 1H, 1V, 2H, 2V (re, im each)
    16 normals  detector vacua, ports in the order
                1+(t1) 1-(t1) 1+(t1') 1-(t1') 2+(t2) 2-(t2) 2+(t2') 2-(t2')

``detect_ports`` evaluates a single analyzer pair and consumes the first
8 detector normals in port order I1+, I1-, I2+, I2-.  Detector vacua are
drawn even at unit efficiency so that stream consumption does not depend
on the detector model.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .phasespace import (
    ORDERING_CORRECTION,
    gaussian_pair_to_complex,
    stream_generator,
    symmetric_intensity,
)

NORMALS_PER_TRAJECTORY = 24
_STATE_NORMALS = 8


class FourModeState(NamedTuple):
    """Amplitudes of the two pixels; scalars or parallel arrays."""

    a1h: complex
    a1v: complex
    a2h: complex
    a2v: complex


class AnalyzerSettings(NamedTuple):
    """The two analyzer angles per pixel used in a Bell run (radians)."""

    theta1: float
    theta1_prime: float
    theta2: float
    theta2_prime: float


class PortIntensities(NamedTuple):
    """Corrected intensities behind one analyzer pair."""

    i1_plus: float
    i1_minus: float
    i2_plus: float
    i2_minus: float


def gain_to_squeeze(gain: float) -> float:
    """Squeeze parameter r with sinh(r)^2 equal to the mean pair gain."""
    if gain < 0:
        raise ConfigError(f"gain must be >= 0, got {gain}")
    return math.asinh(math.sqrt(gain))


def squeeze_to_gain(r: float) -> float:
    return math.sinh(r) ** 2


def validate_efficiency(eta: float) -> float:
    if not 0.0 <= eta <= 1.0:
        raise ConfigError(f"detector efficiency must lie in [0, 1], got {eta}")
    return float(eta)


def two_mode_squeeze(alpha_a, alpha_b, r: float):
    """Bogoliubov map of a two-mode squeezer acting on a mode pair.

        beta_a = cosh(r) alpha_a + sinh(r) conj(alpha_b)
        beta_b = cosh(r) alpha_b + sinh(r) conj(alpha_a)

    Vacuum in, thermal marginals out: mean photon number sinh(r)^2 per
    mode and photon-number covariance G + G^2 across the pair.
    """
    c, s = math.cosh(r), math.sinh(r)
    beta_a = c * np.asarray(alpha_a) + s * np.conj(alpha_b)
    beta_b = c * np.asarray(alpha_b) + s * np.conj(alpha_a)
    return beta_a, beta_b


def bell_state_from_normals(z: np.ndarray, gain: float) -> FourModeState:
    """Squeezed four-mode state from standard normals z[..., 0:8]."""
    modes = gaussian_pair_to_complex(z[..., :_STATE_NORMALS])
    a1h, a1v, a2h, a2v = (modes[..., k] for k in range(4))
    r = gain_to_squeeze(gain)
    b1h, b2v = two_mode_squeeze(a1h, a2v, r)
    b1v, b2h = two_mode_squeeze(a1v, a2h, r)
    return FourModeState(b1h, b1v, b2h, b2v)


def generate_bell_trajectory(gain: float, rng: np.random.Generator) -> FourModeState:
    """One phase-space sample of the polarization-entangled pixel pair."""
    return bell_state_from_normals(rng.standard_normal(_STATE_NORMALS), gain)


def draw_trajectory_block(master_seed: int, start: int, count: int,
                          n_normals: int = NORMALS_PER_TRAJECTORY) -> np.ndarray:
    """Standard normals for trajectories [start, start + count).

    Row i comes entirely from stream start + i, so the result is
    independent of how the ensemble is chopped into blocks.
    """
    out = np.empty((count, n_normals))
    for i in range(count):
        out[i] = stream_generator(master_seed, start + i).standard_normal(n_normals)
    return out


def apply_pbs(alpha_h, alpha_v, theta: float):
    """Polarizing beam splitter rotated by theta.

        A+ =  cos(theta) aH + sin(theta) aV
        A- = -sin(theta) aH + cos(theta) aV

    Orthogonal, so |A+|^2 + |A-|^2 = |aH|^2 + |aV|^2 per trajectory.
    """
    c, s = math.cos(theta), math.sin(theta)
    return c * np.asarray(alpha_h) + s * np.asarray(alpha_v), \
        -s * np.asarray(alpha_h) + c * np.asarray(alpha_v)


def apply_efficiency(alpha, eta: float, vacuum):
    """Beam-splitter loss model: sqrt(eta) alpha + sqrt(1 - eta) vacuum.

    Corrected means scale by eta and corrected covariances by eta^2.
    ``vacuum`` must be a fresh vacuum amplitude (or array of them).
    """
    eta = validate_efficiency(eta)
    return math.sqrt(eta) * np.asarray(alpha) + math.sqrt(1.0 - eta) * np.asarray(vacuum)


def _corrected_port_pair(ah, av, theta, eta, vac_plus, vac_minus):
    plus, minus = apply_pbs(ah, av, theta)
    plus = apply_efficiency(plus, eta, vac_plus)
    minus = apply_efficiency(minus, eta, vac_minus)
    return (symmetric_intensity(plus) - ORDERING_CORRECTION,
            symmetric_intensity(minus) - ORDERING_CORRECTION)


def detect_ports(state: FourModeState, theta1: float, theta2: float,
                 eta: float, rng: np.random.Generator) -> PortIntensities:
    """Corrected port intensities for one analyzer pair.

    Consumes 8 normals (vacua for ports I1+, I1-, I2+, I2-) from the
    trajectory stream regardless of eta.  At eta = 1 the port sums equal
    the corrected pixel totals exactly, because the analyzer conserves
    intensity trajectory by trajectory.
    """
    vac = gaussian_pair_to_complex(rng.standard_normal(8))
    i1p, i1m = _corrected_port_pair(state.a1h, state.a1v, theta1, eta, vac[..., 0], vac[..., 1])
    i2p, i2m = _corrected_port_pair(state.a2h, state.a2v, theta2, eta, vac[..., 2], vac[..., 3])
    return PortIntensities(i1p, i1m, i2p, i2m)


# Column order of the eight-port measurement matrix.
PORT_LABELS = ("p1_plus", "p1_minus", "p1p_plus", "p1p_minus",
               "p2_plus", "p2_minus", "p2p_plus", "p2p_minus")


def measure_bell_ports(state: FourModeState, angles: AnalyzerSettings,
                       eta: float, detector_normals: np.ndarray) -> np.ndarray:
    """Corrected intensities of all eight analyzer ports of a Bell run.

    Both analyzer settings of each pixel are evaluated on the same
    trajectory, which is legitimate for c-number samples even though the
    corresponding quantum measurements do not commute.  Columns follow
    PORT_LABELS; ``detector_normals`` supplies 16 normals per trajectory
    in that port order (re, im interleaved).
    """
    vac = gaussian_pair_to_complex(detector_normals)
    if vac.shape[-1] != 8:
        raise ValueError("need 16 detector normals per trajectory")
    cols = []
    for k, (ah, av, theta) in enumerate((
            (state.a1h, state.a1v, angles.theta1),
            (state.a1h, state.a1v, angles.theta1_prime),
            (state.a2h, state.a2v, angles.theta2),
            (state.a2h, state.a2v, angles.theta2_prime))):
        plus, minus = _corrected_port_pair(ah, av, theta, eta,
                                           vac[..., 2 * k], vac[..., 2 * k + 1])
        cols.extend((plus, minus))
    return np.stack(cols, axis=-1)


def bell_port_block(gain: float, angles: AnalyzerSettings, eta: float,
                    master_seed: int, start: int, count: int) -> np.ndarray:
    """Eight-port measurement matrix for a contiguous trajectory range."""
    z = draw_trajectory_block(master_seed, start, count)
    state = bell_state_from_normals(z, gain)
    return measure_bell_ports(state, angles, eta, z[:, _STATE_NORMALS:])
