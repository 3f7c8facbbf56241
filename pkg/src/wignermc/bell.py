"""Bell-inequality estimators, closed-form predictions and an exact
Gaussian-moment oracle.

Estimators operate on corrected port intensities.  The polarization
correlation for one analyzer pair is

    E = < (I1+ - I1-)(I2+ - I2-) > / < N1 N2 >

where N_i is the corrected two-port sum of pixel i, and both numerator
and denominator average *per-trajectory products*.  The half-photon
corrections cancel in the numerator differences but not in the
denominator, which is what lets E exceed the classical bounds.

The CHSH combination uses four analyzer pairs,

    chsh = E(t1, t2) - E(t1, t2') + E(t1', t2) + E(t1', t2'),

and the coincidence-over-singles ratio of the Clauser-Horne inequality is

    ch = [C(t1,t2) - C(t1,t2') + C(t1',t2) + C(t1',t2')] / [S1(t1') + S2(t2)]

with C the mean corrected (+,+) coincidence product and S the mean
corrected singles intensity.  Local models obey chsh <= 2 and ch <= 1.

``wick_oracle`` computes every one of these ensemble means exactly from
the 8x8 quadrature covariance matrix via the Isserlis (Wick) theorem,
providing a Monte-Carlo-free reference for any gain, efficiency and
angle set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .modes import AnalyzerSettings, gain_to_squeeze, validate_efficiency

# Canonical order of the four analyzer pairs: first digit selects the
# pixel-1 angle (1 -> t1, 2 -> t1'), second digit the pixel-2 angle.
PAIR_LABELS = ("11", "12", "21", "22")

# Port-column indices (into the eight-port layout of modes.PORT_LABELS)
# used by each pair: (pixel-1 plus, pixel-1 minus, pixel-2 plus, pixel-2 minus).
PAIR_PORTS = {
    "11": (0, 1, 4, 5),
    "12": (0, 1, 6, 7),
    "21": (2, 3, 4, 5),
    "22": (2, 3, 6, 7),
}

# Ports whose means form the Clauser-Horne singles denominator:
# pixel 1 plus-port at t1' and pixel 2 plus-port at t2.
CH_SINGLES_PORTS = (2, 4)


def optimal_angles() -> AnalyzerSettings:
    """Analyzer angles that maximize the CHSH combination.

    (t1, t1', t2, t2') = (-pi/8, pi/8, pi/2, pi/4).  Note the sign of
    t2': with the correlation law E = -cos(2(t1 + t2)) (1+G)/(1+3G) only
    +pi/4 yields the 2 sqrt(2) combination; -pi/4 makes the four terms
    cancel.  Any other convention can be forced by passing explicit
    angles to the estimators or the command line.
    """
    return AnalyzerSettings(-math.pi / 8, math.pi / 8, math.pi / 2, math.pi / 4)


def angle_pairs(angles: AnalyzerSettings) -> dict[str, tuple[float, float]]:
    return {
        "11": (angles.theta1, angles.theta2),
        "12": (angles.theta1, angles.theta2_prime),
        "21": (angles.theta1_prime, angles.theta2),
        "22": (angles.theta1_prime, angles.theta2_prime),
    }


# ----------------------------------------------------------------------
# estimators on trajectory ensembles
# ----------------------------------------------------------------------

def correlation(i1_plus, i1_minus, i2_plus, i2_minus) -> float:
    """Polarization correlation E of one analyzer pair.

    Arguments are per-trajectory corrected port intensities.  Raises
    EstimationError if the mean of the per-trajectory products
    N1 N2 is not positive, which happens with vanishing gain or far too
    few trajectories.
    """
    i1p, i1m = np.asarray(i1_plus, float), np.asarray(i1_minus, float)
    i2p, i2m = np.asarray(i2_plus, float), np.asarray(i2_minus, float)
    num = ((i1p - i1m) * (i2p - i2m)).mean()
    den = ((i1p + i1m) * (i2p + i2m)).mean()
    return correlation_from_sums(num, den)


def correlation_from_sums(num_mean: float, den_mean: float) -> float:
    if not den_mean > 0.0:
        raise EstimationError(
            f"mean corrected intensity product is not positive ({den_mean:g}); "
            "increase the gain or the number of trajectories")
    return float(num_mean / den_mean)


def chsh_value(e11: float, e12: float, e21: float, e22: float) -> float:
    """CHSH combination; local hidden-variable models give |chsh| <= 2."""
    return e11 - e12 + e21 + e22


def clauser_horne_value(coin11: float, coin12: float, coin21: float,
                        coin22: float, single1: float, single2: float) -> float:
    """Coincidence-over-singles ratio; local models give ch <= 1."""
    den = single1 + single2
    if not den > 0.0:
        raise EstimationError(
            f"mean singles intensity is not positive ({den:g}); "
            "increase the gain, efficiency or number of trajectories")
    return float((coin11 - coin12 + coin21 + coin22) / den)


# ----------------------------------------------------------------------
# closed-form predictions
# ----------------------------------------------------------------------

def analytic_moments(gain: float) -> dict[str, float]:
    """Exact low-order moments of the four-mode source at pair gain G.

    Keys:
        mode_mean      corrected photon number of one squeezed mode, G
        mode_var       its corrected variance, G + G^2
        pair_cov       covariance across one squeezed pair, G + G^2
        pixel_mean     corrected two-polarization pixel total, 2G
        pixel_var      variance of the pixel total, 2(G + G^2)
        pixel_cov      covariance of the two pixel totals, 2(G + G^2)
        pixel_product  mean product of the pixel totals, 2G + 6G^2
    """
    g = float(gain)
    return {
        "mode_mean": g,
        "mode_var": g + g * g,
        "pair_cov": g + g * g,
        "pixel_mean": 2 * g,
        "pixel_var": 2 * (g + g * g),
        "pixel_cov": 2 * (g + g * g),
        "pixel_product": 2 * g + 6 * g * g,
    }


def correlator_numerator(gain: float, theta1: float, theta2: float) -> float:
    """Exact <(I1+ - I1-)(I2+ - I2-)> = -2 (G + G^2) cos(2(t1 + t2))."""
    g = float(gain)
    return 2 * (g + g * g) * (math.sin(theta1 + theta2) ** 2
                              - math.cos(theta1 + theta2) ** 2)


def correlation_analytic(gain: float, theta1: float, theta2: float) -> float:
    """Exact E(t1, t2) = -cos(2(t1 + t2)) (1 + G)/(1 + 3G)."""
    g = float(gain)
    return -math.cos(2 * (theta1 + theta2)) * (1 + g) / (1 + 3 * g)


def chsh_analytic(gain: float) -> float:
    """CHSH value at the optimal angles: 2 sqrt(2) (1 + G)/(1 + 3G).

    Exceeds 2 for G < (sqrt(2) - 1)/(3 - sqrt(2)) ~ 0.2612.
    """
    g = float(gain)
    return 2 * math.sqrt(2) * (1 + g) / (1 + 3 * g)


def clauser_horne_analytic(gain: float, eta: float) -> float:
    """Leading-order ch ratio at the optimal angles.

    ch = (1 + sqrt(2))/2 * (1 + G) * eta, which crosses the classical
    bound 1 at eta = 2/(1 + sqrt(2)) ~ 0.83 for small gain.  The exact
    Gaussian value carries a further + eta G term; use wick_oracle for
    exact comparisons.
    """
    validate_efficiency(eta)
    g = float(gain)
    return (1 + math.sqrt(2)) / 2 * (1 + g) * eta


def chsh_critical_gain() -> float:
    """Gain at which the analytic CHSH value drops to the classical 2."""
    return (math.sqrt(2) - 1) / (3 - math.sqrt(2))


# ----------------------------------------------------------------------
# exact Gaussian moment oracle
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class WickOracle:
    """Exact ensemble means of every quantity the estimators average.

    Arrays and dicts are keyed like the Monte Carlo accumulator: port
    means follow modes.PORT_LABELS, per-pair entries follow PAIR_LABELS.
    ``well_defined`` is False when a denominator vanishes (e.g. zero
    gain), in which case the dependent ratios are NaN.
    """

    gain: float
    eta: float
    angles: AnalyzerSettings
    port_means: np.ndarray
    numerators: dict[str, float]
    denominators: dict[str, float]
    coincidences: dict[str, float]
    correlations: dict[str, float]
    chsh: float
    ch_ratio: float
    well_defined: bool


def _squeezer_quadrature_map(r: float) -> np.ndarray:
    """8x8 real map of the two crossed squeezers on (x, y) quadratures.

    Mode order 1H, 1V, 2H, 2V with x at 2m and y at 2m + 1.  For
    beta_a = cosh(r) a + sinh(r) conj(b): x_a' = c x_a + s x_b and
    y_a' = c y_a - s y_b.
    """
    c, s = math.cosh(r), math.sinh(r)
    t = np.zeros((8, 8))
    for a, b in ((0, 3), (1, 2)):  # pairs (1H, 2V) and (1V, 2H)
        for m, other in ((a, b), (b, a)):
            t[2 * m, 2 * m] = c
            t[2 * m, 2 * other] = s
            t[2 * m + 1, 2 * m + 1] = c
            t[2 * m + 1, 2 * other + 1] = -s
    return t


def _analyzer_quadrature_map(theta1: float, theta2: float) -> np.ndarray:
    """Rotation of both pixels' (H, V) modes into analyzer ports."""
    r = np.zeros((8, 8))
    for pixel, th in ((0, theta1), (1, theta2)):
        c, s = math.cos(th), math.sin(th)
        base = 4 * pixel
        rot = np.array([[c, s], [-s, c]])
        for q in (0, 1):  # x then y quadrature
            idx = [base + q, base + 2 + q]
            r[np.ix_(idx, idx)] = rot
    return r


def _intensity_moments(cov: np.ndarray):
    """Means and second moments of |port|^2 under a zero-mean Gaussian.

    Port p occupies quadratures (2p, 2p + 1).  By the Isserlis theorem
    Cov(I_p, I_q) = 2 sum over the 2x2 cross block of squared covariances.
    """
    n_ports = cov.shape[0] // 2
    means = np.array([cov[2 * p, 2 * p] + cov[2 * p + 1, 2 * p + 1]
                      for p in range(n_ports)])
    pair_cov = np.zeros((n_ports, n_ports))
    for p in range(n_ports):
        for q in range(n_ports):
            block = cov[2 * p:2 * p + 2, 2 * q:2 * q + 2]
            pair_cov[p, q] = 2.0 * float((block * block).sum())
    return means, pair_cov


def wick_oracle(gain: float, eta: float = 1.0,
                angles: AnalyzerSettings | None = None) -> WickOracle:
    """Exact estimator inputs from the Gaussian covariance matrix.

    Builds the 8x8 quadrature covariance of the squeezed four-mode state,
    rotates it through each analyzer pair, applies the efficiency map
    cov -> eta cov + (1 - eta)/4 I, and reads off all first and second
    intensity moments by the Isserlis theorem.  No sampling is involved,
    so agreement with the closed forms is at machine precision.
    """
    eta = validate_efficiency(eta)
    if angles is None:
        angles = optimal_angles()
    r = gain_to_squeeze(gain)
    t = _squeezer_quadrature_map(r)
    cov_modes = 0.25 * t @ t.T

    pairs = angle_pairs(angles)
    numerators, denominators, coincidences, correlations = {}, {}, {}, {}
    port_means = np.empty(8)
    well = True
    for label in PAIR_LABELS:
        th1, th2 = pairs[label]
        rot = _analyzer_quadrature_map(th1, th2)
        cov = rot @ cov_modes @ rot.T
        cov = eta * cov + (1.0 - eta) * 0.25 * np.eye(8)
        means, pcov = _intensity_moments(cov)
        n = means - 0.5  # corrected port means, order 1+, 1-, 2+, 2-
        num = pcov[0, 2] - pcov[0, 3] - pcov[1, 2] + pcov[1, 3] \
            + (n[0] - n[1]) * (n[2] - n[3])
        den = pcov[:2, 2:].sum() + (n[0] + n[1]) * (n[2] + n[3])
        coin = pcov[0, 2] + n[0] * n[2]
        numerators[label] = float(num)
        denominators[label] = float(den)
        coincidences[label] = float(coin)
        correlations[label] = num / den if den > 0 else float("nan")
        well = well and den > 0
        # fill the eight-port mean vector from the pairs that define it
        if label == "11":
            port_means[[0, 1, 4, 5]] = n
        elif label == "22":
            port_means[[2, 3, 6, 7]] = n

    chsh = chsh_value(*(correlations[k] for k in PAIR_LABELS)) if well else float("nan")
    singles = port_means[CH_SINGLES_PORTS[0]] + port_means[CH_SINGLES_PORTS[1]]
    if singles > 0:
        ch = (coincidences["11"] - coincidences["12"]
              + coincidences["21"] + coincidences["22"]) / singles
    else:
        ch = float("nan")
        well = False
    return WickOracle(gain=float(gain), eta=eta, angles=angles,
                      port_means=port_means, numerators=numerators,
                      denominators=denominators, coincidences=coincidences,
                      correlations=correlations, chsh=float(chsh),
                      ch_ratio=float(ch), well_defined=well)
