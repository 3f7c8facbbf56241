"""Phase-space sampling of Gaussian optical modes and symmetric-ordering
intensity calculus.

Conventions
-----------
A mode amplitude alpha is a c-number sample of the Wigner distribution.
Vacuum is the circular complex Gaussian with variance 1/4 in each
quadrature, i.e. W0(alpha) = (2/pi) exp(-2 |alpha|^2) up to normalization,
so <|alpha|^2> = 1/2 for vacuum.

|alpha|^2 estimates the *symmetrically ordered* photon number, which
exceeds the normally ordered (detected) one by half a photon per mode.
The helpers below remove that offset:

    photon number   N   = |alpha|^2 - 1/2
    variance        V   = <I^2> - <I>^2 - 1/4        (I = |alpha|^2)
    covariance      Cov = <Ia Ib> - <Ia><Ib>         (distinct modes)

For vacuum these give N = 0 and V = 0; a thermal mode of mean photon
number G gives N = G and V = G + G^2.

Reproducibility
---------------
Every Monte Carlo trajectory draws from its own counter-derived stream:
``stream_generator(master_seed, i)`` yields an independent generator for
trajectory ``i`` regardless of how trajectories are later grouped into
batches or threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Half-photon offset between symmetric and normal ordering, per mode.
ORDERING_CORRECTION = 0.5

# Standard deviation of each vacuum quadrature (variance 1/4).
VACUUM_QUAD_STD = 0.5


def stream_generator(master_seed: int, stream_index: int) -> np.random.Generator:
    """Independent generator for one trajectory.

    The (master_seed, stream_index) pair is hashed by ``SeedSequence`` so
    distinct indices give statistically independent streams, and replaying
    a pair reproduces the identical trajectory no matter how the ensemble
    is partitioned into batches or worker threads.
    """
    if stream_index < 0:
        raise ValueError("stream_index must be >= 0")
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((master_seed, stream_index)))
    )


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream: trajectory i always uses stream index i."""

    master_seed: int
    stream_index: int

    def generator(self) -> np.random.Generator:
        return stream_generator(self.master_seed, self.stream_index)


def gaussian_pair_to_complex(z: np.ndarray) -> np.ndarray:
    """Map standard normal pairs (..., 2k) -> k complex vacuum amplitudes.

    Interleaved layout: z[..., 2j] is the real and z[..., 2j+1] the
    imaginary quadrature of mode j, each scaled to std 1/2.
    """
    z = np.asarray(z)
    if z.shape[-1] % 2:
        raise ValueError("need an even number of normal deviates")
    return VACUUM_QUAD_STD * (z[..., 0::2] + 1j * z[..., 1::2])


def sample_vacuum_mode(rng: np.random.Generator) -> complex:
    """One vacuum amplitude; consumes exactly two normal deviates."""
    z = rng.standard_normal(2)
    return complex(VACUUM_QUAD_STD * z[0], VACUUM_QUAD_STD * z[1])


def sample_vacuum_modes(rng: np.random.Generator, n_modes: int) -> np.ndarray:
    """n_modes vacuum amplitudes from one stream, in draw order."""
    return gaussian_pair_to_complex(rng.standard_normal(2 * n_modes))


def symmetric_intensity(alpha) -> np.ndarray:
    """|alpha|^2, the symmetrically ordered intensity of a trajectory."""
    a = np.asarray(alpha)
    return (a * a.conj()).real


def corrected_photon_number(alpha) -> np.ndarray:
    """Per-trajectory photon number |alpha|^2 - 1/2.

    Negative values are legitimate: only ensemble means are physical.
    """
    return symmetric_intensity(alpha) - ORDERING_CORRECTION


def corrected_variance(intensities) -> float:
    """Photon-number variance of an ensemble of symmetric intensities.

    Population form <I^2> - <I>^2 minus the quarter-photon ordering term.
    Vacuum gives 0, a thermal ensemble of mean photon number G gives
    G + G^2.
    """
    i = np.asarray(intensities, dtype=float)
    if i.size == 0:
        raise ValueError("empty ensemble")
    m = i.mean()
    return float((i * i).mean() - m * m - 0.25)


def corrected_covariance(intensities_a, intensities_b) -> float:
    """Photon-number covariance between two distinct modes.

    <Ia Ib> - <Ia><Ib>; no ordering term because the vacuum quadratures
    of distinct modes are uncorrelated.  Feeding the same ensemble twice
    therefore returns corrected_variance + 1/4.
    """
    a = np.asarray(intensities_a, dtype=float)
    b = np.asarray(intensities_b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("ensembles must be non-empty and equally shaped")
    return float((a * b).mean() - a.mean() * b.mean())
