"""Split-step stochastic propagation of two polarization fields.

A trajectory starts from an independent vacuum sample in every pixel of
a transverse grid, one complex amplitude per polarization.  Propagation
through the nonlinear crystal alternates two exactly solvable half
problems (symmetrized Strang splitting):

gain step (direct domain)
    dA_H/dz = kappa(x, y) conj(A_V) and symmetrically for V, with
    kappa = gain_per_length * pump(x, y).  Over a step dz the exact
    solution is the per-pixel two-mode squeeze
    A_H' = cosh(kappa dz) A_H + sinh(kappa dz) conj(A_V).

diffraction / phase-matching step (Fourier domain)
    each polarization's spectrum acquires a unit-modulus phase
    exp(i phi_pol(q) dz) with

        phi_H(q) = -diffraction_coeff |q|^2
                   + mismatch_coeff (|q|^2 - ring_radius^2)
        phi_V(q) = phi_H evaluated at q - (0, ring_offset)

    so the V cone is displaced along y.  What controls pair production
    at (q, -q) is the accumulated pair dephasing
    delta(q) = phi_H(q) + phi_V(-q); modes with |delta| L >> 1 stay
    dark, carving the two intersecting far-field rings.

Far-field images use the unitary centered transform so that the
half-photon correction applies unchanged in either plane.  All
operations accept arrays with leading batch dimensions; grids are
(nx, ny) with axis 0 along x and the origin at index (nx//2, ny//2).

Per-trajectory randomness follows the global stream contract: one
trajectory consumes 4 nx ny grid normals (H pixels then V pixels,
re/im interleaved, row-major) followed by 16 analyzer-port normals,
drawn from stream_generator(master_seed, trajectory_index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, EstimationError, SamplingCheckError
from .modes import (AnalyzerSettings, FourModeState, measure_bell_ports,
                    validate_efficiency)
from .phasespace import (ORDERING_CORRECTION, gaussian_pair_to_complex,
                         stream_generator)

# trajectories propagated per vectorized FFT call; fixed so that batch
# sums never depend on runtime conditions
CHUNK_TRAJECTORIES = 32

# scipy's pocketfft build is noticeably faster than numpy's for the
# repeated 2-D transforms of the split-step loop; fall back transparently.
# The _fft2/_ifft2 helpers may destroy their input, so callers must pass
# arrays they own.
try:
    from scipy import fft as _fftlib

    def _fft2(a: np.ndarray) -> np.ndarray:
        return _fftlib.fft2(a, axes=(-2, -1), overwrite_x=True)

    def _ifft2(a: np.ndarray) -> np.ndarray:
        return _fftlib.ifft2(a, axes=(-2, -1), overwrite_x=True)
except ImportError:  # pragma: no cover - exercised only without scipy
    def _fft2(a: np.ndarray) -> np.ndarray:
        return np.fft.fft2(a, axes=(-2, -1))

    def _ifft2(a: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(a, axes=(-2, -1))


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass
class FieldGrid:
    """Two polarization amplitude arrays on a square-pixel grid.

    Arrays may carry leading batch dimensions; the trailing two axes are
    (nx, ny).  ``dx`` is the pixel pitch of whatever plane the grid
    represents (transverse position, or spatial frequency after
    far_field).
    """

    nx: int
    ny: int
    dx: float
    a_h: np.ndarray
    a_v: np.ndarray

    def __post_init__(self):
        if not (_is_power_of_two(self.nx) and _is_power_of_two(self.ny)):
            raise ConfigError(
                f"grid dimensions must be powers of two, got {self.nx}x{self.ny}")
        if self.dx <= 0:
            raise ConfigError(f"pixel pitch must be positive, got {self.dx}")
        for name, arr in (("a_h", self.a_h), ("a_v", self.a_v)):
            if arr.shape[-2:] != (self.nx, self.ny):
                raise ConfigError(
                    f"{name} has shape {arr.shape}, expected trailing "
                    f"({self.nx}, {self.ny})")


@dataclass(frozen=True)
class CrystalParams:
    """Crystal and phase-matching model parameters.

    ``pump_waist`` is the 1/e^2 intensity radius of the Gaussian pump
    (the amplitude profile exp(-r^2/waist^2) multiplies the gain);
    infinity selects a plane wave.  ``ring_radius`` sets where the
    mismatch term vanishes and ``ring_offset`` displaces the V cone
    along y.  ``mismatch_coeff`` must exceed ``diffraction_coeff`` for
    the pair dephasing to confine gain to a ring of spatial frequencies.
    """

    length: float
    nsteps: int = 8
    gain_per_length: float = 0.0
    pump_waist: float = math.inf
    diffraction_coeff: float = 0.0
    mismatch_coeff: float = 0.0
    ring_radius: float = 0.0
    ring_offset: float = 0.0

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigError(f"crystal length must be > 0, got {self.length}")
        if self.nsteps < 1:
            raise ConfigError(f"nsteps must be >= 1, got {self.nsteps}")
        if self.gain_per_length < 0:
            raise ConfigError(
                f"gain per length must be >= 0, got {self.gain_per_length}")
        if not self.pump_waist > 0:
            raise ConfigError(
                f"pump waist must be > 0 (may be inf), got {self.pump_waist}")
        if self.ring_radius < 0:
            raise ConfigError(
                f"ring radius must be >= 0, got {self.ring_radius}")


@dataclass(frozen=True)
class PixelPairSelection:
    """Far-field pixel coordinates of the two analyzed modes.

    The second pixel must be the point reflection of the first through
    the grid origin (px // 2 indices), which is where its phase-matched
    partner mode lives.
    """

    first: tuple[int, int]
    second: tuple[int, int]


@dataclass(frozen=True)
class SamplingReport:
    """Result of the spectral sampling diagnostic (see check_sampling)."""

    passed: bool
    q_active_max: float
    q_limit: float
    margin: float
    delta_cutoff: float
    threshold: float
    message: str


# ----------------------------------------------------------------------
# coordinate helpers
# ----------------------------------------------------------------------

def centered_coordinates(n: int, dx: float) -> np.ndarray:
    """Positions (or frequencies) with the origin at index n // 2."""
    return (np.arange(n) - n // 2) * dx


def frequency_pitch(n: int, dx: float) -> float:
    return 2.0 * math.pi / (n * dx)


def pixel_to_frequency(n: int, dx: float, index: int) -> float:
    return (index - n // 2) * frequency_pitch(n, dx)


def frequency_to_pixel(n: int, dx: float, q: float) -> int:
    return n // 2 + round(q / frequency_pitch(n, dx))


def partner_pixel(nx: int, ny: int, pixel: tuple[int, int]) -> tuple[int, int]:
    """Index of the point-symmetric pixel (q -> -q) on the FFT grid."""
    ix, iy = pixel
    return ((nx - ix) % nx, (ny - iy) % ny)


def flip_map(arr: np.ndarray) -> np.ndarray:
    """Rearrange so that entry [.., ix, iy] holds the partner's value."""
    return np.roll(arr[..., ::-1, ::-1], 1, axis=(-2, -1))


# ----------------------------------------------------------------------
# propagation
# ----------------------------------------------------------------------

def pump_profile(nx: int, ny: int, dx: float, waist: float) -> np.ndarray:
    """Normalized pump amplitude, peak 1 at the grid origin."""
    if math.isinf(waist):
        return np.ones((nx, ny))
    x = centered_coordinates(nx, dx)
    y = centered_coordinates(ny, dx)
    rsq = x[:, None] ** 2 + y[None, :] ** 2
    return np.exp(-rsq / waist ** 2)


def _phase_grids(params: CrystalParams, nx: int, ny: int, dx: float):
    """Per-unit-length spectral phases on the unshifted FFT grid."""
    qx = 2.0 * math.pi * np.fft.fftfreq(nx, d=dx)
    qy = 2.0 * math.pi * np.fft.fftfreq(ny, d=dx)

    def phase(qy_offset):
        qsq = qx[:, None] ** 2 + (qy[None, :] - qy_offset) ** 2
        return (-params.diffraction_coeff * qsq
                + params.mismatch_coeff * (qsq - params.ring_radius ** 2))

    return phase(0.0), phase(params.ring_offset)


class _PropagationTables:
    """Precomputed per-step factors shared by every trajectory.

    Spectral multipliers are stored stacked over the polarization axis
    with shape (2, 1, nx, ny) so the packed representation below needs a
    single FFT call per direction per step.
    """

    def __init__(self, params: CrystalParams, nx: int, ny: int, dx: float):
        dz = params.length / params.nsteps
        kdz = params.gain_per_length * dz * pump_profile(nx, ny, dx,
                                                         params.pump_waist)
        self.nsteps = params.nsteps
        self.cosh = np.cosh(kdz)
        self.sinh = np.sinh(kdz)
        phi = np.stack(_phase_grids(params, nx, ny, dx))[:, None]
        self.half = np.exp(0.5j * dz * phi)
        self.full = np.exp(1.0j * dz * phi)


def _apply_spectral_packed(packed: np.ndarray, mult: np.ndarray) -> np.ndarray:
    f = _fft2(packed)
    np.multiply(f, mult, out=f)
    return _ifft2(f)


def _propagate_packed(a: np.ndarray, tables: _PropagationTables) -> np.ndarray:
    """Strang-split evolution of a packed (2, batch, nx, ny) field.

    Index 0 of the first axis is the H field, index 1 the V field; the
    gain step couples each to the conjugate of the other, which the
    reversed view a[::-1] provides without copies.
    """
    w = np.empty_like(a)
    a = _apply_spectral_packed(a, tables.half)
    for step in range(tables.nsteps):
        np.conjugate(a[::-1], out=w)
        np.multiply(a, tables.cosh, out=a)
        np.multiply(w, tables.sinh, out=w)
        a += w
        if step < tables.nsteps - 1:
            a = _apply_spectral_packed(a, tables.full)
    return _apply_spectral_packed(a, tables.half)


def _propagate_arrays(a_h, a_v, tables: _PropagationTables):
    lead = a_h.shape[:-2]
    nx, ny = a_h.shape[-2:]
    packed = np.stack([a_h.reshape(-1, nx, ny), a_v.reshape(-1, nx, ny)])
    packed = _propagate_packed(packed, tables)
    return (packed[0].reshape(*lead, nx, ny),
            packed[1].reshape(*lead, nx, ny))


def init_vacuum_grid(nx: int, ny: int, rng: np.random.Generator,
                     dx: float = 1.0) -> FieldGrid:
    """Fresh vacuum in every pixel of both polarizations.

    Consumes exactly 4 nx ny normals in the documented layout, so grids
    are reproducible from the trajectory stream alone.
    """
    n_pix = nx * ny
    z = rng.standard_normal(4 * n_pix)
    a_h = gaussian_pair_to_complex(z[:2 * n_pix]).reshape(nx, ny)
    a_v = gaussian_pair_to_complex(z[2 * n_pix:]).reshape(nx, ny)
    return FieldGrid(nx=nx, ny=ny, dx=dx, a_h=a_h, a_v=a_v)


def gain_step(grid: FieldGrid, params: CrystalParams, dz: float) -> FieldGrid:
    """Exact per-pixel parametric amplification over a slice dz."""
    if dz <= 0:
        raise ConfigError(f"step size must be > 0, got {dz}")
    kdz = params.gain_per_length * dz * pump_profile(grid.nx, grid.ny,
                                                     grid.dx, params.pump_waist)
    c, s = np.cosh(kdz), np.sinh(kdz)
    return replace(grid,
                   a_h=c * grid.a_h + s * np.conj(grid.a_v),
                   a_v=c * grid.a_v + s * np.conj(grid.a_h))


def diffraction_step(grid: FieldGrid, params: CrystalParams,
                     dz: float) -> FieldGrid:
    """Spectral phase advance over dz; conserves intensity exactly."""
    if dz <= 0:
        raise ConfigError(f"step size must be > 0, got {dz}")
    phi = np.stack(_phase_grids(params, grid.nx, grid.ny, grid.dx))[:, None]
    nx, ny = grid.nx, grid.ny
    lead = grid.a_h.shape[:-2]
    packed = np.stack([grid.a_h.reshape(-1, nx, ny),
                       grid.a_v.reshape(-1, nx, ny)])
    packed = _apply_spectral_packed(packed, np.exp(1.0j * dz * phi))
    return replace(grid, a_h=packed[0].reshape(*lead, nx, ny),
                   a_v=packed[1].reshape(*lead, nx, ny))


def propagate(grid: FieldGrid, params: CrystalParams,
              enforce_sampling: bool = True) -> FieldGrid:
    """Strang-split propagation through the full crystal length.

    Verifies first that the amplified spectrum fits the grid (see
    check_sampling) and raises SamplingCheckError otherwise;
    ``enforce_sampling=False`` skips the guard for configurations that
    deliberately have no spectral cutoff (e.g. diffraction-free
    cross-checks against the four-mode engine).
    """
    if enforce_sampling:
        report = check_sampling(params, grid.nx, grid.ny, grid.dx)
        if not report.passed:
            raise SamplingCheckError(report.message, report=report)
    tables = _PropagationTables(params, grid.nx, grid.ny, grid.dx)
    a_h, a_v = _propagate_arrays(grid.a_h, grid.a_v, tables)
    return replace(grid, a_h=a_h, a_v=a_v)


# ----------------------------------------------------------------------
# sampling diagnostic
# ----------------------------------------------------------------------

def pair_dephasing_radius_sq(params: CrystalParams) -> float:
    """Squared radius (in the symmetrized frequency s) where the pair
    dephasing delta(q) = phi_H(q) + phi_V(-q) vanishes.

    delta depends on q only through s = q + (0, ring_offset/2):
    delta = 2 (mismatch - diffraction) (|s|^2 - R^2) with the value
    returned here being R^2 (it may be negative, meaning delta never
    vanishes and the rings are absent).
    """
    diff = params.mismatch_coeff - params.diffraction_coeff
    if diff == 0.0:
        return math.nan
    return (params.mismatch_coeff * params.ring_radius ** 2 / diff
            - params.ring_offset ** 2 / 4.0)


def check_sampling(params: CrystalParams, nx: int, ny: int, dx: float,
                   threshold: float = 1e-3) -> SamplingReport:
    """Verify the amplified spectrum stays below half the Nyquist limit.

    A mode pair with dephasing delta has its added photon number bounded
    by the envelope g^2 / ((delta/2)^2 - g^2); the diagnostic finds the
    largest |q| whose envelope still exceeds ``threshold`` times the
    peak gain sinh^2(g L) and compares it against q_limit = pi / (2 dx),
    i.e. half the grid's Nyquist frequency.  This is a diagnostic only;
    propagate() turns a failure into SamplingCheckError.
    """
    g = params.gain_per_length
    q_limit = 0.5 * math.pi / dx
    if g == 0.0:
        return SamplingReport(True, 0.0, q_limit, 1.0, 0.0, threshold,
                              "no gain: nothing to resolve")
    tau = threshold * math.sinh(g * params.length) ** 2
    delta_cutoff = 2.0 * g * math.sqrt(1.0 + 1.0 / tau)

    diff = params.mismatch_coeff - params.diffraction_coeff
    if diff == 0.0:
        # constant dephasing: gain is either everywhere or nowhere
        delta_const = -2.0 * params.mismatch_coeff * params.ring_radius ** 2
        if abs(delta_const) <= delta_cutoff:
            q_active = math.inf
        else:
            q_active = 0.0
    else:
        outer_sq = pair_dephasing_radius_sq(params) \
            + delta_cutoff / (2.0 * abs(diff))
        if outer_sq <= 0.0:
            q_active = 0.0
        else:
            q_active = math.sqrt(outer_sq) + abs(params.ring_offset) / 2.0

    passed = q_active <= q_limit
    margin = (q_limit - q_active) / q_limit if math.isfinite(q_active) else -math.inf
    if passed:
        message = (f"sampling ok: active spectrum reaches {q_active:.4g}, "
                   f"limit {q_limit:.4g} (margin {margin:.1%})")
    else:
        message = (f"grid too coarse: amplified spectrum reaches "
                   f"{q_active:.4g} but half-Nyquist is {q_limit:.4g} for "
                   f"dx={dx:g} on {nx}x{ny}; reduce dx, enlarge the grid, "
                   "or confine phase matching")
    return SamplingReport(passed, q_active, q_limit, margin,
                          delta_cutoff, threshold, message)


# ----------------------------------------------------------------------
# far field and pixel extraction
# ----------------------------------------------------------------------

def _fft_centered(a: np.ndarray) -> np.ndarray:
    axes = (-2, -1)
    f = _fft2(np.fft.ifftshift(a, axes=axes))
    f *= 1.0 / math.sqrt(a.shape[-2] * a.shape[-1])  # unitary normalization
    return np.fft.fftshift(f, axes=axes)


def far_field(grid: FieldGrid) -> FieldGrid:
    """Centered unitary Fourier transform of both polarizations.

    Unitarity keeps total intensity and the vacuum law invariant, so the
    half-photon correction applies unchanged per far-field pixel.  The
    returned grid's ``dx`` is the frequency pitch along x (equal to the
    y pitch for square grids).
    """
    return FieldGrid(nx=grid.nx, ny=grid.ny,
                     dx=frequency_pitch(grid.nx, grid.dx),
                     a_h=_fft_centered(grid.a_h), a_v=_fft_centered(grid.a_v))


def validate_pixel_pair(nx: int, ny: int,
                        sel: PixelPairSelection) -> PixelPairSelection:
    ix, iy = sel.first
    if not (0 < ix < nx and 0 < iy < ny):
        raise ConfigError(
            f"pixel {sel.first} outside the interior of a {nx}x{ny} grid")
    expected = partner_pixel(nx, ny, sel.first)
    if tuple(sel.second) != expected:
        raise ConfigError(
            f"pixels must be point-symmetric about the grid origin: "
            f"partner of {sel.first} is {expected}, got {sel.second}")
    if tuple(sel.second) == tuple(sel.first):
        raise ConfigError(
            f"pixel {sel.first} is its own mirror image; the two analyzed "
            "modes must be distinct")
    return sel


def extract_pixel_pair(farfield: FieldGrid,
                       sel: PixelPairSelection) -> FourModeState:
    """Read the four analyzed mode amplitudes from a far-field grid."""
    validate_pixel_pair(farfield.nx, farfield.ny, sel)
    (x1, y1), (x2, y2) = sel.first, sel.second
    return FourModeState(a1h=farfield.a_h[..., x1, y1],
                         a1v=farfield.a_v[..., x1, y1],
                         a2h=farfield.a_h[..., x2, y2],
                         a2v=farfield.a_v[..., x2, y2])


# ----------------------------------------------------------------------
# trajectory batches and image accumulation
# ----------------------------------------------------------------------

@dataclass
class SpatialSums:
    """Image-plane sums over a set of trajectories.

    ``intensity_h`` and ``intensity_v`` are sums of uncorrected far-field
    intensities; ``pair_product`` sums T * flip(T) where T is the
    per-trajectory corrected pixel total (both polarizations, one photon
    subtracted).  ``ports`` holds the eight-port measurement rows when a
    pixel pair was analyzed, else None.
    """

    count: int
    intensity_h: np.ndarray
    intensity_v: np.ndarray
    pair_product: np.ndarray
    ports: np.ndarray | None = None

    def add(self, other: "SpatialSums") -> "SpatialSums":
        ports = None
        if (self.ports is None) != (other.ports is None):
            raise ValueError("cannot combine sums with and without port rows")
        if self.ports is not None:
            ports = np.concatenate([self.ports, other.ports])
        return SpatialSums(count=self.count + other.count,
                           intensity_h=self.intensity_h + other.intensity_h,
                           intensity_v=self.intensity_v + other.intensity_v,
                           pair_product=self.pair_product + other.pair_product,
                           ports=ports)

    # corrected ensemble maps ------------------------------------------

    def mean_h(self) -> np.ndarray:
        return self.intensity_h / self.count - ORDERING_CORRECTION

    def mean_v(self) -> np.ndarray:
        return self.intensity_v / self.count - ORDERING_CORRECTION

    def mean_total_uncorrected(self) -> np.ndarray:
        return (self.intensity_h + self.intensity_v) / self.count

    def covariance_map(self) -> np.ndarray:
        """Cov(T(pixel), T(partner pixel)) per pixel."""
        t_mean = self.mean_h() + self.mean_v()
        return self.pair_product / self.count - t_mean * flip_map(t_mean)


def combine_spatial_sums(blocks) -> SpatialSums:
    """Fold per-batch sums in the given (batch-index) order."""
    blocks = list(blocks)
    if not blocks:
        raise EstimationError("no spatial batches to combine")
    total = blocks[0]
    for block in blocks[1:]:
        total = total.add(block)
    return total


def grid_normals_per_trajectory(nx: int, ny: int) -> int:
    return 4 * nx * ny + 16


def spatial_trajectory_block(params: CrystalParams, nx: int, ny: int,
                             dx: float, master_seed: int, start: int,
                             count: int,
                             angles: AnalyzerSettings | None = None,
                             eta: float = 1.0,
                             selection: PixelPairSelection | None = None,
                             enforce_sampling: bool = True) -> SpatialSums:
    """Propagate a contiguous trajectory range and accumulate images.

    Each trajectory i in [start, start + count) draws from its own
    stream; results are therefore independent of how ranges are split
    across workers.  When ``selection`` (and ``angles``) are given the
    analyzed pixel pair is run through the polarization analyzers and
    the eight-port rows are returned alongside the image sums; the 16
    analyzer normals are consumed from the stream either way.
    """
    if enforce_sampling:
        report = check_sampling(params, nx, ny, dx)
        if not report.passed:
            raise SamplingCheckError(report.message, report=report)
    if selection is not None:
        validate_pixel_pair(nx, ny, selection)
        if angles is None:
            raise ConfigError("analyzer angles required to measure a pixel pair")
        eta = validate_efficiency(eta)
    tables = _PropagationTables(params, nx, ny, dx)
    n_pix = nx * ny
    shape = (nx, ny)
    sums = SpatialSums(count=0, intensity_h=np.zeros(shape),
                       intensity_v=np.zeros(shape),
                       pair_product=np.zeros(shape),
                       ports=None if selection is None else
                       np.empty((0, 8)))
    port_rows = []
    for first in range(0, count, CHUNK_TRAJECTORIES):
        b = min(CHUNK_TRAJECTORIES, count - first)
        z = np.empty((b, 4 * n_pix + 16))
        for i in range(b):
            rng = stream_generator(master_seed, start + first + i)
            z[i] = rng.standard_normal(4 * n_pix + 16)
        a_h = gaussian_pair_to_complex(z[:, :2 * n_pix]).reshape(b, nx, ny)
        a_v = gaussian_pair_to_complex(z[:, 2 * n_pix:4 * n_pix]).reshape(b, nx, ny)
        a_h, a_v = _propagate_arrays(a_h, a_v, tables)
        f_h, f_v = _fft_centered(a_h), _fft_centered(a_v)
        i_h = (f_h * np.conj(f_h)).real
        i_v = (f_v * np.conj(f_v)).real
        sums.intensity_h += i_h.sum(axis=0)
        sums.intensity_v += i_v.sum(axis=0)
        t = i_h + i_v - 2.0 * ORDERING_CORRECTION
        sums.pair_product += (t * flip_map(t)).sum(axis=0)
        sums.count += b
        if selection is not None:
            state = FourModeState(
                a1h=f_h[:, selection.first[0], selection.first[1]],
                a1v=f_v[:, selection.first[0], selection.first[1]],
                a2h=f_h[:, selection.second[0], selection.second[1]],
                a2v=f_v[:, selection.second[0], selection.second[1]])
            port_rows.append(measure_bell_ports(state, angles, eta,
                                                z[:, 4 * n_pix:]))
    if selection is not None:
        sums.ports = np.concatenate(port_rows) if port_rows else np.empty((0, 8))
    return sums


# ----------------------------------------------------------------------
# ring geometry and intersection scan
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RingGeometry:
    """Far-field layout implied by the phase-matching parameters."""

    valid: bool
    radius: float
    h_center: tuple[float, float]
    v_center: tuple[float, float]
    intersections: tuple[tuple[float, float], ...]


def ring_geometry(params: CrystalParams) -> RingGeometry:
    """Centers, radius and intersection frequencies of the two rings.

    The H ring is centered at (0, -ring_offset/2) and the V ring at
    (0, +ring_offset/2), both with the radius where the pair dephasing
    vanishes.  Intersections (when they exist) lie on the qx axis.
    """
    half = params.ring_offset / 2.0
    rsq = pair_dephasing_radius_sq(params)
    if not (math.isfinite(rsq) and rsq > 0.0):
        return RingGeometry(False, math.nan, (0.0, -half), (0.0, half), ())
    radius = math.sqrt(rsq)
    cross_sq = rsq - half * half
    if cross_sq <= 0.0:
        crossings = ()
    else:
        qx = math.sqrt(cross_sq)
        crossings = ((qx, 0.0), (-qx, 0.0))
    return RingGeometry(True, radius, (0.0, -half), (0.0, half), crossings)


def box_smooth(arr: np.ndarray, radius: int = 1) -> np.ndarray:
    """Periodic box average over a (2 radius + 1)^2 neighborhood."""
    if radius < 0:
        raise ConfigError(f"smoothing radius must be >= 0, got {radius}")
    if radius == 0:
        return np.array(arr, copy=True)
    out = np.zeros_like(arr, dtype=float)
    for ox in range(-radius, radius + 1):
        for oy in range(-radius, radius + 1):
            out += np.roll(arr, (ox, oy), axis=(-2, -1))
    return out / (2 * radius + 1) ** 2


def scan_intersection_pixels(mean_h: np.ndarray, mean_v: np.ndarray,
                             covariance: np.ndarray,
                             smooth_radius: int = 1) -> PixelPairSelection:
    """Locate the analyzed pixel pair from accumulated statistics.

    Both rings must light up the candidate pixel and its mirror partner:
    after box smoothing (which regularizes single-pixel shot noise) the
    corrected mean of each polarization must exceed half its own ring
    maximum at both pixels.  Among qualifying pixels the smoothed
    partner covariance is maximized; at a true ring intersection the
    covariance doubles relative to a plain on-ring pair, so the scan is
    insensitive to the exact half-maximum threshold.
    """
    sm_h = box_smooth(mean_h, smooth_radius)
    sm_v = box_smooth(mean_v, smooth_radius)
    sm_cov = box_smooth(covariance, smooth_radius)
    peak_h, peak_v = sm_h.max(), sm_v.max()
    if peak_h <= 0.0 or peak_v <= 0.0:
        raise EstimationError(
            "no qualifying pixel pair: mean intensity shows no gain "
            "(is the pump off?)")
    ok = (sm_h > 0.5 * peak_h) & (sm_v > 0.5 * peak_v)
    ok &= flip_map(ok)
    # pixels without a distinct interior partner can never qualify
    nx, ny = ok.shape
    ok[0, :] = False
    ok[:, 0] = False
    ok[nx // 2, ny // 2] = False
    if not ok.any():
        raise EstimationError(
            "no qualifying pixel pair: no mirror-symmetric pixel carries "
            "both polarizations above half maximum (rings may not "
            "intersect, or too few trajectories accumulated)")
    masked = np.where(ok, sm_cov, -np.inf)
    ix, iy = np.unravel_index(int(np.argmax(masked)), masked.shape)
    first = (int(ix), int(iy))
    return PixelPairSelection(first=first,
                              second=partner_pixel(nx, ny, first))
