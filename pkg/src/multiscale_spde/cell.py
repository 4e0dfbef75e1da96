"""Unit-cell problems for the periodic generator L = b d/dx + (sigma^2/2) d2/dx2.

Solves the stationary adjoint problem L* rho = 0 for the invariant
density, the corrector problem L chi = -b, and derives the effective
diffusivity mu (the decay rate of slow modes, exp(-mu m^2 t)) and the
spectral gap omega of the fast dynamics.  Everything is spectral: the
generator restricted to a uniformly spaced set of wavenumbers is a small
dense matrix built from the coefficient convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import FitFailed, SolveFailed
from .fourier import SpectralField, inner_product, l2_norm, multiply, sobolev_norm
from .reporting import CheckReport

__all__ = [
    "Coefficients",
    "CellSolution",
    "DecayFit",
    "validate_coefficients",
    "generator_matrix",
    "invariant_density",
    "corrector",
    "effective_diffusivity",
    "diffusivity_from_decay",
    "spectral_gap",
    "solve_cell",
]

DEFAULT_CELL_MODES = 128

# Residual contracts for the two cell solves.
RHO_RESIDUAL_TOL = 1e-8
CHI_RESIDUAL_TOL = 1e-8


class Coefficients:
    """Drift b and diffusion sigma, periodic on [0, 2*pi].

    Both are real trigonometric polynomials, which guarantees the
    smoothness the cell problems need.  delta and delta_prime are the
    declared ellipticity bounds 0 < delta <= sigma <= delta_prime; when
    omitted they are measured on a fine grid.
    """

    def __init__(self, b: SpectralField, sigma: SpectralField,
                 delta: float | None = None, delta_prime: float | None = None):
        self.b = b
        self.sigma = sigma
        grid = np.real(sigma.to_grid(max(256, 4 * sigma.n)))
        self.delta = float(grid.min()) if delta is None else float(delta)
        self.delta_prime = float(grid.max()) if delta_prime is None else float(delta_prime)

    @classmethod
    def heat(cls, sigma_value: float = np.sqrt(2.0)) -> "Coefficients":
        """Pure diffusion, b = 0; sigma = sqrt(2) gives L = d2/dx2."""
        return cls(SpectralField.zero(2), SpectralField.constant(sigma_value))

    @classmethod
    def cosine_potential(cls, amplitude: float = 1.0) -> "Coefficients":
        """Gradient drift in the potential A cos(x): b = A sin(x), sigma = 1."""
        b = SpectralField.from_modes({1: -0.5j * amplitude, -1: 0.5j * amplitude})
        return cls(b, SpectralField.constant(1.0))

    @classmethod
    def from_modes(cls, b_modes: dict, sigma_modes: dict, **kwargs) -> "Coefficients":
        return cls(SpectralField.from_modes(b_modes), SpectralField.from_modes(sigma_modes), **kwargs)

    @property
    def max_harmonic(self) -> int:
        return max(self.b.max_harmonic(), self.sigma.max_harmonic(), 1)

    def sigma_squared(self) -> SpectralField:
        # pad first: the square's band is twice sigma's and must be exact
        return multiply(self.sigma.pad_to(2 * self.sigma.n), self.sigma)

    def __repr__(self) -> str:
        return (f"Coefficients(J={self.max_harmonic}, delta={self.delta:.4g}, "
                f"delta_prime={self.delta_prime:.4g})")


def validate_coefficients(c: Coefficients, n_grid: int = 2048) -> CheckReport:
    """Check ellipticity, the centering condition, and smoothness.

    Report-style: every condition is listed with its measured residual.
    """
    report = CheckReport("coefficient assumptions")
    sig = np.real(c.sigma.to_grid(n_grid))
    report.add("ellipticity: min sigma > 0", bool(sig.min() > 0.0), float(sig.min()), 0.0)
    report.add("ellipticity: delta <= sigma", bool(sig.min() >= c.delta - 1e-12),
               float(sig.min()), c.delta)
    report.add("ellipticity: sigma <= delta_prime", bool(sig.max() <= c.delta_prime + 1e-12),
               float(sig.max()), c.delta_prime)

    if sig.min() > 0.0:
        bg = np.real(c.b.to_grid(n_grid))
        ratio = bg / sig**2
        mean = abs(float(np.mean(ratio)))
        scale = float(np.sqrt(np.mean(ratio**2)))
        ok = mean <= 1e-10 * scale or (mean == 0.0 and scale == 0.0)
        report.add("centering: |mean(b/sigma^2)| <= 1e-10 |b/sigma^2|", ok, mean,
                   1e-10 * scale)
    else:
        report.add("centering: |mean(b/sigma^2)|", False, float("nan"),
                   note="sigma touches zero; ratio undefined")

    band = max(c.b.max_harmonic(), c.sigma.max_harmonic())
    report.add("smoothness: trig-polynomial coefficients", True, float(band),
               note="finite band implies two continuous derivatives")
    return report


def generator_matrix(c: Coefficients, ks, eps: float = 1.0, adjoint: bool = False) -> np.ndarray:
    """Dense matrix of L_eps (or its adjoint) on uniformly spaced wavenumbers.

    L_eps = (1/eps) b(x/eps) d/dx + (1/2) sigma^2(x/eps) d2/dx2.  The
    rows and columns are the given wavenumbers, which must be an
    arithmetic progression with spacing 1/eps; multiplication by an
    oscillated coefficient only couples within such a progression, so
    the matrix is exact (Galerkin truncation at the band edge).
    """
    ks = np.asarray(ks, dtype=int)
    r = int(round(1.0 / eps))
    if abs(1.0 / eps - r) > 1e-9:
        raise ValueError("1/eps must be an integer")
    if ks.size > 1 and np.any(np.diff(ks) != r):
        raise ValueError("wavenumbers must be consecutive in steps of 1/eps")

    m = ks.size
    s2 = c.sigma_squared()
    offsets = np.arange(-(m - 1), m)
    b_off = np.array([c.b.coeff(int(l)) for l in offsets])
    s2_off = np.array([s2.coeff(int(l)) for l in offsets])
    idx = (np.arange(m)[:, None] - np.arange(m)[None, :]) + (m - 1)
    bmat = b_off[idx]
    smat = s2_off[idx]

    kf = ks.astype(float)
    if adjoint:
        # L* f = -(1/eps)((b^eps) f)' + (1/2)((sigma^2)^eps f)''
        return (-1j * kf[:, None]) * bmat / eps + (-0.5 * kf[:, None] ** 2) * smat
    return (1j * kf[None, :]) * bmat / eps + (-0.5 * kf[None, :] ** 2) * smat


def _hermitize(f: SpectralField) -> SpectralField:
    """Project onto the real-field symmetry coeff(-k) = conj(coeff(k))."""
    out = f.coeffs.copy()
    half = f.n // 2
    pos = out[half + 1 :]
    neg = out[half - 1 : 0 : -1]
    avg = 0.5 * (pos + np.conj(neg))
    out[half + 1 :] = avg
    out[half - 1 : 0 : -1] = np.conj(avg)
    out[half] = out[half].real
    out[0] = out[0].real
    return SpectralField(out)


def invariant_density(c: Coefficients, n: int = DEFAULT_CELL_MODES) -> SpectralField:
    """Solve L* rho = 0, normalised to <rho, 1> = 1.

    The kernel vector is extracted by shifted inverse iteration on the
    dense spectral matrix, then normalised by its mean amplitude.  The
    solve runs on the symmetric band |k| <= N/2 - 1 so the truncation
    preserves the conjugate symmetry of the real density.
    """
    ks = np.arange(-n // 2 + 1, n // 2)
    centre = n // 2 - 1
    a = generator_matrix(c, ks, adjoint=True)
    shift = 1e-12 * max(1.0, np.abs(a).max())
    try:
        lu = sla.lu_factor(a - shift * np.eye(ks.size))
    except sla.LinAlgError as exc:  # pragma: no cover - pathological input
        raise SolveFailed("adjoint generator could not be factorised") from exc

    v = np.zeros(ks.size, dtype=complex)
    v[centre] = 1.0  # the constant mode overlaps the kernel
    for _ in range(4):
        v = sla.lu_solve(lu, v)
        v /= np.linalg.norm(v)

    mean_amp = v[centre]
    if abs(mean_amp) < 1e-8:
        raise SolveFailed("kernel vector has no mean component; kernel degenerate?")
    coeffs = np.zeros(n, dtype=complex)
    coeffs[1:] = v / mean_amp
    rho = _hermitize(SpectralField(coeffs))

    residual = float(np.linalg.norm(a @ rho.coeffs[1:]))
    if residual > RHO_RESIDUAL_TOL * sobolev_norm(rho, 2):
        raise SolveFailed(f"stationarity residual {residual:.3e} above tolerance")
    grid = np.real(rho.to_grid(max(4 * n, 256)))
    if grid.min() <= 0.0:
        raise SolveFailed("computed density is not positive on the grid")
    return rho


def corrector(c: Coefficients, rho: SpectralField, n: int | None = None) -> SpectralField:
    """Solve L chi = -b with periodic chi, normalised to <chi, rho> = 0."""
    if n is None:
        n = rho.n
    ks = np.arange(-n // 2 + 1, n // 2)  # symmetric band, as for the density
    a = generator_matrix(c, ks, adjoint=False)
    rhs = -c.b.pad_to(n).coeffs[1:]
    keep = ks != 0  # constants span the kernel of L; fix the mean to zero
    sol, *_ = np.linalg.lstsq(a[:, keep], rhs, rcond=None)
    coeffs = np.zeros(n, dtype=complex)
    coeffs[1:][keep] = sol
    chi = _hermitize(SpectralField(coeffs))

    # Any constant shift is admissible; pick the one orthogonal to rho.
    chi = chi - SpectralField.constant(inner_product(chi, rho).real, 2).pad_to(n)
    residual = float(np.linalg.norm(a @ chi.coeffs[1:] + c.b.pad_to(n).coeffs[1:]))
    bnorm = l2_norm(c.b)
    if bnorm > 0 and residual > CHI_RESIDUAL_TOL * bnorm:
        raise SolveFailed(f"corrector residual {residual:.3e} above tolerance")
    return chi


def effective_diffusivity(c: Coefficients, rho: SpectralField, chi: SpectralField) -> float:
    """mu = <(sigma^2/2) (1 + chi')^2, rho>, the slow-mode decay rate.

    For gradient drift b = -V' with sigma = 1 this reduces to
    1 / (2 <exp(2V)> <exp(-2V)>).
    """
    w = chi.derivative() + SpectralField.constant(1.0, 2)
    integrand = multiply(c.sigma_squared(), multiply(w, w))
    mu = 0.5 * inner_product(integrand, rho).real
    if mu <= 0:
        raise SolveFailed(f"effective diffusivity {mu:.3e} not positive")
    return float(mu)


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay rate fitted from a log-linear window."""

    rate: float
    r_squared: float
    t_window: tuple[float, float]
    n_samples: int


def _fit_log_decay(ts: np.ndarray, values: np.ndarray, min_r2: float,
                   what: str) -> DecayFit:
    if ts.size < 8:
        raise FitFailed(f"{what}: only {ts.size} samples in the fit window")
    y = np.log(values)
    slope, intercept = np.polyfit(ts, y, 1)
    pred = slope * ts + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if r2 < min_r2:
        raise FitFailed(f"{what}: fit R^2 = {r2:.6f} below {min_r2}")
    return DecayFit(rate=float(-slope), r_squared=float(r2),
                    t_window=(float(ts[0]), float(ts[-1])), n_samples=int(ts.size))


def _trapezoid_propagator(a: np.ndarray, dt: float) -> np.ndarray:
    n = a.shape[0]
    eye = np.eye(n)
    return sla.solve(eye - 0.5 * dt * a, eye + 0.5 * dt * a)


def diffusivity_from_decay(c: Coefficients, eps: float, m: int,
                           t_final: float | None = None, dt: float | None = None,
                           rho: SpectralField | None = None,
                           offsets: int = 12, min_r2: float = 0.999) -> float:
    """Estimate mu by evolving the adjoint flow d/dt f = L_eps* f from e_m.

    The trajectory is projected onto the slow pattern rho(x/eps) e_m and
    the exponential rate of the projection is fitted on [2 eps^2, T],
    skipping the initial boundary layer.  Returns rate / m^2.
    """
    r = int(round(1.0 / eps))
    if abs(eps * m) >= 0.5:
        raise ValueError("need eps * |m| < 1/2 for a resolved slow mode")
    if rho is None:
        rho = invariant_density(c)
    if dt is None:
        dt = min(1e-3, 0.1 * eps**2)

    ks = m + r * np.arange(-offsets, offsets + 1)
    a = generator_matrix(c, ks, eps=eps, adjoint=True)
    prop = _trapezoid_propagator(a, dt)

    pattern = np.array([rho.coeff(j) for j in range(-offsets, offsets + 1)])
    pattern /= np.vdot(pattern, pattern).real

    f = np.zeros(ks.size, dtype=complex)
    f[offsets] = 1.0  # e_m
    t_start = 2.0 * eps**2
    t_cap = t_final if t_final is not None else 60.0 / m**2

    ts, ps = [0.0], [abs(np.vdot(pattern, f))]
    t = 0.0
    p_ref = None
    while t < t_cap - 0.5 * dt:
        f = prop @ f
        t += dt
        p = abs(np.vdot(pattern, f))
        ts.append(t)
        ps.append(p)
        if t >= t_start and p_ref is None:
            p_ref = p
        if t_final is None and p_ref is not None and p < 0.35 * p_ref:
            break

    ts = np.asarray(ts)
    ps = np.asarray(ps)
    window = (ts >= t_start) & (ps > 0)
    fit = _fit_log_decay(ts[window], ps[window], min_r2, "slow-mode decay")
    return fit.rate / m**2


def spectral_gap(c: Coefficients, rho: SpectralField | None = None,
                 n: int = 96, dt: float = 1e-3, min_r2: float = 0.999) -> DecayFit:
    """Exponential forgetting rate of the fast flow d/dt g = L* g.

    Starts from 1 - rho (a mean-zero perturbation of the stationary
    state) and fits the decay of |g(t)|.  When 1 - rho vanishes, as for
    constant coefficients, a generic mean-zero seed is used instead.
    """
    if rho is None:
        rho = invariant_density(c, n)
    g0 = SpectralField.constant(1.0, 2).pad_to(n) - rho.truncate(n)
    if l2_norm(g0) < 1e-10:
        g0 = SpectralField.from_modes({1: 0.5, -1: 0.5}, n)

    ks = np.arange(-n // 2, n // 2)
    a = generator_matrix(c, ks, adjoint=True)
    prop = _trapezoid_propagator(a, dt)

    g = g0.coeffs.copy()
    norm0 = np.linalg.norm(g)
    ts, ns = [0.0], [norm0]
    t = 0.0
    max_steps = 400_000
    for _ in range(max_steps):
        g = prop @ g
        t += dt
        nv = np.linalg.norm(g)
        ts.append(t)
        ns.append(nv)
        if nv < norm0 * np.exp(-6.5):
            break
    else:
        raise FitFailed("fast flow did not decay within the step budget")

    ts = np.asarray(ts)
    rel = np.asarray(ns) / norm0
    window = (rel < np.exp(-0.5)) & (rel > np.exp(-6.0))
    return _fit_log_decay(ts[window], np.asarray(ns)[window], min_r2, "spectral gap")


@dataclass(frozen=True)
class CellSolution:
    """Invariant density, corrector, effective diffusivity and spectral gap."""

    rho: SpectralField
    chi: SpectralField
    mu: float
    omega: float
    omega_r_squared: float

    @property
    def enhancement(self) -> float:
        """|rho|, the white-noise amplification factor (>= 1)."""
        return l2_norm(self.rho)


def solve_cell(c: Coefficients, n: int = DEFAULT_CELL_MODES,
               with_gap: bool = True) -> CellSolution:
    rho = invariant_density(c, n)
    chi = corrector(c, rho, n)
    mu = effective_diffusivity(c, rho, chi)
    if with_gap:
        gap = spectral_gap(c, rho, min(n, 96))
        omega, r2 = gap.rate, gap.r_squared
    else:
        omega, r2 = float("nan"), float("nan")
    return CellSolution(rho=rho, chi=chi, mu=mu, omega=omega, omega_r_squared=r2)
