"""Configurational averaging of the pair kernels over 2D/3D spin baths.

The central object is the geometry integral

    W(gamma, d, t) = integral of (f_deer - f_echo) over the bath region

(2D: the surface plane at distance d; 3D: the half-space beyond d), in nm^2
or nm^3.  The normalized coherence ratio is F = exp(alpha * sigma * W) with
sigma in internal nm units.  A positional Monte Carlo sampler provides the
independent cross-check.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import constants as cst
from .curves import DecayCurve
from .errors import InsufficientDataError, IntegrationAccuracyError, TruncationError
from .kernels import deer_echo_fields, deer_minus_echo_field

DOUBLE_LOG_EPS = 1e-6

_MEMO_QUANTUM = 1e-9
_memo_lock = threading.Lock()
_memo: dict = {}


@dataclass(frozen=True)
class BathParams:
    """Bath description at the interface level.

    density: um^-2 (2D) or um^-3 (3D); gamma_mhz: depolarization rate as a
    linear frequency; depth_nm: NV-to-bath distance; flip_fraction: share
    of bath spins actually inverted by the pi pulse.
    """

    density: float
    gamma_mhz: float = 0.0
    depth_nm: float = 4.0
    dimensionality: str = "2d"
    flip_fraction: float = 1.0
    axis_polar_rad: float = cst.DEFAULT_AXIS_POLAR_RAD

    def __post_init__(self):
        if self.density < 0:
            raise ValueError("density must be non-negative")
        if self.gamma_mhz < 0:
            raise ValueError("gamma must be non-negative")
        if self.depth_nm <= 0:
            raise ValueError("depth must be positive")
        if not 0.0 <= self.flip_fraction <= 1.0:
            raise ValueError("flip fraction must lie in [0, 1]")
        if self.dimensionality not in ("2d", "3d"):
            raise ValueError("dimensionality must be '2d' or '3d'")

    @property
    def density_internal(self) -> float:
        return cst.density_to_internal(self.density, self.dimensionality)


# radial window defaults; both exposed through w_integral arguments
R_MIN_FRACTION = 1.0 / 50.0
TAIL_FRACTION = 1e-8


def _plane_w(
    d_nm, gamma, t, axis, n_radial, n_azimuth, r_min, r_max, prefactor
):
    """Plane integral of (f_deer - f_echo) at height d_nm, trapezoid in
    log-radius x uniform azimuth.  t may be an array."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    u = np.linspace(math.log(r_min), math.log(r_max), n_radial)
    rho = np.exp(u)
    du = u[1] - u[0]
    wu = np.full(n_radial, du)
    wu[0] = wu[-1] = du / 2
    phi = np.linspace(0.0, 2 * math.pi, n_azimuth, endpoint=False)
    x = rho[:, None] * np.cos(phi)[None, :]
    y = rho[:, None] * np.sin(phi)[None, :]
    r2 = rho[:, None] ** 2 + d_nm**2
    r = np.sqrt(r2)
    cos_t = (x * axis[0] + y * axis[1] + d_nm * axis[2]) / r
    v = prefactor * (1.0 - 3.0 * cos_t**2) / (r2 * r)
    kern = deer_minus_echo_field(v[None, :, :], gamma, t[:, None, None])
    # dx dy = rho d rho d phi = rho^2 du d phi
    area_w = (rho**2 * wu)[None, :, None] * (2 * math.pi / n_azimuth)
    return np.sum(kern * area_w, axis=(1, 2))


def _converged(old, new, rtol):
    scale = max(float(np.max(np.abs(new))), 1e-300)
    return np.all(np.abs(new - old) <= rtol * np.maximum(np.abs(new), 1e-6 * scale))


def _w_2d(gamma, d, t_arr, axis, prefactor, rtol, r_min, r_max):
    n_az = 64
    w_prev = None
    while n_az <= 1024:
        n_rad = 129
        w = _plane_w(d, gamma, t_arr, axis, n_rad, n_az, r_min, r_max, prefactor)
        while n_rad < 8193:
            n_rad = 2 * (n_rad - 1) + 1
            w_new = _plane_w(d, gamma, t_arr, axis, n_rad, n_az, r_min, r_max, prefactor)
            done = _converged(w, w_new, rtol)
            w = w_new
            if done:
                break
        else:
            raise IntegrationAccuracyError(
                "radial refinement exhausted before reaching tolerance", estimate=w
            )
        if w_prev is not None and _converged(w_prev, w, max(rtol, 1e-7)):
            return w
        w_prev = w
        n_az *= 2
    raise IntegrationAccuracyError(
        "azimuthal refinement exhausted before reaching tolerance", estimate=w_prev
    )


def _w_3d(gamma, d, t_arr, axis, prefactor, rtol, r_min_frac, z_max):
    """Half-space integral: z-quadrature (log-spaced) of plane integrals."""

    def eval_at(n_z, n_az, n_rad):
        vz = np.linspace(math.log(d), math.log(z_max), n_z)
        z = np.exp(vz)
        dv = vz[1] - vz[0]
        wz = np.full(n_z, dv)
        wz[0] = wz[-1] = dv / 2
        total = np.zeros_like(np.atleast_1d(t_arr), dtype=float)
        for zi, wi in zip(z, wz):
            r_min = zi * r_min_frac
            r_max_i = max(8.0 * zi, 8.0 * (prefactor * max(np.max(t_arr), 1e-12)) ** (1 / 3))
            plane = _plane_w(zi, gamma, t_arr, axis, n_rad, n_az, r_min, r_max_i, prefactor)
            total += plane * zi * wi
        return total

    n_z, n_az, n_rad = 65, 64, 257
    w = eval_at(n_z, n_az, n_rad)
    for _ in range(5):
        n_z = 2 * (n_z - 1) + 1
        w_new = eval_at(n_z, n_az, n_rad)
        done = _converged(w, w_new, rtol * 5)
        w = w_new
        if done:
            return w
    raise IntegrationAccuracyError(
        "z refinement exhausted before reaching tolerance", estimate=w
    )


def _memo_key(gamma, d, t, dim, axis_polar, rtol):
    return (
        round(gamma / _MEMO_QUANTUM),
        round(d / _MEMO_QUANTUM),
        round(t / _MEMO_QUANTUM),
        dim,
        round(axis_polar, 12),
        rtol,
    )


def w_integral(
    gamma_mhz: float,
    depth_nm: float,
    t_us,
    dimensionality: str = "2d",
    axis_polar_rad: float = cst.DEFAULT_AXIS_POLAR_RAD,
    rtol: float = 1e-6,
    r_min_nm: float | None = None,
    r_max_nm: float | None = None,
    constants: cst.PhysicalConstants = cst.CONSTANTS,
):
    """Bath kernel integral W (nm^2 for 2D, nm^3 for 3D); t may be an array.

    Results are memoized on quantized (gamma, d, t).  W(gamma, d, 0) = 0 and
    W <= 0 everywhere (the pair difference only removes coherence).
    """
    if depth_nm <= 0:
        raise ValueError("depth must be positive")
    t_arr = np.atleast_1d(np.asarray(t_us, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("times must be non-negative")
    scalar = np.isscalar(t_us) or np.ndim(t_us) == 0
    gamma = float(gamma_mhz) * cst.MHZ_TO_RAD_PER_US
    prefactor = constants.dipolar_prefactor
    out = np.zeros(t_arr.shape, dtype=float)

    keys = [
        _memo_key(gamma, depth_nm, ti, dimensionality, axis_polar_rad, rtol)
        for ti in t_arr
    ]
    with _memo_lock:
        cached = [_memo.get(k) for k in keys]
    todo = [i for i, c in enumerate(cached) if c is None and t_arr[i] > 0]
    for i, c in enumerate(cached):
        if c is not None:
            out[i] = c

    if todo:
        t_eval = t_arr[todo]
        axis = cst.axis_from_polar(axis_polar_rad)
        t_max = float(np.max(t_eval))
        if dimensionality == "2d":
            r_min = r_min_nm if r_min_nm is not None else depth_nm * R_MIN_FRACTION
            # start from the oscillation scale and the depth, then grow until
            # the quadratic tail bound is negligible against the estimate
            r_max = r_max_nm if r_max_nm is not None else max(
                10.0 * depth_nm, 8.0 * (prefactor * t_max) ** (1 / 3)
            )
            for _ in range(40):
                w = _w_2d(gamma, depth_nm, t_eval, axis, prefactor, rtol, r_min, r_max)
                tail = math.pi * prefactor**2 * t_max**2 / (4.0 * r_max**4)
                tail *= math.exp(-gamma * min(t_max, 2.0 / max(gamma, 1e-300)) / 2) if gamma > 0 else 1.0
                if r_max_nm is not None or tail <= TAIL_FRACTION * max(
                    float(np.max(np.abs(w))), 1e-300
                ):
                    break
                r_max *= 2.0
            else:
                raise TruncationError("radial window could not be grown enough")
        else:
            r_min_frac = (
                r_min_nm / depth_nm if r_min_nm is not None else R_MIN_FRACTION
            )
            z_max = r_max_nm if r_max_nm is not None else max(
                10.0 * depth_nm, 8.0 * (prefactor * t_max) ** (1 / 3)
            )
            for _ in range(40):
                w = _w_3d(gamma, depth_nm, t_eval, axis, prefactor, rtol, r_min_frac, z_max)
                tail = math.pi * prefactor**2 * t_max**2 / (12.0 * z_max**3)
                if r_max_nm is not None or tail <= TAIL_FRACTION * max(
                    float(np.max(np.abs(w))), 1e-300
                ):
                    break
                z_max *= 2.0
            else:
                raise TruncationError("z window could not be grown enough")
        for j, i in enumerate(todo):
            out[i] = w[j]
        with _memo_lock:
            for j, i in enumerate(todo):
                _memo[keys[i]] = float(w[j])

    return float(out[0]) if scalar else out


def clear_w_cache():
    with _memo_lock:
        _memo.clear()


def fid(bath: BathParams, t_us, rtol: float = 1e-6):
    """Normalized coherence ratio F(t) = exp(alpha * sigma * W) in (0, 1]."""
    w = w_integral(
        bath.gamma_mhz,
        bath.depth_nm,
        t_us,
        bath.dimensionality,
        bath.axis_polar_rad,
        rtol,
    )
    return np.exp(bath.flip_fraction * bath.density_internal * np.asarray(w))


def double_log(curve: DecayCurve) -> DecayCurve:
    """log(-log F) transform; points with F outside (eps, 1 - eps) are
    dropped and counted in the result's diagnostics."""
    f = np.asarray(curve.y, dtype=float)
    keep = (f > DOUBLE_LOG_EPS) & (f < 1.0 - DOUBLE_LOG_EPS)
    dropped = int(np.sum(~keep))
    if np.sum(keep) < 4:
        raise InsufficientDataError(
            f"only {int(np.sum(keep))} points survive the double-log transform"
        )
    t = curve.t[keep]
    fp = np.log(-np.log(f[keep]))
    err = None
    if curve.y_err is not None:
        # |d log(-log F)/dF| = 1 / (F * |log F|)
        err = curve.y_err[keep] / (f[keep] * np.abs(np.log(f[keep])))
    out = DecayCurve(t=t, y=fp, y_err=err)
    out.diagnostics["dropped_points"] = dropped
    return out


def _mc_radius(bath: BathParams, t_max: float, n_configs: int, constants) -> float:
    """Disk radius for positional sampling: truncation bias on log F kept
    under a tenth of the anticipated standard error via the quadratic
    far-field bound."""
    prefactor = constants.dipolar_prefactor
    sigma_int = bath.density_internal
    se_proxy = 0.1 / math.sqrt(max(n_configs, 1))
    r = max(10.0 * bath.depth_nm, 6.0 * (prefactor * max(t_max, 1e-12)) ** (1 / 3))
    for _ in range(60):
        tail = sigma_int * math.pi * prefactor**2 * t_max**2 / (4.0 * r**4)
        if tail < 0.1 * se_proxy:
            return r
        r *= 1.5
    raise TruncationError("sampling radius could not be grown enough")


def simulate_fid_mc(
    bath: BathParams,
    t_us,
    n_configs: int = 20000,
    seed: int = 0,
    constants: cst.PhysicalConstants = cst.CONSTANTS,
) -> DecayCurve:
    """Positional Monte Carlo estimate of F(t).

    Spin positions are drawn from a Poisson process at the bath density;
    the estimator is the ratio of the configuration means of the DEER and
    echo products (their expectations are the configurational averages).
    Deterministic for a fixed seed; per-configuration substreams.
    """
    if n_configs < 100:
        raise ValueError("n_configs must be at least 100")
    t_arr = np.atleast_1d(np.asarray(t_us, dtype=float))
    nt = t_arr.size
    t_max = float(np.max(t_arr))
    gamma = bath.gamma_mhz * cst.MHZ_TO_RAD_PER_US
    axis = cst.axis_from_polar(bath.axis_polar_rad)
    prefactor = constants.dipolar_prefactor
    radius = _mc_radius(bath, t_max, n_configs, constants)

    root = np.random.SeedSequence(seed)
    children = root.spawn(n_configs)

    counts = np.empty(n_configs, dtype=np.int64)
    all_v = []
    if bath.dimensionality == "2d":
        mean_count = bath.density_internal * math.pi * radius**2
    else:
        z_extent = radius  # half-space slab [d, d + radius]
        mean_count = bath.density_internal * math.pi * radius**2 * z_extent
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        n = rng.poisson(mean_count)
        counts[i] = n
        if n == 0:
            continue
        u = rng.uniform(0.0, 1.0, n)
        rho = radius * np.sqrt(u)
        phi = rng.uniform(0.0, 2 * math.pi, n)
        if bath.dimensionality == "2d":
            z = np.full(n, bath.depth_nm)
        else:
            z = bath.depth_nm + rng.uniform(0.0, z_extent, n)
        x = rho * np.cos(phi)
        y = rho * np.sin(phi)
        r2 = x * x + y * y + z * z
        r = np.sqrt(r2)
        cos_t = (x * axis[0] + y * axis[1] + z * axis[2]) / r
        all_v.append(prefactor * (1.0 - 3.0 * cos_t**2) / (r2 * r))

    v_flat = np.concatenate(all_v) if all_v else np.empty(0)
    f_d, f_e = deer_echo_fields(v_flat[:, None], gamma, t_arr[None, :])
    if bath.flip_fraction < 1.0:
        # unflipped spins contribute their echo factor to the DEER product
        a = bath.flip_fraction
        f_d = a * f_d + (1.0 - a) * f_e

    offsets = np.zeros(n_configs, dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    prod_d = np.ones((n_configs, nt))
    prod_e = np.ones((n_configs, nt))
    nonzero = counts > 0
    if v_flat.size:
        rd = np.multiply.reduceat(f_d, offsets, axis=0)
        re = np.multiply.reduceat(f_e, offsets, axis=0)
        prod_d[nonzero] = rd[nonzero]
        prod_e[nonzero] = re[nonzero]

    mean_d = prod_d.mean(axis=0)
    mean_e = prod_e.mean(axis=0)
    ratio = mean_d / mean_e
    var_d = prod_d.var(axis=0, ddof=1) / n_configs
    var_e = prod_e.var(axis=0, ddof=1) / n_configs
    cov = np.array(
        [np.cov(prod_d[:, j], prod_e[:, j], ddof=1)[0, 1] for j in range(nt)]
    ) / n_configs
    rel_var = var_d / mean_d**2 + var_e / mean_e**2 - 2 * cov / (mean_d * mean_e)
    stderr = np.abs(ratio) * np.sqrt(np.maximum(rel_var, 0.0))

    out = DecayCurve(t=t_arr.copy(), y=ratio, y_err=np.maximum(stderr, 1e-300))
    out.diagnostics.update(
        {
            "n_configs": int(n_configs),
            "sample_radius_nm": radius,
            "mean_spins_per_config": float(np.mean(counts)),
            "seed": int(seed),
        }
    )
    return out
