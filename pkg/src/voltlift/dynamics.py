"""Integrators for the lifted SDE and the direct Volterra discretization.

The lifted scheme is an exponential (exact-linear-part) Euler step; the
direct scheme is a left-point Volterra Euler with integrated drift weights.
Both consume Brownian increments from counter-based per-trajectory streams
so that paths can be cross-validated on identical noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
DRIFT_FACTOR_CUTOFF = 1e-8


@dataclass(frozen=True)
class CoefficientModel:
    b: object                 # (..., n) -> (..., n)
    sigma: object             # (..., n) -> (..., n, d)
    n: int = 1
    d: int = 1
    C_bLip: float | None = None
    C_sLip: float | None = None
    gamma: float | None = None     # <b(x), x> <= gamma |x|^2 + C_bLG
    C_bLG: float | None = None
    p: float | None = None         # |sigma(x)| <= C_ssub (1 + |x|^p)
    C_ssub: float | None = None
    C_UE: float | None = None      # sigma sigma^T >= I / C_UE


def spot_check_coefficients(coeffs, seed=0, samples=1000, radius=5.0):
    """Sample random point pairs and verify the declared metadata bounds.

    Returns a dict of booleans; caller decides whether a failure is fatal.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-radius, radius, size=(samples, coeffs.n))
    y = rng.uniform(-radius, radius, size=(samples, coeffs.n))
    out = {}
    bx, by = coeffs.b(x), coeffs.b(y)
    sx, sy = coeffs.sigma(x), coeffs.sigma(y)
    gap = np.linalg.norm(x - y, axis=-1) + 1e-300
    if coeffs.C_bLip is not None:
        out["b_lipschitz"] = bool(np.all(
            np.linalg.norm(bx - by, axis=-1) <= coeffs.C_bLip * gap * (1 + 1e-9)))
    if coeffs.C_sLip is not None:
        dn = np.linalg.norm((sx - sy).reshape(samples, -1), axis=-1)
        out["sigma_lipschitz"] = bool(np.all(dn <= coeffs.C_sLip * gap * (1 + 1e-9)))
    if coeffs.gamma is not None and coeffs.C_bLG is not None:
        lhs = np.einsum("sp,sp->s", bx, x)
        rhs = coeffs.gamma * np.einsum("sp,sp->s", x, x) + coeffs.C_bLG
        out["b_coercive"] = bool(np.all(lhs <= rhs * (1 + 1e-9) + 1e-9))
    if coeffs.p is not None and coeffs.C_ssub is not None:
        sn = np.linalg.norm(sx.reshape(samples, -1), axis=-1)
        bound = coeffs.C_ssub * (1 + np.linalg.norm(x, axis=-1) ** coeffs.p)
        out["sigma_sublinear"] = bool(np.all(sn <= bound * (1 + 1e-9)))
    if coeffs.C_UE is not None:
        gram = np.einsum("spd,sqd->spq", sx, sx)
        eig = np.linalg.eigvalsh(gram)[:, 0]
        out["uniform_ellipticity"] = bool(np.all(eig >= 1.0 / coeffs.C_UE - 1e-9))
    return out


def truncate_coefficients(coeffs, radius):
    """Clamp arguments to the ball of the given radius before evaluating."""
    if radius <= 0.0:
        raise ValueError("truncation radius must be positive")

    def clamp(x):
        x = np.asarray(x, dtype=float)
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        scale = np.where(norm > radius, radius / np.maximum(norm, 1e-300), 1.0)
        return x * scale

    return replace(coeffs, b=lambda x: coeffs.b(clamp(x)),
                   sigma=lambda x: coeffs.sigma(clamp(x)))


@dataclass(frozen=True)
class NoisePlan:
    seed: int
    trajectory_index: int
    h: float
    T: float
    d: int = 1

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError("step size h must be positive")
        if self.T < 0.0:
            raise ValueError("horizon T must be nonnegative")
        if self.seed < 0 or self.trajectory_index < 0:
            raise ValueError("seed and trajectory index must be nonnegative")

    @property
    def n_steps(self):
        return int(round(self.T / self.h))

    def generator(self):
        key = np.array([self.seed, self.trajectory_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def increments(self):
        """Brownian increments, shape (n_steps, d); step index = row."""
        gen = self.generator()
        return gen.standard_normal((self.n_steps, self.d)) * math.sqrt(self.h)


def _stacked_increments(plans):
    """(n_steps, n_traj, d) increments for a list of equal-shape plans."""
    return np.stack([p.increments() for p in plans], axis=1)


def make_plans(seed, n_traj, h, T, d=1, first_index=0):
    return [NoisePlan(seed, first_index + i, h, T, d) for i in range(n_traj)]


@dataclass(frozen=True)
class LiftedPath:
    times: np.ndarray      # (M+1,)
    states: np.ndarray     # (M+1, I, n)
    observables: np.ndarray  # (M+1, n)


def _step_factors(component, h):
    decay = np.exp(-component.a * h)
    phi = np.where(component.a * h < DRIFT_FACTOR_CUTOFF,
                   h, (1.0 - decay) / np.where(component.a == 0.0, 1.0,
                                               component.a))
    return decay, phi


def lifted_step(component, coeffs, z, x, dw, decay, phi):
    """One exponential-Euler step, batched over leading axes of z.

    z: (..., I, n); x: (..., n); dw: (..., d).
    """
    bx = coeffs.b(x)
    sx = coeffs.sigma(x)
    noise_vec = np.einsum("...pd,...d->...p", sx, dw)
    drift = np.einsum("ipq,...q->...ip", component.Mb, bx)
    kick = np.einsum("ipq,...q->...ip", component.Ms, noise_vec)
    z = (decay[:, None] * z + phi[:, None] * drift + decay[:, None] * kick)
    x = np.einsum("i,...ip->...p", component.w, z)
    return z, x


def simulate_lifted(component, coeffs, z0, plan, extra_drift=None):
    """Integrate one trajectory; abort on non-finite states.

    extra_drift(x_pair_state) hooks are not supported here; see coupling.
    """
    z = np.asarray(z0, dtype=float).reshape(component.size, component.n)
    x = np.einsum("i,ip->p", component.w, z)
    decay, phi = _step_factors(component, plan.h)
    incs = plan.increments()
    m = plan.n_steps
    times = np.arange(m + 1) * plan.h
    states = np.empty((m + 1, component.size, component.n))
    obs = np.empty((m + 1, component.n))
    states[0], obs[0] = z, x
    for step in range(m):
        z, x = lifted_step(component, coeffs, z, x, incs[step], decay, phi)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(
                f"non-finite lifted state at step {step + 1}")
        states[step + 1], obs[step + 1] = z, x
    return LiftedPath(times=times, states=states, observables=obs)


def simulate_lifted_ensemble(component, coeffs, z0, plans, record_times=None):
    """Vectorized ensemble integration sharing the single-trajectory
    arithmetic. Returns (times, X, z_final) with X of shape
    (n_rec, n_traj, n); record_times=None records the final time only.
    """
    h, T = plans[0].h, plans[0].T
    m = plans[0].n_steps
    n_traj = len(plans)
    z = np.broadcast_to(
        np.asarray(z0, dtype=float).reshape((-1, component.size, component.n)),
        (n_traj, component.size, component.n)).copy()
    x = np.einsum("i,tip->tp", component.w, z)
    decay, phi = _step_factors(component, h)
    incs = _stacked_increments(plans)
    if record_times is None:
        rec_steps = [m]
    else:
        rec_steps = [int(round(t / h)) for t in record_times]
        if any(s < 0 or s > m for s in rec_steps):
            raise ValueError("record time outside the simulated horizon")
    rec = {s: None for s in rec_steps}
    if 0 in rec:
        rec[0] = x.copy()
    for step in range(m):
        z, x = lifted_step(component, coeffs, z, x, incs[step], decay, phi)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(
                f"non-finite lifted state at step {step + 1}")
        if (step + 1) in rec:
            rec[step + 1] = x.copy()
    times = np.array([s * h for s in rec_steps])
    xs = np.stack([rec[s] for s in rec_steps])
    return times, xs, z


def forcing_term(component, z0, t):
    """x_k(t) = sum exp(-a_i t) w_i z0_i (exact)."""
    z0 = np.asarray(z0, dtype=float).reshape(component.size, component.n)
    damp = component.w * np.exp(-component.a * t)
    return np.einsum("i,ip->p", damp, z0)


def _gauss_legendre_integral(f, lo, hi, order=12):
    nodes, wts = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return half * sum(w * f(mid + half * s) for s, w in zip(nodes, wts))


def volterra_weights(k_b, k_s, h, m):
    """Quadrature weights for the direct scheme.

    Drift: KB_l = integral of K_b over ((l-1)h, lh); K_b may be singular
    at 0+ but is locally integrable.  Diffusion: left-point values K_s(l h)
    for l >= 2; the first weight is the root-mean-square of K_s over (0, h)
    so the Ito isometry of the first step is matched.
    """
    kb = []
    ks = []
    for ell in range(1, m + 1):
        lo, hi = (ell - 1) * h, ell * h
        if ell == 1:
            # s = u^2 flattens the possible endpoint singularity
            kb.append(_gauss_legendre_integral(
                lambda u: 2.0 * u * np.atleast_2d(k_b(u * u)),
                math.sqrt(1e-300), math.sqrt(h), order=64))
            mean_sq = _gauss_legendre_integral(
                lambda u: 2.0 * u * np.atleast_2d(k_s(u * u)) ** 2,
                math.sqrt(1e-300), math.sqrt(h), order=64) / h
            ks.append(np.sqrt(np.maximum(mean_sq, 0.0))
                      if mean_sq.shape == (1, 1)
                      else _matrix_sqrt(mean_sq))
        else:
            kb.append(_gauss_legendre_integral(
                lambda s: np.atleast_2d(k_b(s)), lo, hi, order=12))
            ks.append(np.atleast_2d(k_s(hi)))
    return np.stack(kb), np.stack(ks)


def _matrix_sqrt(a):
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    return (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


def simulate_volterra_direct(kernels, coeffs, forcing, plan):
    """Left-point Euler for the Volterra equation itself (single trajectory).

    kernels: (K_b, K_s) evaluators t -> (n, n); forcing: t -> (n,).
    """
    k_b, k_s = kernels
    h, m, n = plan.h, plan.n_steps, coeffs.n
    kb, ks = volterra_weights(k_b, k_s, h, m)
    incs = plan.increments()
    x = np.empty((m + 1, n))
    bvals = np.empty((m, n))
    svals = np.empty((m, n))
    x[0] = np.atleast_1d(forcing(0.0))
    for step in range(1, m + 1):
        j = step - 1
        bvals[j] = coeffs.b(x[j])
        svals[j] = np.einsum("pd,d->p", np.atleast_2d(coeffs.sigma(x[j])
                                                      ).reshape(n, coeffs.d),
                             incs[j])
        drift = np.einsum("lpq,lq->p", kb[:step][::-1], bvals[:step])
        noise = np.einsum("lpq,lq->p", ks[:step][::-1], svals[:step])
        x[step] = np.atleast_1d(forcing(step * h)) + drift + noise
        if not np.all(np.isfinite(x[step])):
            raise FloatingPointError(
                f"non-finite Volterra state at step {step}")
    return np.arange(m + 1) * h, x


# -- coefficient presets -----------------------------------------------------

def _const_sigma(value, n, d):
    mat = np.broadcast_to(np.atleast_2d(value), (n, d)).astype(float)

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(mat, x.shape[:-1] + (n, d)).copy()

    return sigma


def preset_linear(beta=1.0, c=0.0, sigma0=1.0, n=1):
    """b(x) = -beta x + c with constant diffusion."""
    cvec = np.broadcast_to(np.atleast_1d(c), (n,)).astype(float)

    def b(x):
        return -beta * np.asarray(x, dtype=float) + cvec

    # <b(x), x> = -beta |x|^2 + <c, x> <= (-beta + eps)|x|^2 + |c|^2/(4 eps)
    eps = 0.5 if np.any(cvec != 0.0) else 0.0
    return CoefficientModel(
        b=b, sigma=_const_sigma(sigma0, n, n), n=n, d=n,
        C_bLip=abs(beta), C_sLip=0.0,
        gamma=max(-beta + eps, 1e-12),
        C_bLG=float(np.dot(cvec, cvec)) / 2.0 + 1e-12,
        p=0.5, C_ssub=abs(sigma0) * math.sqrt(n),
        C_UE=1.0 / sigma0 ** 2 if sigma0 != 0.0 else None)


def preset_tanh(scale=1.0, sigma0=1.0, n=1):
    """Bounded Lipschitz drift b(x) = -x + scale*tanh(x), constant diffusion."""
    def b(x):
        x = np.asarray(x, dtype=float)
        return -x + scale * np.tanh(x)

    return CoefficientModel(
        b=b, sigma=_const_sigma(sigma0, n, n), n=n, d=n,
        C_bLip=1.0 + abs(scale), C_sLip=0.0,
        gamma=max(abs(scale) - 1.0, 1e-12) if scale >= 0 else 1e-12,
        C_bLG=abs(scale) + 1.0,
        p=0.5, C_ssub=abs(sigma0) * math.sqrt(n), C_UE=1.0 / sigma0 ** 2)


def preset_double_well(sigma0=1.0, n=1, gamma=0.25):
    """Gradient drift of V(x) = (|x|^2 - 1)^2 / 4: b(x) = -x (|x|^2 - 1).

    <b(x), x> = |x|^2 (1 - |x|^2) <= gamma |x|^2 + ((1 - gamma)/2)^2 for any
    gamma in (0, 1]; not globally Lipschitz, so no C_bLip is declared.
    """
    def b(x):
        x = np.asarray(x, dtype=float)
        sq = np.sum(x * x, axis=-1, keepdims=True)
        return -x * (sq - 1.0)

    return CoefficientModel(
        b=b, sigma=_const_sigma(sigma0, n, n), n=n, d=n,
        C_bLip=None, C_sLip=0.0,
        gamma=gamma, C_bLG=((1.0 - gamma) / 2.0) ** 2 + 1e-12,
        p=0.5, C_ssub=abs(sigma0) * math.sqrt(n), C_UE=1.0 / sigma0 ** 2)


PRESETS = {
    "linear": preset_linear,
    "tanh": preset_tanh,
    "double_well": preset_double_well,
}


def make_preset(name, **kwargs):
    if name not in PRESETS:
        raise ValueError(f"unknown coefficient preset {name!r}")
    return PRESETS[name](**kwargs)
