"""Lyapunov exponents, Birkhoff averages, Pesin-block tests, growth identities.

Spectra use the QR (Benettin) scheme with re-orthonormalization every step.
Bundle exponents follow a single direction: forward propagation for the
expanding bundles (uu, and cu inside the exactly invariant center plane),
backward propagation for the contracting ones.  Seeds start on the linear
eigen-axes and converge along the orbit; a transient prefix is discarded.

All orbit statistics carry a convergence flag: the last-quarter mean must sit
within three standard errors of the full mean.  Batched variants step many
orbits simultaneously; merging across chunks uses compensated summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PhlabError


class OrbitDivergedError(PhlabError):
    """Non-finite values appeared along an orbit (signals a bug on a torus)."""


@dataclass(frozen=True)
class OrbitSpec:
    """Start point (None draws uniformly from the seed), length, burn-in."""

    start: object = None
    length: int = 10_000
    transient: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.length <= self.transient:
            raise ValueError("orbit length must exceed the transient")

    def resolve_start(self, dim):
        if self.start is not None:
            return np.asarray(self.start, dtype=float)
        return make_rng(self.seed).random(dim)


def make_rng(seed, worker: int = 0):
    """Counter-based generator; (seed, worker) keys independent streams."""
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, worker], dtype=np.uint64))
    )


def merge_weighted(values, weights):
    """Weighted average with compensated summation; order-independent to 1e-12."""
    num = math.fsum(v * w for v, w in zip(values, weights))
    den = math.fsum(weights)
    return num / den


@dataclass
class LyapunovSpectrum:
    """Exponents sorted descending plus a running-estimate history."""

    exponents: np.ndarray
    history: np.ndarray  # rows (step, est_1, ..., est_d)
    length: int
    transient: int
    start: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.exponents))


def _qr_step(jacs, frames):
    z = jacs @ frames
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    sign = np.where(diag < 0, -1.0, 1.0)
    q = q * sign[..., None, :]
    return q, np.abs(diag)


def lyapunov_spectrum(system, orbit: OrbitSpec, history_points: int = 200,
                      frame_warmup: int | None = None, frame0=None) -> LyapunovSpectrum:
    """Full Benettin spectrum along one orbit, re-orthonormalizing every step.

    A frame warm-up phase spins the orthonormal frame onto the Oseledets flag
    before accumulation starts; without it the estimates carry a seed-
    dependent O(1/n) offset even for constant Jacobians.  ``frame0`` replaces
    the identity as the initial orthonormal frame.
    """
    d = system.dim
    x = orbit.resolve_start(d)
    for _ in range(orbit.transient):
        x = system.step(x)
    frame = np.eye(d) if frame0 is None else np.asarray(frame0, dtype=float).copy()
    if frame_warmup is None:
        frame_warmup = min(200, (orbit.length - orbit.transient) // 2)
    for _ in range(frame_warmup):
        frame, _ = _qr_step(system.jacobian(x), frame)
        x = system.step(x)
    sums = np.zeros(d)
    steps = orbit.length - orbit.transient - frame_warmup
    if steps < 1:
        raise ValueError("orbit too short for transient plus frame warm-up")
    stride = max(1, steps // history_points)
    history = []
    for t in range(1, steps + 1):
        jac = system.jacobian(x)
        frame, growth = _qr_step(jac, frame)
        sums += np.log(growth)
        x = system.step(x)
        if t % stride == 0 or t == steps:
            history.append((t, *(sums / t)))
    if not np.all(np.isfinite(sums)):
        raise OrbitDivergedError("non-finite Lyapunov sums; the map left the torus?")
    return LyapunovSpectrum(
        exponents=np.sort(sums / steps)[::-1],
        history=np.array(history),
        length=orbit.length,
        transient=orbit.transient,
        start=orbit.resolve_start(d),
    )


def lyapunov_spectrum_batch(system, starts, length: int, transient: int = 100,
                            frame_dim: int | None = None,
                            frame_warmup: int | None = None):
    """Benettin spectra for many orbits at once; returns (N, frame_dim) exponents."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n, d = starts.shape
    kf = d if frame_dim is None else frame_dim
    x = starts.copy()
    for _ in range(transient):
        x = system.step(x)
    frames = np.broadcast_to(np.eye(d)[:, :kf], (n, d, kf)).copy()
    if frame_warmup is None:
        frame_warmup = min(200, (length - transient) // 2)
    for _ in range(frame_warmup):
        frames, _ = _qr_step(system.jacobian(x), frames)
        x = system.step(x)
    sums = np.zeros((n, kf))
    steps = length - transient - frame_warmup
    if steps < 1:
        raise ValueError("orbit too short for transient plus frame warm-up")
    for _ in range(steps):
        jacs = system.jacobian(x)
        frames, growth = _qr_step(jacs, frames)
        sums += np.log(growth)
        x = system.step(x)
    if not np.all(np.isfinite(sums)):
        raise OrbitDivergedError("non-finite Lyapunov sums in batch")
    return sums / steps


@dataclass
class RunningAverage:
    """Birkhoff value with history and the last-quarter convergence flag."""

    value: float
    history: np.ndarray
    converged: bool
    stderr: float


def _running_average(samples, history_points=200):
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    cum = np.cumsum(samples) / np.arange(1, n + 1)
    stride = max(1, n // history_points)
    idx = np.arange(stride - 1, n, stride)
    history = np.column_stack([idx + 1, cum[idx]])
    quarter = samples[3 * n // 4 :]
    se = float(np.std(quarter) / math.sqrt(len(quarter))) if len(quarter) > 1 else 0.0
    floor = 1e-9 * (1.0 + abs(float(cum[-1])))  # absorbs pure rounding jitter
    converged = abs(float(np.mean(quarter)) - float(cum[-1])) <= 3.0 * se + floor
    return RunningAverage(value=float(cum[-1]), history=history, converged=converged, stderr=se)


def birkhoff_average(system, orbit: OrbitSpec, observable, history_points: int = 200
                     ) -> RunningAverage:
    """Cesaro average of a bounded observable along the orbit, after burn-in."""
    x = orbit.resolve_start(system.dim)
    for _ in range(orbit.transient):
        x = system.step(x)
    vals = np.empty(orbit.length - orbit.transient)
    for t in range(len(vals)):
        vals[t] = observable(x)
        x = system.step(x)
    return _running_average(vals, history_points)


# -- single-direction bundle exponents ---------------------------------------

_PLANE = slice(2, 4)


def _seed_for(system, bundle):
    table = {"uu": 0, "ss": 1, "cu": 2, "cs": 3}
    e = np.zeros(4)
    e[table[bundle]] = 1.0
    return e


def bundle_exponent(system, orbit: OrbitSpec, bundle: str) -> RunningAverage:
    """Birkhoff average of log ||Df restricted to one extracted bundle||.

    Forward bundles (uu, cu) propagate a seed along the forward orbit; the
    contracting ones (cs, ss) along the backward orbit, with the sign flipped
    so the value always refers to forward time.  "cs_ss" gives the top rate of
    the 2-dimensional contracting bundle via a backward 2-frame.
    """
    if bundle == "cs_ss":
        return _pair_exponent(system, orbit)
    if bundle not in ("uu", "cu", "cs", "ss"):
        raise ValueError(f"unknown bundle {bundle!r}")
    forward = bundle in ("uu", "cu")
    in_plane = bundle in ("cu", "cs")
    x = orbit.resolve_start(system.dim)
    v = _seed_for(system, bundle)
    if in_plane:
        v = v[_PLANE]
    vals = np.empty(orbit.length)
    for t in range(orbit.length):
        if forward:
            jac = system.jacobian_chart(x)
            m = jac[_PLANE, _PLANE] if in_plane else jac
            w = m @ v
            g = np.linalg.norm(w)
            vals[t] = math.log(g)
            v = w / g
            x = system.step(x)
        else:
            xp = system.step_inverse(x)
            jac = system.jacobian_chart(xp)
            m = jac[_PLANE, _PLANE] if in_plane else jac
            w = np.linalg.solve(m, v)
            g = np.linalg.norm(w)
            vals[t] = -math.log(g)
            v = w / g
            x = xp
    return _running_average(vals[orbit.transient :])


def _pair_exponent(system, orbit: OrbitSpec) -> RunningAverage:
    """Top forward rate of the contracting 2-plane (cs + ss), backward 2-frame."""
    x = orbit.resolve_start(system.dim)
    frame = np.eye(4)[:, [1, 3]]  # ss and s axes seed the backward-dominant plane
    vals = np.empty(orbit.length)
    for t in range(orbit.length):
        xp = system.step_inverse(x)
        jac_inv = np.linalg.inv(system.jacobian_chart(xp))
        frame, growth = _qr_step(jac_inv, frame)
        vals[t] = -math.log(growth[1])  # slower backward direction = cs rate
        x = xp
    return _running_average(vals[orbit.transient :])


def bundle_exponent_batch(system, starts, length: int, transient: int, bundle: str):
    """Batched bundle exponents; returns (values, converged flags).

    Same propagation scheme as bundle_exponent, vectorized across orbits.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n = starts.shape[0]
    x = starts.copy()
    forward = bundle in ("uu", "cu")
    in_plane = bundle in ("cu", "cs")
    pair = bundle == "cs_ss"
    if pair:
        frames = np.broadcast_to(np.eye(4)[:, [1, 3]], (n, 4, 2)).copy()
    else:
        v = _seed_for(system, bundle)
        v = v[_PLANE] if in_plane else v
        vs = np.broadcast_to(v, (n, v.size)).copy()
    total = np.zeros(n)
    quarter_sum = np.zeros(n)
    quarter_sq = np.zeros(n)
    steps = length - transient
    q_start = transient + 3 * steps // 4
    kept = 0
    q_kept = 0
    for t in range(length):
        if forward:
            jac = system.jacobian_chart(x)
            m = jac[:, _PLANE, _PLANE] if in_plane else jac
            w = np.einsum("nij,nj->ni", m, vs)
            g = np.linalg.norm(w, axis=1)
            vals = np.log(g)
            vs = w / g[:, None]
            x = system.step(x)
        else:
            xp = system.step_inverse(x)
            jac = system.jacobian_chart(xp)
            if pair:
                frames, growth = _qr_step(np.linalg.inv(jac), frames)
                vals = -np.log(growth[:, 1])
            else:
                m = jac[:, _PLANE, _PLANE] if in_plane else jac
                w = np.linalg.solve(m, vs[:, :, None])[:, :, 0]
                g = np.linalg.norm(w, axis=1)
                vals = -np.log(g)
                vs = w / g[:, None]
            x = xp
        if t >= transient:
            total += vals
            kept += 1
            if t >= q_start:
                quarter_sum += vals
                quarter_sq += vals * vals
                q_kept += 1
    mean = total / kept
    q_mean = quarter_sum / q_kept
    q_var = np.maximum(quarter_sq / q_kept - q_mean**2, 0.0)
    se = np.sqrt(q_var / q_kept)
    floor = 1e-9 * (1.0 + np.abs(mean))
    converged = np.abs(q_mean - mean) <= 3.0 * se + floor
    return mean, converged


# -- Pesin blocks --------------------------------------------------------------


@dataclass(frozen=True)
class PesinBlockQuery:
    """Finite-horizon membership test parameters; alpha must be positive."""

    alpha: float
    l: int
    horizon: int

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.l < 1 or self.horizon < 1:
            raise ValueError("l and horizon must be >= 1")


def pesin_block_membership(system, x, query: PesinBlockQuery, extractor=None):
    """Finite-horizon Pesin block test at x.

    Checks, for every n up to the horizon, the two cumulative inequalities:
    contraction of the (cs+ss) plane under Df^l along the forward orbit, and
    contraction of the (uu+cu) plane under Df^{-l} along the backward orbit.
    Returns (member, first_failure_n) with first_failure_n = None on success;
    failing at some n rules out membership for every larger horizon.
    """
    from .cones import extract_splitting

    if extractor is None:
        extractor = lambda pt: extract_splitting(system, pt, n_iter=40)
    x = np.asarray(x, dtype=float)
    log_bound = -query.alpha * query.l

    log_prod = 0.0
    y = x
    for i in range(query.horizon):
        est = extractor(y)
        basis = np.column_stack([est.directions["cs"], est.directions["ss"]])
        m = np.eye(4)
        z = y
        for _ in range(query.l):
            m = system.jacobian(z) @ m
            z = system.step(z)
        log_prod += math.log(np.linalg.norm(m @ basis, ord=2))
        if log_prod > (i + 1) * log_bound + 1e-12:
            return False, i + 1
        y = z

    log_prod = 0.0
    y = x
    for i in range(query.horizon):
        est = extractor(y)
        basis = np.column_stack([est.directions["uu"], est.directions["cu"]])
        m = np.eye(4)
        z = y
        for _ in range(query.l):
            m = system.jacobian_inverse(z) @ m
            z = system.step_inverse(z)
        log_prod += math.log(np.linalg.norm(m @ basis, ord=2))
        if log_prod > (i + 1) * log_bound + 1e-12:
            return False, i + 1
        y = z
    return True, None


# -- unstable volume identity ---------------------------------------------------


def entropy_volume_identity(system, orbit: OrbitSpec, seed=None):
    """Birkhoff estimate of log|det Df| along the 1-d skew-unstable bundle.

    For a product with linear base the bundle is the exact base-unstable axis
    and the estimate matches log(rate) to rounding; for the deformed map the
    bundle is the strong-unstable direction of the skew structure over the
    first factor.  Returns (estimate, log_rate, gap).  A seed without a
    component along the skew-unstable axis is rejected.
    """
    axis, rate = system.skew_unstable_bundle()
    if seed is None:
        seed = axis
    seed = np.asarray(seed, dtype=float)
    if abs(float(seed @ axis)) < 1e-12:
        raise ValueError("seed has no component along the skew-unstable axis")
    x = orbit.resolve_start(system.dim)
    v = seed / np.linalg.norm(seed)
    vals = np.empty(orbit.length)
    for t in range(orbit.length):
        w = system.jacobian(x) @ v
        g = np.linalg.norm(w)
        vals[t] = math.log(g)
        v = w / g
        x = system.step(x)
    estimate = float(np.mean(vals[orbit.transient :]))
    log_rate = math.log(rate)
    return estimate, log_rate, abs(estimate - log_rate)
