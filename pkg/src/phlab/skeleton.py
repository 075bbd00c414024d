"""Periodic point search, invariant-manifold growth, and skeleton extraction.

Periodic points come from Newton iteration on the lift of f^period - id with
the analytic Jacobian; candidates whose linearization has an eigenvalue
within 1e-8 of 1 are rejected as non-hyperbolic.  Manifold arcs grow by
fundamental-domain continuation: a tiny eigen-segment is iterated, with
midpoint re-insertion wherever image spacing exceeds the resolution.

A skeleton keeps a maximal subset of periodic records such that no pair is
connected by heteroclinic intersections in both directions; the survivor of a
mutual pair is chosen by (lower period, lexicographic point), an explicit
convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotHyperbolicError, PhlabError
from .torus import reduce_torus, torus_displacement, torus_distance

HYPERBOLIC_MULTIPLIER_TOL = 1e-6
PERIODIC_RESIDUAL_TOL = 1e-10


class NewtonDidNotConverge(PhlabError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class PeriodicPointRecord:
    point: np.ndarray
    period: int
    multipliers: np.ndarray  # eigenvalue moduli of Df^period, sorted descending
    eigenvalues: np.ndarray
    stable_index: int
    residual: float

    @property
    def hyperbolic(self) -> bool:
        return bool(np.all(np.abs(self.multipliers - 1.0) > HYPERBOLIC_MULTIPLIER_TOL))

    def sort_key(self):
        return (self.period, tuple(np.round(self.point, 10)))


def _orbit_jacobian(system, x, period):
    """Df^period at x (ambient) and the endpoint f^period(x)."""
    d = x.size
    m = np.eye(d)
    y = x
    for _ in range(period):
        m = system.jacobian(y) @ m
        y = system.step(y)
    return m, y


def newton_periodic(system, guess, period: int, max_iter: int = 50,
                    tol: float = 1e-12) -> PeriodicPointRecord:
    """Newton iteration for a period-``period`` point near ``guess``.

    Solves f^period(x) = x on the lift using the analytic Jacobian minus the
    identity; converged roots are reduced mod 1 and classified by the
    multipliers of Df^period.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    x = reduce_torus(np.asarray(guess, dtype=float))
    d = x.size
    residual = np.inf
    for _ in range(max_iter):
        m, y = _orbit_jacobian(system, x, period)
        g = torus_displacement(y, x)
        residual = float(np.linalg.norm(g))
        if residual < tol:
            break
        eigs = np.linalg.eigvals(m)
        if np.min(np.abs(eigs - 1.0)) < 1e-8:
            raise NotHyperbolicError(
                f"linearization at {x} has a multiplier within 1e-8 of 1"
            )
        x = reduce_torus(x + np.linalg.solve(m - np.eye(d), -g))
    else:
        raise NewtonDidNotConverge(
            f"no convergence after {max_iter} steps (residual {residual:.3e})",
            residual,
        )
    m, y = _orbit_jacobian(system, x, period)
    residual = float(np.linalg.norm(torus_displacement(y, x)))
    eigs = np.linalg.eigvals(m)
    if np.min(np.abs(eigs - 1.0)) < 1e-8:
        raise NotHyperbolicError(f"converged point {x} is non-hyperbolic")
    moduli = np.sort(np.abs(eigs))[::-1]
    return PeriodicPointRecord(
        point=x,
        period=period,
        multipliers=moduli,
        eigenvalues=eigs[np.argsort(-np.abs(eigs))],
        stable_index=int(np.sum(moduli < 1.0)),
        residual=residual,
    )


def distinct_records(records, tol: float = 1e-8):
    """Deduplicate by torus distance; deterministic keep-first order."""
    kept = []
    for rec in sorted(records, key=lambda r: r.sort_key()):
        if all(torus_distance(rec.point, k.point) > tol for k in kept):
            kept.append(rec)
    return kept


@dataclass
class ManifoldArc:
    root: PeriodicPointRecord
    kind: str  # "stable" | "unstable"
    polyline: np.ndarray
    arc_length: float
    seed_direction: np.ndarray
    complete: bool = True

    def tangent_at_root(self):
        t = torus_displacement(self.polyline[min(1, len(self.polyline) - 1)], self.polyline[0])
        n = np.linalg.norm(t)
        return t / n if n > 0 else t


def _eigenspace(system, record: PeriodicPointRecord, kind: str):
    m, _ = _orbit_jacobian(system, record.point, record.period)
    lams, vecs = np.linalg.eig(m)
    mask = np.abs(lams) > 1.0 if kind == "unstable" else np.abs(lams) < 1.0
    cols = []
    for i in np.nonzero(mask)[0]:
        if abs(lams[i].imag) > 1e-10:
            raise ValueError("complex multipliers: arc growth needs real eigenspaces")
        v = np.real(vecs[:, i])
        cols.append(v / np.linalg.norm(v))
    if not cols:
        raise ValueError(f"no {kind} directions at this record")
    return np.column_stack(cols)


def _polyline_length(pts):
    if len(pts) < 2:
        return 0.0
    gaps = np.linalg.norm(torus_displacement(pts[1:], pts[:-1]), axis=1)
    return float(np.sum(gaps))


def grow_manifold(system, record: PeriodicPointRecord, kind: str,
                  target_length: float, resolution: float,
                  direction=None, max_points: int = 200_000) -> ManifoldArc:
    """One continuation arc from ``record`` along an eigen-direction.

    kind selects the iterated map (f^period for unstable, the inverse for
    stable).  The polyline starts at the root; growth stops once the arc
    length reaches target_length or the point budget is hit (flagged).
    """
    if kind not in ("stable", "unstable"):
        raise ValueError("kind must be 'stable' or 'unstable'")
    if not record.hyperbolic:
        raise NotHyperbolicError("arc growth requires a hyperbolic record")
    space = _eigenspace(system, record, kind)
    if direction is None:
        direction = space[:, 0]
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    # the seed must lie in the eigenspace
    proj = space @ np.linalg.lstsq(space, direction, rcond=None)[0]
    if np.linalg.norm(proj - direction) > 1e-8:
        raise ValueError("seed direction is not in the requested eigenspace")

    if kind == "unstable":
        def advance(pts):
            out = pts
            for _ in range(record.period):
                out = system.step(out)
            return out
    else:
        def advance(pts):
            out = pts
            for _ in range(record.period):
                out = system.step_inverse(out)
            return out

    root = record.point
    t0 = min(1e-5, resolution)
    src = reduce_torus(root[None, :] + np.linspace(0.0, t0, 8)[:, None] * direction[None, :])
    if target_length <= 0.0:
        return ManifoldArc(record, kind, root[None, :].copy(), 0.0, direction)

    complete = True
    cur = src
    for _ in range(200):
        img = advance(cur)
        # refine source segments whose images are too widely spaced
        for _ in range(60):
            gaps = np.linalg.norm(torus_displacement(img[1:], img[:-1]), axis=1)
            bad = np.nonzero(gaps > resolution)[0]
            if bad.size == 0:
                break
            if len(cur) + bad.size > max_points:
                complete = False
                break
            mids = reduce_torus(
                cur[bad] + 0.5 * torus_displacement(cur[bad + 1], cur[bad])
            )
            mid_imgs = advance(mids)
            order = np.argsort(np.concatenate([np.arange(len(cur)), bad + 0.5]))
            cur = np.concatenate([cur, mids])[order]
            img = np.concatenate([img, mid_imgs])[order]
        cur = img
        if not complete or _polyline_length(cur) >= target_length:
            break
    return ManifoldArc(
        root=record,
        kind=kind,
        polyline=cur,
        arc_length=_polyline_length(cur),
        seed_direction=direction,
        complete=complete,
    )


def grow_fan(system, record: PeriodicPointRecord, kind: str, target_length: float,
             resolution: float, rays: int = 64, max_points: int = 200_000):
    """Arcs covering the eigenspace: both branches in 1-d, a ray fan in 2-d."""
    space = _eigenspace(system, record, kind)
    if space.shape[1] == 1:
        dirs = [space[:, 0], -space[:, 0]]
    elif space.shape[1] == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, rays, endpoint=False)
        dirs = [np.cos(a) * space[:, 0] + np.sin(a) * space[:, 1] for a in angles]
    else:
        raise ValueError("fan growth supports 1- or 2-dimensional eigenspaces")
    return [
        grow_manifold(system, record, kind, target_length, resolution,
                      direction=d, max_points=max_points)
        for d in dirs
    ]


@dataclass(frozen=True)
class HeteroclinicEvidence:
    min_distance: float
    witness_a: np.ndarray
    witness_b: np.ndarray
    tol: float

    @property
    def intersects(self) -> bool:
        return self.min_distance < self.tol

    @property
    def inconclusive(self) -> bool:
        return self.tol <= self.min_distance < 10.0 * self.tol


def heteroclinic_test(unstable_arc: ManifoldArc, stable_arc: ManifoldArc,
                      tol: float = 1e-4, chunk: int = 2000) -> HeteroclinicEvidence:
    """Minimal torus distance between an unstable and a stable polyline."""
    if unstable_arc.kind != "unstable" or stable_arc.kind != "stable":
        raise ValueError("expected (unstable, stable) arcs in that order")
    a = unstable_arc.polyline
    b = stable_arc.polyline
    best = np.inf
    wa = a[0]
    wb = b[0]
    for i in range(0, len(a), chunk):
        blk = a[i : i + chunk]
        d = blk[:, None, :] - b[None, :, :]
        d -= np.round(d)
        dist = np.linalg.norm(d, axis=2)
        j = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[j] < best:
            best = float(dist[j])
            wa, wb = blk[j[0]], b[j[1]]
    return HeteroclinicEvidence(min_distance=best, witness_a=wa, witness_b=wb, tol=tol)


@dataclass
class SkeletonCandidate:
    members: list
    distance_matrix: np.ndarray
    connection_matrix: np.ndarray
    warnings: list = field(default_factory=list)


def extract_skeleton(records, arcs, tol: float = 1e-4) -> SkeletonCandidate:
    """Greedy maximal subset with no mutually connected pair.

    ``arcs`` maps each record index to {"unstable": [...], "stable": [...]}.
    connection[i, j] records evidence that W^u(p_i) meets W^s(p_j); a pair is
    in conflict when both directions intersect, and the later record in the
    (period, lexicographic) order is dropped.  Inconclusive pair evidence is
    surfaced as a warning, never silently resolved.
    """
    records = list(records)
    n = len(records)
    if n == 0:
        raise ValueError("need at least one record")
    indexes = sorted(range(n), key=lambda i: records[i].sort_key())
    for i in range(n):
        if not records[i].hyperbolic:
            raise NotHyperbolicError(f"record {i} is not hyperbolic")
        for j in range(i + 1, n):
            if torus_distance(records[i].point, records[j].point) < 1e-8 and \
                    records[i].period == records[j].period:
                raise ValueError(f"records {i} and {j} coincide")
            if records[i].stable_index != records[j].stable_index:
                raise ValueError("records must share one stable index")

    dist = np.full((n, n), np.inf)
    conn = np.zeros((n, n), dtype=bool)
    warnings = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            best = None
            for ua in arcs[i]["unstable"]:
                for sa in arcs[j]["stable"]:
                    ev = heteroclinic_test(ua, sa, tol)
                    if best is None or ev.min_distance < best.min_distance:
                        best = ev
            if best is None:
                continue
            dist[i, j] = best.min_distance
            conn[i, j] = best.intersects
            if best.inconclusive:
                warnings.append(
                    f"pair ({i}, {j}): distance {best.min_distance:.3e} within "
                    f"10x of tol {tol:.1e}; refine arcs to decide"
                )

    kept = []
    for i in indexes:
        if all(not (conn[i, k] and conn[k, i]) for k in kept):
            kept.append(i)
    return SkeletonCandidate(
        members=[records[i] for i in kept],
        distance_matrix=dist,
        connection_matrix=conn,
        warnings=warnings,
    )
