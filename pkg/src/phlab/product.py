"""Product systems g = base x T with factor projections and domination checks.

Shipped bases are 2-dimensional linear automorphisms (the deformed 4-torus
map is native, not assembled here); fibers are hyperbolic toral automorphisms.
The builder verifies the sampled rate ordering

    min expansion(base unstable)  >  fiber unstable rate           (margin 10%)
    fiber unstable rate           >  max rate(base stable), fiber stable

so the product carries the splitting  base-uu > fiber-u > (fiber-s + base-s).

A private ``coupling`` hook lets tests corrupt the fiber coordinate with a
base-dependent shift; the commuting-diagram check must then detect a nonzero
residual (negative control).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleFiberError
from .torus import ToralAutomorphism, reduce_torus, torus_distance


class LinearSystem:
    """A hyperbolic toral automorphism dressed in the common system interface."""

    def __init__(self, auto):
        if not isinstance(auto, ToralAutomorphism):
            auto = ToralAutomorphism(auto)
        self.auto = auto
        self.dim = auto.dim
        self._jac = auto.matrix.to_float()
        self._jac_inv = auto.matrix.inverse().to_float()
        lams = auto.splitting.eigenvalues
        vecs = auto.splitting.eigenvectors
        if self.dim == 4:
            order = [0, 3, 1, 2]  # modulus-sorted -> (uu, ss, u, s)
        else:
            order = list(range(self.dim))
        self.axes = vecs[:, order]
        self.rates = np.abs(lams[order])

    def step(self, x):
        return self.auto.apply(x)

    def step_inverse(self, x):
        return self.auto.apply_inverse(x)

    def _broadcast(self, x, mat):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return mat.copy()
        return np.broadcast_to(mat, (x.shape[0],) + mat.shape).copy()

    def jacobian(self, x):
        return self._broadcast(x, self._jac)

    def jacobian_inverse(self, x):
        return self._broadcast(x, self._jac_inv)

    def jacobian_chart(self, x):
        return self._broadcast(x, np.diag(self.rates * np.sign(
            np.diag(self.axes.T @ self._jac @ self.axes))))

    @property
    def chart_p(self):
        from .deformation import ChartBox

        return ChartBox(center=np.zeros(self.dim), half_width=0.5, axes=self.axes)

    def skew_unstable_bundle(self):
        """Strongest unstable axis and its exact rate."""
        return self.axes[:, 0], float(self.rates[0])

    def unstable_rate_range(self, _samples=None):
        lam = float(self.rates[0])
        return lam, lam

    def stable_rate_max(self, _samples=None):
        stable = self.rates[np.abs(self.rates) < 1.0]
        return float(np.max(stable))


@dataclass(frozen=True)
class FactorMaps:
    """Projections of the product: pi12 to the base, pi2 to the fiber, and the
    composition pi with the base's Anosov factor (identity for linear bases)."""

    base_dim: int
    fiber_dim: int

    def pi12(self, z):
        return np.asarray(z, dtype=float)[..., : self.base_dim]

    def pi2(self, z):
        return np.asarray(z, dtype=float)[..., self.base_dim :]

    def pi(self, z):
        return self.pi12(z)


class ProductSystem:
    """g = base x T acting on T^{d1} x T^{d2} with block-diagonal derivative."""

    def __init__(self, base, fiber: ToralAutomorphism, coupling=None):
        self.base = base
        self.fiber = fiber
        self.d1 = base.dim
        self.d2 = fiber.dim
        self.dim = self.d1 + self.d2
        self.factors = FactorMaps(self.d1, self.d2)
        self._coupling = coupling
        self._fiber_jac = fiber.matrix.to_float()
        self._fiber_jac_inv = fiber.matrix.inverse().to_float()

    def step(self, z):
        z = np.asarray(z, dtype=float)
        x = self.base.step(z[..., : self.d1])
        y = self.fiber.apply(z[..., self.d1 :])
        if self._coupling is not None:
            y = reduce_torus(y + self._coupling(z[..., : self.d1]))
        return np.concatenate([x, y], axis=-1)

    def step_inverse(self, z):
        if self._coupling is not None:
            raise NotImplementedError("coupled test systems are forward-only")
        z = np.asarray(z, dtype=float)
        x = self.base.step_inverse(z[..., : self.d1])
        y = self.fiber.apply_inverse(z[..., self.d1 :])
        return np.concatenate([x, y], axis=-1)

    def _block(self, base_blocks, fiber_block):
        single = base_blocks.ndim == 2
        blocks = base_blocks[None] if single else base_blocks
        n = blocks.shape[0]
        out = np.zeros((n, self.dim, self.dim))
        out[:, : self.d1, : self.d1] = blocks
        out[:, self.d1 :, self.d1 :] = fiber_block
        return out[0] if single else out

    def jacobian(self, z):
        z = np.asarray(z, dtype=float)
        return self._block(self.base.jacobian(z[..., : self.d1]), self._fiber_jac)

    def jacobian_inverse(self, z):
        z = np.asarray(z, dtype=float)
        return self._block(
            self.base.jacobian_inverse(z[..., : self.d1]), self._fiber_jac_inv
        )

    def skew_unstable_bundle(self):
        axis, rate = self.base.skew_unstable_bundle()
        return np.concatenate([axis, np.zeros(self.d2)]), rate


def build_product(base_system, fiber, sample_grid: int = 64,
                  margin: float = 1.1, coupling=None) -> ProductSystem:
    """Assemble base x fiber after the sampled domination pre-check.

    Rejects anything but a 2-dimensional base (the 4-torus deformation is a
    native system, never a product of this builder) and raises
    IncompatibleFiberError naming the violated rate inequality.
    """
    if not isinstance(fiber, ToralAutomorphism):
        fiber = ToralAutomorphism(fiber)
    if base_system.dim != 2:
        raise IncompatibleFiberError(
            f"base must be 2-dimensional (got {base_system.dim}); higher-"
            "dimensional systems are native, not products"
        )
    fiber_lams = np.abs(fiber.splitting.eigenvalues)
    fiber_u = float(np.max(fiber_lams))
    fiber_s = float(np.max(fiber_lams[fiber_lams < 1.0]))
    samples = _grid_points(base_system.dim, sample_grid)
    base_uu_min, _ = base_system.unstable_rate_range(samples)
    base_cs_max = base_system.stable_rate_max(samples)
    if base_uu_min < margin * fiber_u:
        raise IncompatibleFiberError(
            f"base unstable rate {base_uu_min:.4f} must exceed "
            f"{margin:.2f} x fiber unstable {fiber_u:.4f}"
        )
    if fiber_u < margin * base_cs_max:
        raise IncompatibleFiberError(
            f"fiber unstable rate {fiber_u:.4f} must exceed "
            f"{margin:.2f} x base center-stable {base_cs_max:.4f}"
        )
    if fiber_u < margin * fiber_s:
        raise IncompatibleFiberError(
            f"fiber unstable {fiber_u:.4f} must dominate fiber stable {fiber_s:.4f}"
        )
    return ProductSystem(base_system, fiber, coupling=coupling)


def _grid_points(dim, n):
    axes = [np.linspace(0.0, 1.0, n, endpoint=False)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def commuting_diagram_check(ps: ProductSystem, n_points: int = 1000, rng=None):
    """Max residuals of the two factor diagrams over random points.

    Returns {"base": max ||pi12(g z) - f(pi12 z)||, "fiber":同 for pi2/T},
    both in the torus metric; exact products give values at rounding level.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    z = rng.random((n_points, ps.dim))
    gz = ps.step(z)
    base_res = torus_distance(ps.factors.pi12(gz), ps.base.step(ps.factors.pi12(z)))
    fiber_res = torus_distance(ps.factors.pi2(gz), ps.fiber.apply(ps.factors.pi2(z)))
    return {"base": float(np.max(base_res)), "fiber": float(np.max(fiber_res))}


def fiber_pushforward_statistics(ps: ProductSystem, measure):
    """Base and fiber marginals of a measure on the product grid."""
    if len(measure.grid) != ps.dim:
        raise ValueError(
            f"measure grid has {len(measure.grid)} dims, product has {ps.dim}"
        )
    base = measure.marginal(tuple(range(ps.d1)))
    fiber = measure.marginal(tuple(range(ps.d1, ps.dim)))
    return base, fiber
