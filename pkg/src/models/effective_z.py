"""
Grid representation of a scale-j effective partition function.

Z_j(φ) = Z_∅ + σ_o Z_o + σ_x Z_x + σ_oσ_x Z_ox for one j-block, stored
through its O(n) structure on a radial grid r_i = i·h (splines in u = r²):

    log Z_∅(φ)    = log_z(|φ|²)                       (plus log_norm)
    Z_o / Z_∅     = φ1 · h_o(|φ|²)                    (Z_x is the same function)
    Z_ox / Z_∅    = iso(|φ|²) + aniso(|φ|²) φ1²/|φ|²

For n = 1 the anisotropic part is identically zero and iso carries the
whole ratio. Scale 0 is evaluated from its closed form.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from src.models.lattice import LatticeShape
from src.models.parameters import ModelParams


def _interpolant(u: np.ndarray, values: np.ndarray, order: int):
    if order == 3:
        return CubicSpline(u, values)
    return lambda t: np.interp(t, u, values)


@dataclass
class EffectiveZ:
    scale: int
    model: ModelParams
    shape: LatticeShape
    x_coords: Tuple[int, ...]
    jox: int
    radii: np.ndarray
    log_z: np.ndarray
    h_o: np.ndarray
    iso: np.ndarray
    aniso: np.ndarray
    log_norm: float = 0.0
    interpolation_order: int = 3
    exact: bool = False
    _splines: Optional[Dict[str, object]] = field(default=None, init=False, repr=False)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def u_grid(self) -> np.ndarray:
        return self.radii ** 2

    @property
    def u_max(self) -> float:
        return float(self.radii[-1] ** 2)

    @property
    def has_ox(self) -> bool:
        """True once o and x share a block."""
        return self.scale >= self.jox

    def _interpolants(self) -> Dict[str, object]:
        if self._splines is None:
            u = self.u_grid
            self._splines = {
                name: _interpolant(u, getattr(self, name), self.interpolation_order)
                for name in ('log_z', 'h_o', 'iso', 'aniso')
            }
        return self._splines

    def log_weight(self, u: np.ndarray) -> np.ndarray:
        """log Z_∅ (without log_norm); -inf beyond the grid."""
        u = np.asarray(u, dtype=float)
        if self.exact:
            return -0.25 * self.model.g * u * u - 0.5 * self.model.nu * u
        inside = u <= self.u_max
        values = self._interpolants()['log_z'](np.minimum(u, self.u_max))
        return np.where(inside, values, -np.inf)

    def o_ratio(self, u: np.ndarray) -> np.ndarray:
        """h_o at squared radii u, held at its edge value beyond the grid."""
        u = np.asarray(u, dtype=float)
        if self.exact:
            return np.ones_like(u)
        return self._interpolants()['h_o'](np.minimum(u, self.u_max))

    def ox_parts(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(iso, aniso) at squared radii u."""
        u = np.asarray(u, dtype=float)
        if self.exact:
            zeros = np.zeros_like(u)
            if self.jox > 0:
                return zeros, zeros
            # x = o: Z_ox / Z_∅ = φ1²
            return (u, zeros) if self.n == 1 else (zeros, u)
        splines = self._interpolants()
        clipped = np.minimum(u, self.u_max)
        return splines['iso'](clipped), splines['aniso'](clipped)

    def evaluate(self, u: np.ndarray):
        """(log Z_∅, h_o, iso, aniso) at squared radii u."""
        iso, aniso = self.ox_parts(u)
        return self.log_weight(u), self.o_ratio(u), iso, aniso

    def ox_ratio(self, psi: np.ndarray) -> np.ndarray:
        """Z_ox/Z_∅ at vector fields psi of shape (..., n)."""
        u = np.sum(psi * psi, axis=-1)
        iso, aniso = self.ox_parts(u)
        if self.n == 1:
            return iso
        cos2 = np.where(u > 0, psi[..., 0] ** 2 / np.where(u > 0, u, 1.0), 1.0 / self.n)
        return iso + aniso * cos2

    def components(self) -> Dict[str, np.ndarray]:
        """
        (φ, Z_∅, Z_o, Z_x, Z_ox) along the first axis φ = (t, 0, ..., 0),
        t over the symmetric grid [-r_max, r_max].
        """
        t = np.concatenate([-self.radii[:0:-1], self.radii])
        u = t ** 2
        log_z, h_o, iso, aniso = self.evaluate(u)
        z_empty = np.exp(log_z)
        z_o = t * h_o * z_empty
        z_ox = (iso + aniso) * z_empty if self.has_ox else np.zeros_like(t)
        return {
            'phi': t,
            'Z_empty': z_empty,
            'Z_o': z_o,
            'Z_x': z_o.copy(),
            'Z_ox': z_ox,
            'log_norm': np.full_like(t, self.log_norm),
        }
