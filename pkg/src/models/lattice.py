"""
Hierarchical lattice Λ_N.

A site is stored as its base-L digit expansion, one d-tuple of digits per
level, level 1 first. Group addition is digitwise addition mod L and the
coalescence scale of two sites is the highest level at which their digits
differ.

Sites also have a packed integer form

    p = Σ_k D_k L^{d(k-1)},   D_k = Σ_i digit_{k,i} L^i,

so that every j-block is the contiguous index range
[b·L^{dj}, (b+1)·L^{dj}) and its block index is p // L^{dj}. The vectorised
helpers at the bottom of this module work on packed indices.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence, Tuple

import numpy as np

from src.models.errors import LatticeError


class BoundaryCondition(str, Enum):
    """Free (zero Dirichlet) or periodic coupling."""
    FREE = 'free'
    PERIODIC = 'periodic'

    @classmethod
    def parse(cls, value) -> 'BoundaryCondition':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise LatticeError(
                f"Unknown boundary condition '{value}' "
                f"(expected one of {[bc.value for bc in cls]})"
            )


@dataclass(frozen=True)
class LatticeShape:
    """
    Dimensions of Λ_N plus its boundary condition.

    The algebra accepts any d >= 1; restrictions to d >= 4 belong to the
    theory layer in src.kernels.scales.
    """
    d: int
    L: int
    N: int
    bc: BoundaryCondition = BoundaryCondition.PERIODIC

    MAX_VOLUME = 2 ** 62

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise LatticeError(f"Dimension d must be a positive integer, got {self.d}")
        if int(self.L) != self.L or self.L < 2:
            raise LatticeError(f"Block side L must be an integer >= 2, got {self.L}")
        if int(self.N) != self.N or self.N < 0:
            raise LatticeError(f"Number of scales N must be >= 0, got {self.N}")
        object.__setattr__(self, 'bc', BoundaryCondition.parse(self.bc))
        if self.L ** (self.d * self.N) > self.MAX_VOLUME:
            raise LatticeError(
                f"Volume L^(dN) = {self.L}^{self.d * self.N} exceeds 2^62"
            )

    @property
    def volume(self) -> int:
        return self.L ** (self.d * self.N)

    @property
    def side(self) -> int:
        return self.L ** self.N

    @property
    def block_size(self) -> int:
        """Number of sites in a 1-block, L^d."""
        return self.L ** self.d

    def sites_per_block(self, j: int) -> int:
        return self.L ** (self.d * j)

    def block_count(self, j: int) -> int:
        self._check_scale(j)
        return self.L ** (self.d * (self.N - j))

    def with_bc(self, bc) -> 'LatticeShape':
        return LatticeShape(self.d, self.L, self.N, BoundaryCondition.parse(bc))

    def origin(self) -> 'Site':
        return Site(self, tuple((0,) * self.d for _ in range(self.N)))

    def iter_sites(self) -> Iterator['Site']:
        """All sites in packed (canonical) order."""
        for p in range(self.volume):
            yield Site.unpack(p, self)

    def _check_scale(self, j: int):
        if j < 0 or j > self.N:
            raise LatticeError(f"Scale j={j} outside [0, {self.N}]")


@dataclass(frozen=True)
class BlockId:
    """A j-block, identified by the integer formed from digits j+1..N."""
    scale: int
    index: int


@dataclass(frozen=True)
class Site:
    """A point of Λ_N as its digit expansion (level 1 first)."""
    shape: LatticeShape
    digits: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.digits) != self.shape.N:
            raise LatticeError(
                f"Expected {self.shape.N} digit levels, got {len(self.digits)}"
            )
        for level in self.digits:
            if len(level) != self.shape.d:
                raise LatticeError(f"Digit level {level} does not have d={self.shape.d} components")
            for digit in level:
                if digit < 0 or digit >= self.shape.L:
                    raise LatticeError(f"Digit {digit} outside [0, {self.shape.L})")

    @classmethod
    def unpack(cls, p: int, shape: LatticeShape) -> 'Site':
        if p < 0 or p >= shape.volume:
            raise LatticeError(f"Packed index {p} outside [0, {shape.volume})")
        digits = []
        for _ in range(shape.N):
            level = []
            for _ in range(shape.d):
                level.append(p % shape.L)
                p //= shape.L
            digits.append(tuple(level))
        return cls(shape, tuple(digits))

    def pack(self) -> int:
        L, d = self.shape.L, self.shape.d
        p = 0
        for k in range(self.shape.N - 1, -1, -1):
            for i in range(d - 1, -1, -1):
                p = p * L + self.digits[k][i]
        return p

    def to_coords(self) -> Tuple[int, ...]:
        coords = [0] * self.shape.d
        weight = 1
        for level in self.digits:
            for i, digit in enumerate(level):
                coords[i] += digit * weight
            weight *= self.shape.L
        return tuple(coords)

    def is_origin(self) -> bool:
        return all(digit == 0 for level in self.digits for digit in level)

    def __str__(self):
        return f"Site{self.to_coords()}"


def from_coords(coords: Sequence[int], shape: LatticeShape) -> Site:
    """
    Site with the given orthant-box coordinates.

    Args:
        coords: d nonnegative integers, each < L^N
        shape: lattice the site belongs to

    Returns:
        Site whose digits are the base-L expansion of each coordinate

    Raises:
        LatticeError: If the number of coordinates or any value is out of range
    """
    coords = tuple(int(c) for c in coords)
    if len(coords) != shape.d:
        raise LatticeError(f"Expected {shape.d} coordinates, got {len(coords)}")
    for c in coords:
        if c < 0 or c >= shape.side:
            raise LatticeError(f"Coordinate {c} outside [0, {shape.side})")

    digits = []
    rest = list(coords)
    for _ in range(shape.N):
        digits.append(tuple(c % shape.L for c in rest))
        rest = [c // shape.L for c in rest]
    return Site(shape, tuple(digits))


def _check_same_shape(x: Site, y: Site):
    if x.shape != y.shape:
        raise LatticeError(f"Shape mismatch: {x.shape} vs {y.shape}")


def oplus(x: Site, y: Site) -> Site:
    """Group addition x ⊕ y."""
    _check_same_shape(x, y)
    L = x.shape.L
    return Site(x.shape, tuple(
        tuple((a + b) % L for a, b in zip(lx, ly))
        for lx, ly in zip(x.digits, y.digits)
    ))


def ominus(x: Site, y: Site) -> Site:
    """Group subtraction x ⊖ y, the inverse of ⊕ y."""
    _check_same_shape(x, y)
    L = x.shape.L
    return Site(x.shape, tuple(
        tuple((a - b) % L for a, b in zip(lx, ly))
        for lx, ly in zip(x.digits, y.digits)
    ))


def coalescence(x: Site, y: Site) -> int:
    """Coalescence scale j_xy: the highest level at which x and y differ, 0 if x = y."""
    _check_same_shape(x, y)
    for k in range(x.shape.N, 0, -1):
        if x.digits[k - 1] != y.digits[k - 1]:
            return k
    return 0


def block_index(x: Site, j: int) -> BlockId:
    """The j-block containing x."""
    x.shape._check_scale(j)
    return BlockId(scale=j, index=x.pack() // x.shape.sites_per_block(j))


def euclid_norm(x: Site) -> float:
    """ℓ2 norm of the orthant-box coordinates of x."""
    return math.sqrt(sum(c * c for c in x.to_coords()))


def class_representatives(shape: LatticeShape) -> Tuple[Site, ...]:
    """
    One site per coalescence class j_ox = 0..N: the origin, then the site with
    a single digit 1 in coordinate 1 at level j.
    """
    sites = [shape.origin()]
    for j in range(1, shape.N + 1):
        coords = [0] * shape.d
        coords[0] = shape.L ** (j - 1)
        sites.append(from_coords(coords, shape))
    return tuple(sites)


def class_sizes(shape: LatticeShape) -> np.ndarray:
    """Number of sites x with j_ox = j, for j = 0..N."""
    sizes = [1]
    for j in range(1, shape.N + 1):
        sizes.append(shape.L ** (shape.d * j) - shape.L ** (shape.d * (j - 1)))
    return np.array(sizes, dtype=np.int64)


# Vectorised packed-index helpers

def level_digits(p: np.ndarray, shape: LatticeShape, k: int) -> np.ndarray:
    """Level-k digit word D_k of packed indices (k = 1..N)."""
    Ld = shape.block_size
    return (np.asarray(p, dtype=np.int64) // (Ld ** (k - 1))) % Ld


def coalescence_packed(p: np.ndarray, q: np.ndarray, shape: LatticeShape) -> np.ndarray:
    """Elementwise coalescence scale of packed indices (broadcasting)."""
    p = np.asarray(p, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64)
    j = np.zeros(np.broadcast(p, q).shape, dtype=np.int64)
    for k in range(1, shape.N + 1):
        j = np.where(level_digits(p, shape, k) != level_digits(q, shape, k), k, j)
    return j


def oplus_packed(p: np.ndarray, q, shape: LatticeShape) -> np.ndarray:
    """Elementwise p ⊕ q on packed indices (broadcasting)."""
    p = np.asarray(p, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64)
    L = shape.L
    out = np.zeros(np.broadcast(p, q).shape, dtype=np.int64)
    for position in range(shape.d * shape.N):
        weight = L ** position
        out += (((p // weight) % L + (q // weight) % L) % L) * weight
    return out


def coalescence_matrix(shape: LatticeShape, max_volume: int = 10 ** 4) -> np.ndarray:
    """Dense j_xy matrix over all site pairs (verification sizes only)."""
    if shape.volume > max_volume:
        raise LatticeError(f"Volume {shape.volume} exceeds dense limit {max_volume}")
    idx = np.arange(shape.volume, dtype=np.int64)
    return coalescence_packed(idx[:, None], idx[None, :], shape)


def translation_permutation(shape: LatticeShape, x: Site) -> np.ndarray:
    """Packed index of z ⊕ x for every packed z."""
    return oplus_packed(np.arange(shape.volume, dtype=np.int64), x.pack(), shape)


def digits_array(shape: LatticeShape) -> np.ndarray:
    """Digits of every site, shape (volume, N, d), packed order."""
    idx = np.arange(shape.volume, dtype=np.int64)
    out = np.empty((shape.volume, shape.N, shape.d), dtype=np.int64)
    for k in range(shape.N):
        for i in range(shape.d):
            out[:, k, i] = (idx // shape.L ** (k * shape.d + i)) % shape.L
    return out


def coords_array(shape: LatticeShape) -> np.ndarray:
    """Orthant-box coordinates of every site, shape (volume, d), packed order."""
    digits = digits_array(shape)
    weights = shape.L ** np.arange(shape.N, dtype=np.int64)
    return np.einsum('vkd,k->vd', digits, weights)
