"""Parameter box and the affinely parameterized thermal-block diffusion.

Two multiscale fields are split into ``4 x 4`` thermal blocks each.  Block
``(i, j)`` (``i`` along x, ``j`` along y, both 1-based) of the first field is
multiplied by parameter ``4 (j - 1) + i`` and the same block of the second
field by that index plus 16, so that

    A(mu)(x) = sum_xi mu_xi A_xi(x),   xi = 1..32.
"""
import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

NUM_BLOCKS = 4


@dataclass(frozen=True)
class BoxParameterSpace:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError('bounds must be 1d arrays of equal length')
        if np.any(lower > upper):
            raise ValueError('lower bound exceeds upper bound')
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    def parse(self, mu):
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.dim,):
            raise ValueError(f'expected parameter of length {self.dim}, got shape {mu.shape}')
        if not np.all(np.isfinite(mu)):
            raise ValueError('parameter has non-finite entries')
        return mu

    def project(self, mu):
        return np.clip(self.parse(mu), self.lower, self.upper)

    def contains(self, mu):
        mu = self.parse(mu)
        return bool(np.all(mu >= self.lower) and np.all(mu <= self.upper))

    def sample(self, rng):
        return rng.uniform(self.lower, self.upper)


def project_to_box(space, mu):
    return space.project(mu)


def middle_block_mask():
    """Boolean mask over the 16 blocks of one field marking the 2x2 centre."""
    i, j = np.meshgrid(np.arange(NUM_BLOCKS), np.arange(NUM_BLOCKS))
    return ((i == 1) | (i == 2)) & ((j == 1) | (j == 2))


def thermal_block_space(lower=1.0, upper=4.0, middle_upper=1.2):
    """Box with the low-conductivity centre blocks restricted to ``[lower, middle_upper]``."""
    mid = middle_block_mask().ravel()
    up = np.where(mid, middle_upper, upper)
    up = np.concatenate([up, up])
    return BoxParameterSpace(np.full(2 * NUM_BLOCKS ** 2, float(lower)), up)


@dataclass(frozen=True)
class MultiscaleField:
    """Piecewise constant field on an ``N x N`` grid, ``values[iy, ix]``."""
    values: np.ndarray

    @property
    def resolution(self):
        return self.values.shape[0]

    @property
    def block_map(self):
        """Thermal block (0-based, x-fastest) containing each cell centre."""
        N = self.resolution
        centers = (np.arange(N) + 0.5) / N
        b = np.minimum((centers * NUM_BLOCKS).astype(int), NUM_BLOCKS - 1)
        return b[:, None] * NUM_BLOCKS + b[None, :]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        N = self.resolution
        idx = np.minimum((x * N).astype(int), N - 1)
        return self.values[idx[..., 1], idx[..., 0]]

    def on_grid(self, n):
        """Values on the cells of an ``n x n`` grid refining this one, row-major."""
        N = self.resolution
        if n % N:
            raise ValueError(f'grid resolution {n} does not resolve field resolution {N}')
        r = n // N
        return np.repeat(np.repeat(self.values, r, axis=0), r, axis=1).ravel()

    def to_csv(self, path):
        with open(path, 'w', newline='') as fp:
            w = csv.writer(fp)
            w.writerow([self.resolution])
            for v in self.values.ravel():
                w.writerow([repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline='') as fp:
            rows = list(csv.reader(fp))
        N = int(rows[0][0])
        return cls(np.array([float(r[0]) for r in rows[1:]]).reshape(N, N))


def sample_field(resolution, value_range=(0.9, 1.1), seed=0):
    lo, hi = value_range
    if resolution < 1:
        raise ValueError('resolution must be positive')
    if hi < lo:
        raise ValueError(f'empty value range {value_range}')
    rng = np.random.default_rng(seed)
    return MultiscaleField(rng.uniform(lo, hi, size=(resolution, resolution)))


def constant_field(value=1.0, resolution=1):
    return MultiscaleField(np.full((resolution, resolution), float(value)))


def block_index(x):
    """0-based thermal block (x-fastest) of points ``x`` in the unit square."""
    x = np.asarray(x, dtype=float)
    b = np.minimum((x * NUM_BLOCKS).astype(int), NUM_BLOCKS - 1)
    return b[..., 1] * NUM_BLOCKS + b[..., 0]


@dataclass(frozen=True)
class AffineDiffusion:
    fields: tuple

    @property
    def num_parameters(self):
        return len(self.fields) * NUM_BLOCKS ** 2

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError('point outside the unit square')
        return x

    def components(self, x):
        """``(..., P)`` values of every ``A_xi`` at the points ``x``."""
        x = self._check(x)
        nb = NUM_BLOCKS ** 2
        out = np.zeros(x.shape[:-1] + (self.num_parameters,))
        b = block_index(x)
        for f, field_ in enumerate(self.fields):
            np.put_along_axis(out, (b + f * nb)[..., None], field_(x)[..., None], axis=-1)
        return out

    def evaluate(self, mu, x):
        return self.components(x) @ np.asarray(mu, dtype=float)

    def cell_data(self, n):
        """Per-cell parameter indices and values on an ``n x n`` grid.

        Returns ``(xi, values)`` of shape ``(num_fields, n*n)``.
        """
        if n % NUM_BLOCKS:
            raise ValueError(f'grid resolution {n} does not resolve the {NUM_BLOCKS}x{NUM_BLOCKS} blocks')
        cy, cx = np.divmod(np.arange(n * n), n)
        centers = np.stack([(cx + 0.5) / n, (cy + 0.5) / n], axis=1)
        b = block_index(centers)
        nb = NUM_BLOCKS ** 2
        xi = np.stack([b + f * nb for f in range(len(self.fields))])
        values = np.stack([fl.on_grid(n) for fl in self.fields])
        return xi, values

    def _block_extrema(self, reduce):
        nb = NUM_BLOCKS ** 2
        out = []
        for fl in self.fields:
            # common refinement of field cells and thermal blocks
            n = int(np.lcm(fl.resolution, NUM_BLOCKS))
            cy, cx = np.divmod(np.arange(n * n), n)
            b = block_index(np.stack([(cx + 0.5) / n, (cy + 0.5) / n], axis=1))
            v = fl.on_grid(n)
            out.append([reduce(v[b == k]) for k in range(nb)])
        return np.asarray(out)

    @cached_property
    def block_min(self):
        return self._block_extrema(np.min)

    @cached_property
    def block_max(self):
        return self._block_extrema(np.max)

    def coercivity_lower_bound(self, mu):
        """``min_x A(mu)(x)`` bounded from below blockwise by field minima."""
        mu = np.asarray(mu, dtype=float).reshape(len(self.fields), -1)
        return float(np.min(np.sum(mu * self.block_min, axis=0)))

    def continuity_upper_bound(self, mu):
        mu = np.asarray(mu, dtype=float).reshape(len(self.fields), -1)
        return float(np.max(np.sum(mu * self.block_max, axis=0)))


def thermal_block_diffusion(N1, N2, seed=42, value_range=(0.9, 1.1)):
    """The two-field benchmark coefficient; fields use seeds ``seed`` and ``seed + 1``."""
    return AffineDiffusion((sample_field(N1, value_range, seed),
                            sample_field(N2, value_range, seed + 1)))
