"""Grid fields on rectangular domains.

A :class:`ScalarField` couples node values with the grid geometry and an
explicit boundary mask.  All solver and flow machinery operates on these
fields; they are treated as immutable (operations return fresh fields).

The CSV on-disk format is::

    dims,n1[,n2],h1[,h2],origin1[,origin2]
    v_0
    v_1
    ...

with values in row-major order and the infinity sentinel serialized as the
literal ``inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

# Finite stand-in for +infinity.  Arithmetic with it is saturating by
# convention: any candidate involving the sentinel loses every max/min
# against finite competitors (see hlx.hamiltonian.BIG usage).
BIG = 1.0e30
BIG_CUT = 0.5e30


def is_big(x):
    """True where ``x`` represents the +infinity sentinel."""
    return np.asarray(x) >= BIG_CUT


@dataclass(frozen=True)
class ScalarField:
    """A grid function on a rectangular domain (1D or 2D).

    Parameters
    ----------
    values : ndarray
        Node values, shape ``(n1,)`` or ``(n1, n2)``.
    spacing : tuple of float
        Grid step per axis.
    origin : tuple of float
        Physical coordinates of node index 0.
    boundary : ndarray of bool
        Nodes designated as the domain boundary.  Defaults to the grid edge.
    """

    values: np.ndarray
    spacing: tuple
    origin: tuple
    boundary: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim not in (1, 2):
            raise ValueError(f"only 1D/2D grids supported, got ndim={v.ndim}")
        sp = tuple(float(s) for s in np.atleast_1d(self.spacing))
        if len(sp) == 1 and v.ndim == 2:
            sp = sp * 2
        og = tuple(float(s) for s in np.atleast_1d(self.origin))
        if len(og) == 1 and v.ndim == 2:
            og = og * 2
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "origin", og)
        if self.boundary is None:
            object.__setattr__(self, "boundary", edge_mask(v.shape))
        else:
            b = np.asarray(self.boundary, dtype=bool)
            if b.shape != v.shape:
                raise ValueError("boundary mask shape mismatch")
            object.__setattr__(self, "boundary", b)

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def interior(self):
        return ~self.boundary

    def axes(self):
        """Per-axis node coordinate arrays."""
        return [
            self.origin[d] + self.spacing[d] * np.arange(self.shape[d])
            for d in range(self.ndim)
        ]

    def coords(self):
        """Node coordinates, shape ``(*shape, ndim)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def osc(self):
        """Oscillation max - min of the values."""
        return float(np.max(self.values) - np.min(self.values))

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=float))

    def boundary_distance(self):
        """Euclidean distance from each node to the nearest boundary node."""
        from scipy.ndimage import distance_transform_edt

        if not self.boundary.any():
            return np.full(self.shape, np.inf)
        sampling = self.spacing
        return distance_transform_edt(~self.boundary, sampling=sampling)

    def collar(self, width):
        """Mask of nodes within Euclidean ``width`` of the grid edge."""
        d = ScalarField(
            self.values, self.spacing, self.origin, edge_mask(self.shape)
        ).boundary_distance()
        return (d <= width) | edge_mask(self.shape)

    def write_csv(self, path):
        write_field_csv(path, self)

    @staticmethod
    def read_csv(path, boundary=None):
        return read_field_csv(path, boundary=boundary)


def edge_mask(shape):
    """Boolean mask of the outermost layer of nodes."""
    m = np.zeros(shape, dtype=bool)
    if len(shape) == 1:
        m[0] = m[-1] = True
    else:
        m[0, :] = m[-1, :] = True
        m[:, 0] = m[:, -1] = True
    return m


def write_field_csv(path, f: ScalarField):
    header = [str(f.ndim)]
    header += [str(n) for n in f.shape]
    header += [repr(h) for h in f.spacing]
    header += [repr(o) for o in f.origin]
    flat = f.values.ravel(order="C")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for v in flat:
            fh.write("inf\n" if v >= BIG_CUT else repr(float(v)) + "\n")


def read_field_csv(path, boundary=None):
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        dims = int(head[0])
        shape = tuple(int(x) for x in head[1 : 1 + dims])
        spacing = tuple(float(x) for x in head[1 + dims : 1 + 2 * dims])
        origin = tuple(float(x) for x in head[1 + 2 * dims : 1 + 3 * dims])
        vals = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals.append(BIG if line == "inf" else float(line))
    values = np.asarray(vals, dtype=float).reshape(shape, order="C")
    return ScalarField(values, spacing, origin, boundary=boundary)


def write_points_csv(path, points):
    """Point clouds serialized one point per row, ``q1,q2[,q3]``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w") as fh:
        for row in pts:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_points_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(x) for x in line.split(",")])
    return np.asarray(rows, dtype=float)
