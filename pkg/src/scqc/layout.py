"""Rotated surface-code geometry.

Coordinate convention: data qubit ``(i, j)`` sits at row ``i`` and column
``j``. Plaquette ``(a, b)`` covers the data qubits ``(a-1..a, b-1..b)`` that
exist inside its patch. Within a patch whose columns are ``[lo, hi)``:

* Z plaquettes exist for ``0 <= a <= rows`` and ``1 <= b - lo <= hi - lo - 1``
  with ``a + (b - lo)`` odd. The weight-2 ones sit on the top/bottom rows, so
  the left and right columns are the spatial boundaries of the Z-check graph.
* X plaquettes exist for ``1 <= a <= rows - 1`` and ``0 <= b - lo <= hi - lo``
  with ``a + (b - lo)`` even.

In doubled plane coordinates a data qubit maps to ``(2j+1, 2i+1)`` and a
plaquette to ``(2b, 2a)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

Region = tuple[int, int]  # data columns [lo, hi)

# two-qubit gate order over plaquette corners (row offset, column offset)
Z_ORDER = ((-1, -1), (0, -1), (-1, 0), (0, 0))
X_ORDER = ((-1, -1), (-1, 0), (0, -1), (0, 0))


def z_plaquettes(rows: int, region: Region) -> list[tuple[int, int]]:
    lo, hi = region
    width = hi - lo
    return [
        (a, lo + bl)
        for a in range(rows + 1)
        for bl in range(1, width)
        if (a + bl) % 2 == 1
    ]


def x_plaquettes(rows: int, region: Region) -> list[tuple[int, int]]:
    lo, hi = region
    width = hi - lo
    return [
        (a, lo + bl)
        for a in range(1, rows)
        for bl in range(0, width + 1)
        if (a + bl) % 2 == 0
    ]


def plaquette_data(rows: int, region: Region, a: int, b: int) -> list[tuple[int, int]]:
    lo, hi = region
    return [
        (i, j)
        for i in (a - 1, a)
        for j in (b - 1, b)
        if 0 <= i < rows and lo <= j < hi
    ]


@dataclass(frozen=True)
class PatchLayout:
    """Full qubit layout (data, Z and X ancillas) of a set of patches."""

    rows: int
    regions: tuple[Region, ...]

    @cached_property
    def data(self) -> list[tuple[int, int]]:
        return [(i, j) for lo, hi in self.regions for i in range(self.rows) for j in range(lo, hi)]

    @cached_property
    def z_ancillas(self) -> list[tuple[int, int]]:
        return [p for r in self.regions for p in z_plaquettes(self.rows, r)]

    @cached_property
    def x_ancillas(self) -> list[tuple[int, int]]:
        return [p for r in self.regions for p in x_plaquettes(self.rows, r)]

    @property
    def ancillas(self) -> list[tuple[int, int]]:
        return self.z_ancillas + self.x_ancillas

    def _region_of(self, b: int) -> Region:
        for lo, hi in self.regions:
            if lo <= b <= hi:
                return (lo, hi)
        raise KeyError(b)

    def gate_layers(self) -> list[list[tuple[tuple[int, int], tuple[int, int]]]]:
        """The four two-qubit layers as (ancilla, data) pairs."""
        layers: list[list] = [[], [], [], []]
        for order, ancillas in ((Z_ORDER, self.z_ancillas), (X_ORDER, self.x_ancillas)):
            for a, b in ancillas:
                lo, hi = self._region_of(b)
                for k, (da, db) in enumerate(order):
                    i, j = a + da, b + db
                    if 0 <= i < self.rows and lo <= j < hi:
                        layers[k].append(((a, b), (i, j)))
        return layers
