"""Molecular geometries and radius graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..density import SPECIES

SPECIES_INDEX = {s: i for i, s in enumerate(SPECIES)}

DUPLICATE_TOL = 1e-6


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    """Atomic species and positions in Angstrom."""

    species: tuple
    positions: np.ndarray

    def __post_init__(self):
        species = tuple(self.species)
        pos = np.asarray(self.positions, dtype=float)
        if len(species) == 0:
            raise GraphError("geometry needs at least one atom")
        for s in species:
            if s not in SPECIES_INDEX:
                raise GraphError(f"unknown species {s!r}; supported: {SPECIES}")
        if pos.shape != (len(species), 3):
            raise GraphError(
                f"positions must have shape ({len(species)}, 3), got {pos.shape}"
            )
        if not np.all(np.isfinite(pos)):
            raise GraphError("positions must be finite")
        object.__setattr__(self, "species", species)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return len(self.species)

    def onehot(self) -> np.ndarray:
        out = np.zeros((len(self.species), len(SPECIES)))
        for i, s in enumerate(self.species):
            out[i, SPECIES_INDEX[s]] = 1.0
        return out

    def transformed(self, matrix=None, shift=None) -> "Geometry":
        pos = self.positions
        if matrix is not None:
            pos = pos @ np.asarray(matrix, dtype=float).T
        if shift is not None:
            pos = pos + np.asarray(shift, dtype=float)
        return Geometry(self.species, pos)

    def permuted(self, perm) -> "Geometry":
        perm = np.asarray(perm, dtype=int)
        return Geometry(
            tuple(self.species[i] for i in perm), self.positions[perm]
        )


@dataclass(frozen=True)
class Graph:
    """Directed radius graph.

    Edge k connects receiver recv[k] to neighbor send[k]; disp[k] is
    x_send - x_recv and dist[k] its length.  Edges are sorted by
    (recv, send) and never connect a node to itself.
    """

    species_onehot: np.ndarray
    positions: np.ndarray
    recv: np.ndarray
    send: np.ndarray
    disp: np.ndarray
    dist: np.ndarray
    cutoff: float

    @property
    def num_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def num_edges(self) -> int:
        return self.recv.shape[0]


def build_graph(geometry: Geometry, cutoff: float) -> Graph:
    """All directed pairs (i, j), i != j, with 0 < |x_j - x_i| <= cutoff."""
    if cutoff <= 0:
        raise GraphError(f"cutoff must be positive, got {cutoff}")
    pos = geometry.positions
    n = len(geometry)
    delta = pos[None, :, :] - pos[:, None, :]
    dist = np.linalg.norm(delta, axis=-1)
    off_diag = ~np.eye(n, dtype=bool)
    dup = np.argwhere(off_diag & (dist < DUPLICATE_TOL))
    if dup.size:
        i, j = int(dup[0, 0]), int(dup[0, 1])
        raise GraphError(f"atoms {i} and {j} are closer than {DUPLICATE_TOL} A")
    recv, send = np.nonzero(off_diag & (dist <= cutoff))
    # nonzero already yields row-major (recv, send) lexicographic order
    return Graph(
        species_onehot=geometry.onehot(),
        positions=pos,
        recv=recv.astype(int),
        send=send.astype(int),
        disp=delta[recv, send],
        dist=dist[recv, send],
        cutoff=float(cutoff),
    )
