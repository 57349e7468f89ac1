"""Dataset lifecycle: cluster generation, teacher labels, transforms, I/O.

Structures are rigid water monomers packed into connected clusters.  Labels
come from a fixed, seeded teacher network whose raw outputs are rescaled per
angular momentum so that coefficient magnitudes fall off with l, the way
fitted density coefficients do; that makes the scaled-dataset transform a
meaningful inverse operation rather than a no-op.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .density import AuxiliaryBasis, DensityCoefficients, Shell, shell_norm
from .irreps import hidden_config, slices
from .net import Geometry, ModelConfig, forward, init_model
from .so3 import rotation_from_quaternion


class DataError(ValueError):
    pass


MONOMER_OH = 0.9572
MONOMER_HOH = math.radians(104.52)

OO_MIN, OO_MAX = 2.5, 4.0
CLASH_MIN = 1.5
MIN_ATOM_DIST = 0.5
MAX_PLACEMENT_TRIES = 200

# teacher label shaping: per-l std 0.8 * 3^-l, then a constant shift that
# makes l=0 coefficients dominate in norm without touching any std
TEACHER_L0_STD = 0.8
TEACHER_STD_DECAY = 3.0
TEACHER_L0_SHIFT = 1.0
_CALIBRATION_SEED = 90210
_CALIBRATION_STRUCTURES = 16


def monomer_positions() -> np.ndarray:
    """Reference water monomer: O at origin, H atoms in the xz plane."""
    sx = MONOMER_OH * math.sin(MONOMER_HOH / 2)
    cz = MONOMER_OH * math.cos(MONOMER_HOH / 2)
    return np.array([[0.0, 0.0, 0.0], [sx, 0.0, cz], [-sx, 0.0, cz]])


def _random_direction(rng) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _oriented_monomer(rng, origin) -> np.ndarray:
    rot = rotation_from_quaternion(rng.standard_normal(4)).matrix
    return monomer_positions() @ rot.T + np.asarray(origin)


def _generate_cluster(n_molecules: int, rng, label: str) -> Geometry:
    positions = [_oriented_monomer(rng, np.zeros(3))]
    for mol in range(1, n_molecules):
        placed = None
        for _ in range(MAX_PLACEMENT_TRIES):
            anchor = positions[rng.integers(len(positions))][0]
            origin = anchor + rng.uniform(OO_MIN, OO_MAX) * _random_direction(rng)
            candidate = _oriented_monomer(rng, origin)
            existing = np.concatenate(positions)
            dists = np.linalg.norm(
                candidate[:, None, :] - existing[None, :, :], axis=-1
            )
            oxygens = np.array([p[0] for p in positions])
            oo = np.linalg.norm(oxygens - origin, axis=-1)
            if np.min(dists) >= CLASH_MIN and np.min(oo) >= OO_MIN:
                placed = candidate
                break
        if placed is None:
            raise DataError(
                f"{label}: could not place molecule {mol} after "
                f"{MAX_PLACEMENT_TRIES} tries"
            )
        positions.append(placed)
    return Geometry(
        ("O", "H", "H") * n_molecules, np.concatenate(positions)
    )


def generate_clusters(n_structures: int, n_molecules: int, seed: int) -> list:
    """Connected rigid-water clusters, deterministic per (seed, index).

    Every placed molecule sits 2.5 to 4.0 A (O to O) from some earlier one;
    no two oxygens come closer than 2.5 A and no two atoms of different
    molecules closer than 1.5 A.
    """
    if n_molecules < 1:
        raise DataError("n_molecules must be >= 1")
    if n_structures < 0:
        raise DataError("n_structures must be >= 0")
    out = []
    for i in range(n_structures):
        rng = np.random.default_rng([seed, i])
        out.append(_generate_cluster(n_molecules, rng, f"structure {i}"))
    return out


@dataclass(frozen=True)
class Dataset:
    """Labeled structures plus the basis defining the coefficient layout."""

    basis: AuxiliaryBasis
    entries: tuple  # ((Geometry, DensityCoefficients), ...)
    provenance: tuple  # nonempty history of generator seeds and transforms

    def __post_init__(self):
        entries = tuple(self.entries)
        provenance = tuple(self.provenance)
        if not provenance or any(
            (not isinstance(p, str)) or (not p) or ("\n" in p) for p in provenance
        ):
            raise DataError("provenance must be nonempty single-line strings")
        for geometry, coeffs in entries:
            if tuple(coeffs.species) != tuple(geometry.species):
                raise DataError("coefficient species do not match geometry")
            n = len(geometry)
            if n > 1:
                delta = geometry.positions[:, None] - geometry.positions[None, :]
                d = np.linalg.norm(delta, axis=-1) + np.eye(n) * 1e9
                if np.min(d) <= MIN_ATOM_DIST:
                    raise DataError(
                        f"atoms closer than {MIN_ATOM_DIST} A in dataset geometry"
                    )
            for s, vec in zip(geometry.species, coeffs.vectors):
                if vec.shape != (self.basis.dim_for(s),):
                    raise DataError(
                        f"coefficient vector for {s} has shape {vec.shape}, "
                        f"basis dim is {self.basis.dim_for(s)}"
                    )
                if not np.all(np.isfinite(vec)):
                    raise DataError("coefficients must be finite")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "provenance", provenance)

    def __len__(self) -> int:
        return len(self.entries)

    def geometries(self) -> list:
        return [g for g, _ in self.entries]


def _per_l_entry_indices(basis: AuxiliaryBasis, species: str) -> dict:
    """Flat coefficient indices of each angular momentum, per species."""
    spec = basis.spec_for(species)
    out: dict = {}
    for (mult, ir), sl in zip(spec.channels, slices(spec)):
        idx = np.arange(sl.offset, sl.offset + sl.length)
        out.setdefault(ir.l, []).append(idx)
    return {l: np.concatenate(chunks) for l, chunks in out.items()}


def _pooled_std(entries, index_maps) -> dict:
    pooled: dict = {}
    for geometry, coeffs in entries:
        for s, vec in zip(geometry.species, coeffs.vectors):
            for l, idx in index_maps[s].items():
                pooled.setdefault(l, []).append(vec[idx])
    return {l: float(np.std(np.concatenate(vs))) for l, vs in pooled.items()}


def _teacher_model(basis: AuxiliaryBasis, teacher_seed: int):
    config = ModelConfig(
        hidden_spec=hidden_config(2, 8),
        output_spec={s: basis.spec_for(s) for s in basis.species()},
        seed=teacher_seed,
    )
    return init_model(config)


@lru_cache(maxsize=8)
def _teacher_multipliers(basis: AuxiliaryBasis, teacher_seed: int) -> dict:
    """Per-l factors fixed by measuring the raw teacher on a held calibration set."""
    model = _teacher_model(basis, teacher_seed)
    cal = generate_clusters(_CALIBRATION_STRUCTURES, 3, _CALIBRATION_SEED)
    index_maps = {s: _per_l_entry_indices(basis, s) for s in basis.species()}
    raw = [(g, forward(model, g)) for g in cal]
    stds = _pooled_std(raw, index_maps)
    out = {}
    for l, sigma in stds.items():
        if sigma == 0.0:
            raise DataError(f"degenerate teacher: zero std on l={l}")
        out[l] = TEACHER_L0_STD * TEACHER_STD_DECAY ** (-l) / sigma
    return out


def teacher_targets(geometries, basis: AuxiliaryBasis, teacher_seed: int) -> Dataset:
    """Label geometries with the fixed teacher network.

    The teacher's raw coefficients are multiplied by per-l constants
    (calibrated once, independent of the input geometries) so the pooled
    stds follow 0.8 * 3^-l, and l=0 entries are shifted by +1 so scalar
    coefficients dominate in norm.  Both shapings commute with rotations,
    so labels stay exactly equivariant.
    """
    model = _teacher_model(basis, teacher_seed)
    multipliers = _teacher_multipliers(basis, teacher_seed)
    index_maps = {s: _per_l_entry_indices(basis, s) for s in basis.species()}
    entries = []
    for geometry in geometries:
        coeffs = forward(model, geometry)
        vectors = []
        for s, vec in zip(geometry.species, coeffs.vectors):
            shaped = np.array(vec, dtype=float)
            for l, idx in index_maps[s].items():
                shaped[idx] *= multipliers[l]
            shaped[index_maps[s][0]] += TEACHER_L0_SHIFT
            vectors.append(shaped)
        entries.append((geometry, DensityCoefficients(geometry.species, tuple(vectors))))
    return Dataset(
        basis=basis,
        entries=tuple(entries),
        provenance=(
            f"teacher-labels seed={teacher_seed} structures={len(entries)}",
        ),
    )


def truncate_dataset(ds: Dataset, lmax_o: int) -> Dataset:
    """Drop every basis shell and coefficient with l above lmax_o."""
    if lmax_o < 0:
        raise DataError("lmax_o must be >= 0")
    new_shells = []
    keep_masks = {}
    for species, shells in ds.basis.shells:
        kept = tuple(sh for sh in shells if sh.l <= lmax_o)
        if not kept:
            raise DataError(f"truncation at lmax_o={lmax_o} empties species {species}")
        new_shells.append((species, kept))
        mask = np.concatenate(
            [np.full(2 * sh.l + 1, sh.l <= lmax_o) for sh in shells]
        )
        keep_masks[species] = mask
    basis = AuxiliaryBasis(tuple(new_shells))
    entries = tuple(
        (
            geometry,
            DensityCoefficients(
                geometry.species,
                tuple(
                    vec[keep_masks[s]]
                    for s, vec in zip(geometry.species, coeffs.vectors)
                ),
            ),
        )
        for geometry, coeffs in ds.entries
    )
    return Dataset(
        basis=basis,
        entries=entries,
        provenance=ds.provenance + (f"truncate lmax_o={lmax_o}",),
    )


def scale_dataset(ds: Dataset) -> Dataset:
    """Rescale every l>0 channel to the pooled std of the l=0 channel.

    One std per l, pooled over m components, shells, atoms, species, and
    structures; the l=0 channel is untouched.
    """
    index_maps = {s: _per_l_entry_indices(ds.basis, s) for s in ds.basis.species()}
    stds = _pooled_std(ds.entries, index_maps)
    for l, sigma in sorted(stds.items()):
        if sigma == 0.0:
            raise DataError(f"cannot scale: zero std on l={l}")
    multipliers = {l: stds[0] / sigma for l, sigma in stds.items() if l > 0}
    entries = []
    for geometry, coeffs in ds.entries:
        vectors = []
        for s, vec in zip(geometry.species, coeffs.vectors):
            scaled = np.array(vec, dtype=float)
            for l, idx in index_maps[s].items():
                if l > 0:
                    scaled[idx] *= multipliers[l]
            vectors.append(scaled)
        entries.append((geometry, DensityCoefficients(geometry.species, tuple(vectors))))
    desc = " ".join(
        "l%d:%.6g" % (l, multipliers[l]) for l in sorted(multipliers)
    )
    return Dataset(
        basis=ds.basis,
        entries=tuple(entries),
        provenance=ds.provenance + (f"scale sigma0={stds[0]:.6g} {desc}".strip(),),
    )


def split(ds: Dataset, train_fraction: float, seed: int):
    """Seeded-permutation split into (train, test)."""
    if not 0.0 <= train_fraction <= 1.0:
        raise DataError("train_fraction must lie in [0, 1]")
    n = len(ds.entries)
    perm = np.random.default_rng(seed).permutation(n)
    k = int(train_fraction * n)

    def pick(idx, tag):
        return Dataset(
            basis=ds.basis,
            entries=tuple(ds.entries[i] for i in idx),
            provenance=ds.provenance
            + (f"split {tag} fraction={train_fraction:g} seed={seed}",),
        )

    return pick(perm[:k], "train"), pick(perm[k:], "test")


def save_dataset(ds: Dataset, path) -> None:
    """Line-oriented text, gzip-compressed when the path ends in .gz."""
    lines = ["eqdens-dataset v1"]
    for p in ds.provenance:
        lines.append(f"provenance {p}")
    shell_lines = [
        "%s %d %.17g" % (species, sh.l, sh.alpha)
        for species, shells in ds.basis.shells
        for sh in shells
    ]
    lines.append(f"basis {len(shell_lines)}")
    lines.extend(shell_lines)
    lines.append(f"structures {len(ds.entries)}")
    for geometry, coeffs in ds.entries:
        lines.append(f"structure {len(geometry)}")
        for s, pos in zip(geometry.species, geometry.positions):
            lines.append("atom %s %.17g %.17g %.17g" % (s, pos[0], pos[1], pos[2]))
        for i, vec in enumerate(coeffs.vectors):
            lines.append("coeff %d %s" % (i, " ".join("%.17g" % v for v in vec)))
    text = "\n".join(lines) + "\n"
    if str(path).endswith(".gz"):
        with gzip.open(path, "wt") as fh:
            fh.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _expect(condition, message):
    if not condition:
        raise DataError(message)


def load_dataset(path) -> Dataset:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    _expect(lines and lines[0] == "eqdens-dataset v1", f"{path}: not a v1 dataset")
    i = 1
    provenance = []
    while i < len(lines) and lines[i].startswith("provenance "):
        provenance.append(lines[i][len("provenance ") :])
        i += 1
    _expect(i < len(lines) and lines[i].startswith("basis "), f"{path}: missing basis block")
    n_shells = int(lines[i].split()[1])
    i += 1
    per_species: dict = {}
    for _ in range(n_shells):
        species, l_str, a_str = lines[i].split()
        l, alpha = int(l_str), float(a_str)
        per_species.setdefault(species, []).append(Shell(l, alpha, shell_norm(l, alpha)))
        i += 1
    basis = AuxiliaryBasis(tuple((s, tuple(shs)) for s, shs in per_species.items()))
    _expect(
        i < len(lines) and lines[i].startswith("structures "),
        f"{path}: missing structures count",
    )
    n_structures = int(lines[i].split()[1])
    i += 1
    entries = []
    for _ in range(n_structures):
        _expect(
            i < len(lines) and lines[i].startswith("structure "),
            f"{path}: missing structure header",
        )
        n_atoms = int(lines[i].split()[1])
        i += 1
        species, positions = [], []
        for _ in range(n_atoms):
            parts = lines[i].split()
            _expect(parts[0] == "atom" and len(parts) == 5, f"{path}: bad atom line")
            species.append(parts[1])
            positions.append([float(v) for v in parts[2:5]])
            i += 1
        geometry = Geometry(tuple(species), np.array(positions))
        vectors = []
        for a in range(n_atoms):
            parts = lines[i].split()
            _expect(
                parts[0] == "coeff" and int(parts[1]) == a,
                f"{path}: bad coefficient line for atom {a}",
            )
            vectors.append(np.array([float(v) for v in parts[2:]]))
            i += 1
        entries.append((geometry, DensityCoefficients(geometry.species, tuple(vectors))))
    return Dataset(basis=basis, entries=tuple(entries), provenance=tuple(provenance))
