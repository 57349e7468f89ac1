"""Gaussian density-fitting basis, grid evaluation, and error metrics.

The density is an atom-centered expansion: each shell contributes
N * r^l * Y_lm(direction) * exp(-alpha r^2) per m, where N makes the
function L2-normalized.  The solid-harmonic factor r^l keeps every basis
function smooth through its own nucleus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .irreps import Irrep, IrrepsSpec
from .so3 import solid_harmonics

# species the package supports; the order fixes the one-hot encoding
SPECIES = ("H", "O")

_CHUNK = 32768


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class DensityCoefficients:
    """Per-atom flat coefficient vectors in the species' shell layout."""

    species: tuple
    vectors: tuple

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "vectors", tuple(self.vectors))
        if len(self.species) != len(self.vectors):
            raise DensityError("one coefficient vector per atom required")


@dataclass(frozen=True)
class Shell:
    l: int
    alpha: float
    norm: float


def shell_norm(l: int, alpha: float) -> float:
    """L2 normalization of r^l Y_lm exp(-alpha r^2)."""
    return math.sqrt(2.0 * (2.0 * alpha) ** (l + 1.5) / math.gamma(l + 1.5))


@dataclass(frozen=True)
class AuxiliaryBasis:
    """Ordered per-species shell lists; shell order defines the coefficient layout."""

    shells: tuple  # ((species, (Shell, ...)), ...) sorted by species

    def __post_init__(self):
        pairs = self.shells
        if isinstance(pairs, dict):
            pairs = pairs.items()
        pairs = tuple(sorted((s, tuple(sh)) for s, sh in pairs))
        if not pairs:
            raise DensityError("basis has no species")
        for s, shs in pairs:
            if not shs:
                raise DensityError(f"species {s} has no shells")
            for sh in shs:
                if sh.alpha <= 0:
                    raise DensityError(f"exponent must be positive, got {sh.alpha}")
        object.__setattr__(self, "shells", pairs)

    def species(self):
        return tuple(s for s, _ in self.shells)

    def shells_for(self, species: str):
        for s, shs in self.shells:
            if s == species:
                return shs
        raise DensityError(f"species {species!r} not in basis")

    def spec_for(self, species: str) -> IrrepsSpec:
        """Irreps layout: consecutive same-l shells form one channel, parity (-1)^l."""
        channels = []
        for sh in self.shells_for(species):
            parity = 1 if sh.l % 2 == 0 else -1
            if channels and channels[-1][1] == Irrep(sh.l, parity):
                channels[-1] = (channels[-1][0] + 1, channels[-1][1])
            else:
                channels.append((1, Irrep(sh.l, parity)))
        return IrrepsSpec(tuple(channels))

    def dim_for(self, species: str) -> int:
        return sum(2 * sh.l + 1 for sh in self.shells_for(species))

    def lmax_for(self, species: str) -> int:
        return max(sh.l for sh in self.shells_for(species))

    def ls_present(self) -> tuple:
        return tuple(
            sorted({sh.l for _, shs in self.shells for sh in shs})
        )


def load_basis(text: str) -> AuxiliaryBasis:
    """Parse `species l exponent` lines; '#' starts a comment."""
    per_species: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DensityError(f"line {lineno}: expected 'species l exponent', got {raw!r}")
        species, l_str, a_str = parts
        if species not in SPECIES:
            raise DensityError(
                f"line {lineno}: unknown species {species!r}; supported: {SPECIES}"
            )
        try:
            l, alpha = int(l_str), float(a_str)
        except ValueError:
            raise DensityError(f"line {lineno}: bad numbers in {raw!r}") from None
        if l < 0:
            raise DensityError(f"line {lineno}: l must be >= 0")
        if alpha <= 0:
            raise DensityError(f"line {lineno}: exponent must be positive")
        per_species.setdefault(species, []).append(
            Shell(l, alpha, shell_norm(l, alpha))
        )
    if not per_species:
        raise DensityError("basis text defines no shells")
    return AuxiliaryBasis(tuple((s, tuple(shs)) for s, shs in per_species.items()))


def save_basis(basis: AuxiliaryBasis) -> str:
    lines = ["# species  l  exponent"]
    for species, shells in basis.shells:
        for sh in shells:
            lines.append("%s %d %.17g" % (species, sh.l, sh.alpha))
    return "\n".join(lines) + "\n"


def read_basis(path) -> AuxiliaryBasis:
    with open(path) as fh:
        return load_basis(fh.read())


def write_basis(basis: AuxiliaryBasis, path) -> None:
    with open(path, "w") as fh:
        fh.write(save_basis(basis))


def default_basis() -> AuxiliaryBasis:
    """The synthetic water auxiliary basis shipped with the package."""
    from importlib.resources import files

    return load_basis(files("eqdens").joinpath("assets/water-aux.basis").read_text())


@dataclass(frozen=True)
class Grid:
    origin: tuple
    spacing: float
    counts: tuple

    def __post_init__(self):
        if self.spacing <= 0:
            raise DensityError("grid spacing must be positive")
        if any(c < 1 for c in self.counts):
            raise DensityError("grid counts must be >= 1")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def num_points(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz

    def point_array(self) -> np.ndarray:
        axes = [
            self.origin[k] + self.spacing * np.arange(self.counts[k])
            for k in range(3)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.num_points,):
            raise DensityError(
                f"field needs {self.grid.num_points} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise DensityError("field values must be finite")
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(self.grid.spacing**3 * self.values.sum())


def make_grid(geometry, spacing: float, padding: float) -> Grid:
    """Axis-aligned box: nuclear bounding box grown by padding on each side."""
    if spacing <= 0:
        raise DensityError("spacing must be positive")
    lo = geometry.positions.min(axis=0) - padding
    hi = geometry.positions.max(axis=0) + padding
    counts = tuple(
        int(math.ceil((hi[k] - lo[k]) / spacing - 1e-9)) + 1 for k in range(3)
    )
    return Grid(origin=tuple(lo), spacing=spacing, counts=counts)


def _atom_layout(basis: AuxiliaryBasis, geometry, coeffs: DensityCoefficients):
    """Validate coefficient lengths against the basis; yield per-atom slices."""
    if tuple(coeffs.species) != tuple(geometry.species):
        raise DensityError("coefficients and geometry list different species")
    for species, vec in zip(coeffs.species, coeffs.vectors):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (basis.dim_for(species),):
            raise DensityError(
                f"coefficient vector for {species} has length {vec.size}, "
                f"basis expects {basis.dim_for(species)}"
            )
        yield species, vec


def _accumulate_channels(geometry, basis, coeffs, pts, lmax_all, per_l):
    """Add each atom's shell contributions on pts into per_l[l]."""
    for (species, vec), pos in zip(
        _atom_layout(basis, geometry, coeffs), geometry.positions
    ):
        rel = pts - pos
        r2 = np.einsum("pk,pk->p", rel, rel)
        blocks = solid_harmonics(min(lmax_all, basis.lmax_for(species)), rel)
        off = 0
        for sh in basis.shells_for(species):
            width = 2 * sh.l + 1
            c = vec[off : off + width]
            off += width
            if sh.l in per_l and np.any(c):
                radial = sh.norm * np.exp(-sh.alpha * r2)
                per_l[sh.l] += radial * (blocks[sh.l] @ c)


def evaluate_density(
    geometry, basis: AuxiliaryBasis, coeffs: DensityCoefficients, grid: Grid,
    lmask: int = None,
) -> ScalarField:
    """Pointwise density on the grid; lmask restricts to one angular channel."""
    ls = basis.ls_present() if lmask is None else (lmask,)
    if lmask is not None and lmask not in basis.ls_present():
        raise DensityError(f"l={lmask} not present in basis")
    values = np.zeros(grid.num_points)
    pts_all = grid.point_array()
    lmax_all = max(ls)
    for start in range(0, grid.num_points, _CHUNK):
        pts = pts_all[start : start + _CHUNK]
        per_l = {l: np.zeros(pts.shape[0]) for l in ls}
        _accumulate_channels(geometry, basis, coeffs, pts, lmax_all, per_l)
        for l in ls:
            values[start : start + pts.shape[0]] += per_l[l]
    return ScalarField(grid, values)


def epsilon_total(ref_field: ScalarField, pred_field: ScalarField) -> float:
    """Integrated absolute density error, percent of the reference integral."""
    if ref_field.grid != pred_field.grid:
        raise DensityError("fields live on different grids")
    h3 = ref_field.grid.spacing**3
    denom = h3 * ref_field.values.sum()
    if denom <= 0:
        raise DensityError("reference density integral must be positive")
    return float(100.0 * h3 * np.abs(ref_field.values - pred_field.values).sum() / denom)


def epsilon_l(
    geometry, basis, ref_coeffs, pred_coeffs, grid: Grid, l: int
) -> float:
    """Per-channel error: channel-l field difference over the FULL reference."""
    if l not in basis.ls_present():
        raise DensityError(f"l={l} not present in basis")
    ref_l = evaluate_density(geometry, basis, ref_coeffs, grid, lmask=l)
    pred_l = evaluate_density(geometry, basis, pred_coeffs, grid, lmask=l)
    ref_full = evaluate_density(geometry, basis, ref_coeffs, grid)
    h3 = grid.spacing**3
    denom = h3 * ref_full.values.sum()
    if denom <= 0:
        raise DensityError("reference density integral must be positive")
    return float(100.0 * h3 * np.abs(ref_l.values - pred_l.values).sum() / denom)


def epsilon_report(geometry, basis, ref_coeffs, pred_coeffs, grid: Grid):
    """(epsilon_total, {l: epsilon_l}) in one streaming sweep over the grid."""
    ls = basis.ls_present()
    lmax_all = max(ls)
    absdiff = {l: 0.0 for l in ls}
    absdiff_total = 0.0
    ref_sum = 0.0
    pts_all = grid.point_array()
    for start in range(0, grid.num_points, _CHUNK):
        pts = pts_all[start : start + _CHUNK]
        ref_l = {l: np.zeros(pts.shape[0]) for l in ls}
        pred_l = {l: np.zeros(pts.shape[0]) for l in ls}
        _accumulate_channels(geometry, basis, ref_coeffs, pts, lmax_all, ref_l)
        _accumulate_channels(geometry, basis, pred_coeffs, pts, lmax_all, pred_l)
        ref_tot = sum(ref_l.values())
        pred_tot = sum(pred_l.values())
        ref_sum += ref_tot.sum()
        absdiff_total += np.abs(ref_tot - pred_tot).sum()
        for l in ls:
            absdiff[l] += np.abs(ref_l[l] - pred_l[l]).sum()
    if ref_sum <= 0:
        raise DensityError("reference density integral must be positive")
    eps_total = 100.0 * absdiff_total / ref_sum
    eps_per_l = {l: 100.0 * absdiff[l] / ref_sum for l in ls}
    return float(eps_total), {l: float(v) for l, v in eps_per_l.items()}
