"""Bookkeeping for O(3) irreducible representations.

An irrep is labelled by its angular momentum l (dimension 2l+1) and a parity
(+1 even / -1 odd, written ``e`` / ``o``).  An :class:`IrrepsSpec` is an
ordered list of (multiplicity, irrep) channels and fixes the flat memory
layout used everywhere in this package: channels appear in written order,
each channel stores ``multiplicity`` contiguous blocks of 2l+1 components,
with m running from -l to l inside a block.
"""

from __future__ import annotations

from dataclasses import dataclass

EVEN = 1
ODD = -1

_PARITY_CHAR = {EVEN: "e", ODD: "o"}
_CHAR_PARITY = {"e": EVEN, "o": ODD}


class IrrepsError(ValueError):
    """Malformed irreps text or an invalid spec operation."""


@dataclass(frozen=True)
class Irrep:
    """A single O(3) irrep: angular momentum ``l`` and parity (+1 or -1)."""

    l: int
    parity: int

    def __post_init__(self):
        if not isinstance(self.l, int) or self.l < 0:
            raise IrrepsError(f"irrep l must be a nonnegative integer, got {self.l!r}")
        if self.parity not in (EVEN, ODD):
            raise IrrepsError(f"irrep parity must be +1 or -1, got {self.parity!r}")

    @property
    def dim(self) -> int:
        return 2 * self.l + 1

    def __str__(self) -> str:
        return f"{self.l}{_PARITY_CHAR[self.parity]}"

    def __repr__(self) -> str:
        return f"Irrep({self})"


@dataclass(frozen=True)
class IrrepsSpec:
    """Ordered (multiplicity, Irrep) channels; order defines the flat layout."""

    channels: tuple[tuple[int, Irrep], ...]

    def __post_init__(self):
        for mult, ir in self.channels:
            if not isinstance(mult, int) or mult < 1:
                raise IrrepsError(f"channel multiplicity must be >= 1, got {mult!r}")
            if not isinstance(ir, Irrep):
                raise IrrepsError(f"channel irrep must be an Irrep, got {ir!r}")

    def __iter__(self):
        return iter(self.channels)

    def __len__(self) -> int:
        return len(self.channels)

    def __str__(self) -> str:
        return format_irreps(self)

    def __repr__(self) -> str:
        return f"IrrepsSpec({format_irreps(self)!r})"

    @property
    def dim(self) -> int:
        return dim(self)

    @property
    def lmax(self) -> int:
        if not self.channels:
            raise IrrepsError("empty spec has no lmax")
        return max(ir.l for _, ir in self.channels)


@dataclass(frozen=True)
class ChannelSlice:
    """Location of one channel inside the flat layout."""

    channel_index: int
    offset: int
    length: int


def parse_irreps(text: str) -> IrrepsSpec:
    """Parse ``"12x0e+5x1o+..."`` into an IrrepsSpec.

    Grammar: ``term ("+" term)*`` with ``term = <mult> "x" <l> <e|o>``.
    Whitespace around tokens is tolerated; channels are kept in written
    order and never merged.
    """
    if not isinstance(text, str):
        raise IrrepsError(f"expected a string, got {type(text).__name__}")
    stripped = text.strip()
    if not stripped:
        raise IrrepsError("empty irreps string")
    channels = []
    for raw_term in stripped.split("+"):
        term = raw_term.strip().replace(" ", "")
        if not term:
            raise IrrepsError(f"empty term in irreps string {text!r}")
        head, sep, tail = term.partition("x")
        if not sep:
            raise IrrepsError(f"malformed term {raw_term.strip()!r}: missing 'x'")
        if not head.isdigit():
            raise IrrepsError(f"malformed term {raw_term.strip()!r}: bad multiplicity {head!r}")
        mult = int(head)
        if mult == 0:
            raise IrrepsError(f"malformed term {raw_term.strip()!r}: zero multiplicity")
        if len(tail) < 2 or tail[-1] not in _CHAR_PARITY:
            raise IrrepsError(f"malformed term {raw_term.strip()!r}: expected '<l>e' or '<l>o'")
        l_text = tail[:-1]
        if not l_text.isdigit():
            raise IrrepsError(f"malformed term {raw_term.strip()!r}: bad angular momentum {l_text!r}")
        channels.append((mult, Irrep(int(l_text), _CHAR_PARITY[tail[-1]])))
    return IrrepsSpec(tuple(channels))


def format_irreps(spec: IrrepsSpec) -> str:
    """Canonical text form: lowercase x, e/o parities, '+' separators, no spaces."""
    return "+".join(f"{mult}x{ir}" for mult, ir in spec.channels)


def dim(spec: IrrepsSpec) -> int:
    """Total flat dimension, sum of multiplicity*(2l+1) over channels."""
    return sum(mult * ir.dim for mult, ir in spec.channels)


def slices(spec: IrrepsSpec) -> list[ChannelSlice]:
    """Contiguous per-channel slices covering [0, dim) in channel order."""
    out = []
    offset = 0
    for index, (mult, ir) in enumerate(spec.channels):
        length = mult * ir.dim
        out.append(ChannelSlice(index, offset, length))
        offset += length
    return out


def truncate_spec(spec: IrrepsSpec, lmax: int) -> IrrepsSpec:
    """Drop channels with l > lmax, preserving the order of survivors."""
    if lmax < 0:
        raise IrrepsError(f"lmax must be >= 0, got {lmax}")
    kept = tuple((mult, ir) for mult, ir in spec.channels if ir.l <= lmax)
    if not kept:
        raise IrrepsError(f"truncating {format_irreps(spec)!r} at lmax={lmax} leaves no channels")
    return IrrepsSpec(kept)


def tensor_selection(a: Irrep, b: Irrep) -> list[Irrep]:
    """Irreps in the tensor product a (x) b: |l_a-l_b| .. l_a+l_b, parity multiplied."""
    parity = a.parity * b.parity
    return [Irrep(l, parity) for l in range(abs(a.l - b.l), a.l + b.l + 1)]


def hidden_config(l_h: int, base_scalar_mult: int) -> IrrepsSpec:
    """Hidden-layer spec built by migrating scalar features into l>0 channels.

    Starts from (5*N_s)x0e + (5*N_s)x0o.  For each l from 1 to ``l_h``,
    floor(N_s/(2l+1)) copies of both parities of l are added and the
    corresponding number of scalar features (floor(N_s/(2l+1))*(2l+1) per
    parity) is removed, keeping the total dimension constant.  An l whose
    floor division is zero contributes nothing.
    """
    if l_h < 0:
        raise IrrepsError(f"l_h must be >= 0, got {l_h}")
    if base_scalar_mult < 1:
        raise IrrepsError(f"base scalar multiplicity must be >= 1, got {base_scalar_mult}")
    scalar_mult = 5 * base_scalar_mult
    migrated = []
    for l in range(1, l_h + 1):
        n_l = base_scalar_mult // (2 * l + 1)
        if n_l == 0:
            continue
        removed = n_l * (2 * l + 1)
        if scalar_mult - removed <= 0:
            raise IrrepsError(
                f"hidden_config(l_h={l_h}, N_s={base_scalar_mult}): scalar multiplicity "
                f"would drop to {scalar_mult - removed} at l={l}"
            )
        scalar_mult -= removed
        migrated.append((n_l, l))
    channels = [(scalar_mult, Irrep(0, EVEN)), (scalar_mult, Irrep(0, ODD))]
    for n_l, l in migrated:
        channels.append((n_l, Irrep(l, EVEN)))
        channels.append((n_l, Irrep(l, ODD)))
    return IrrepsSpec(tuple(channels))
