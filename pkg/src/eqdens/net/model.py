"""Euclidean-equivariant message-passing network.

Features live on atoms as flat irrep vectors (module ``irreps`` layout).
Each hidden layer is a tensor-product graph convolution with learned radial
weights, followed by a gated nonlinearity; the output head is a per-species
convolution emitting that species' coefficient layout.  All parameters sit
in one flat, deterministically ordered registry so that the optimizer, the
checkpoint format, and ``param_count`` agree about the layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..irreps import EVEN, Irrep, IrrepsSpec, format_irreps, parse_irreps, slices
from ..so3 import Rotation, clebsch_gordan, solid_harmonics, wigner_d
from ..density import DensityCoefficients
from . import autodiff as ad
from .graph import SPECIES, Geometry, Graph, build_graph


class ModelError(ValueError):
    pass


def _as_spec(spec) -> IrrepsSpec:
    return parse_irreps(spec) if isinstance(spec, str) else spec


INPUT_SPEC = parse_irreps(f"{len(SPECIES)}x0e")

RADIAL_ENVELOPE_POWER = 6


def radial_basis(distance, n: int, cutoff: float) -> np.ndarray:
    """n smooth radial features on (0, cutoff], all vanishing at the cutoff.

    sin(k pi x)/x bases under a polynomial envelope with two vanishing
    derivatives at x=1, so messages switch off smoothly as atoms leave the
    neighborhood.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ModelError("distance must be positive")
    if np.any(d > cutoff * (1 + 1e-12)):
        raise ModelError(f"distance beyond cutoff {cutoff}")
    x = np.minimum(d / cutoff, 1.0)[..., None]
    p = RADIAL_ENVELOPE_POWER
    env = (
        1.0
        - (p + 1) * (p + 2) / 2 * x**p
        + p * (p + 2) * x ** (p + 1)
        - p * (p + 1) / 2 * x ** (p + 2)
    )
    k = np.arange(1, n + 1)
    return env * np.sin(k * math.pi * x) / x


@dataclass
class FeatureTensor:
    """Per-node flat irrep vector block; values may be a tape Var."""

    spec: IrrepsSpec
    values: object

    def __post_init__(self):
        dim = ad.value(self.values).shape[-1]
        if dim != self.spec.dim:
            raise ModelError(
                f"values width {dim} does not match spec {format_irreps(self.spec)}"
                f" (dim {self.spec.dim})"
            )


@dataclass(frozen=True)
class ModelConfig:
    hidden_spec: IrrepsSpec
    output_spec: tuple  # ((species, IrrepsSpec), ...), sorted by species
    num_layers: int = 3
    lmax_sh: int = -1  # -1: max l over hidden and output specs
    cutoff: float = 3.5
    radial_basis_size: int = 8
    radial_hidden_width: int = 16
    seed: int = 0
    self_connection: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_spec", _as_spec(self.hidden_spec))
        pairs = self.output_spec
        if isinstance(pairs, dict):
            pairs = pairs.items()
        pairs = tuple(sorted((s, _as_spec(sp)) for s, sp in pairs))
        if not pairs:
            raise ModelError("output_spec must name at least one species")
        for s, _ in pairs:
            if s not in SPECIES:
                raise ModelError(f"unknown species {s!r} in output_spec")
        object.__setattr__(self, "output_spec", pairs)
        if self.num_layers < 1:
            raise ModelError("num_layers must be >= 1")
        if self.cutoff <= 0:
            raise ModelError("cutoff must be positive")
        if self.radial_basis_size < 1 or self.radial_hidden_width < 1:
            raise ModelError("radial network sizes must be >= 1")
        seen_nonscalar = False
        for _, ir in self.hidden_spec:
            if ir.l > 0:
                seen_nonscalar = True
            elif seen_nonscalar:
                raise ModelError("hidden_spec must list scalar channels first")
        if self.lmax_sh < 0:
            lmax = max(
                [self.hidden_spec.lmax] + [sp.lmax for _, sp in pairs]
            )
            object.__setattr__(self, "lmax_sh", lmax)

    def output_spec_for(self, species: str) -> IrrepsSpec:
        for s, sp in self.output_spec:
            if s == species:
                return sp
        raise ModelError(f"no output spec for species {species!r}")


def gated_spec(spec: IrrepsSpec) -> IrrepsSpec:
    """The conv output layout feeding gate(): scalars, gate scalars, rest."""
    scalar = [ch for ch in spec.channels if ch[1].l == 0]
    nonscalar = [ch for ch in spec.channels if ch[1].l > 0]
    n_gates = sum(mult for mult, _ in nonscalar)
    channels = list(scalar)
    if n_gates:
        channels.append((n_gates, Irrep(0, EVEN)))
    channels.extend(nonscalar)
    return IrrepsSpec(tuple(channels))


@dataclass(frozen=True)
class Path:
    """One tensor-product route (input channel x Y_l2 -> output channel)."""

    in_channel: int
    l1: int
    l2: int
    l3: int
    radial_column: int


@dataclass(frozen=True)
class ConvDescriptor:
    """Static shape information for one convolution layer."""

    name: str
    in_spec: IrrepsSpec
    out_spec: IrrepsSpec
    lmax_sh: int
    paths: tuple  # tuple over out channels of tuples of Path
    self_sources: tuple  # tuple over out channels of tuples of in-channel idx
    per_species_self: bool
    self_connection: bool

    @property
    def n_paths(self) -> int:
        return sum(len(p) for p in self.paths)

    def concat_mult(self, out_channel: int) -> int:
        return sum(
            self.in_spec.channels[p.in_channel][0]
            for p in self.paths[out_channel]
        )

    def self_mult(self, out_channel: int) -> int:
        return sum(
            self.in_spec.channels[ci][0] for ci in self.self_sources[out_channel]
        )


def conv_descriptor(
    name: str,
    in_spec: IrrepsSpec,
    out_spec: IrrepsSpec,
    lmax_sh: int,
    *,
    per_species_self: bool,
    self_connection: bool,
    require_paths: bool,
) -> ConvDescriptor:
    paths = []
    self_sources = []
    col = 0
    for mult, ir_out in out_spec.channels:
        chan_paths = []
        for ci, (_, ir_in) in enumerate(in_spec.channels):
            for l2 in range(lmax_sh + 1):
                if not abs(ir_in.l - l2) <= ir_out.l <= ir_in.l + l2:
                    continue
                if ir_out.parity != ir_in.parity * (-1) ** l2:
                    continue
                chan_paths.append(Path(ci, ir_in.l, l2, ir_out.l, col))
                col += 1
        if require_paths and not chan_paths:
            raise ModelError(
                f"{name}: no tensor path reaches output channel "
                f"{mult}x{ir_out}; raise lmax_sh or change the hidden spec"
            )
        paths.append(tuple(chan_paths))
        self_sources.append(
            tuple(
                ci
                for ci, (_, ir_in) in enumerate(in_spec.channels)
                if ir_in == ir_out
            )
        )
    return ConvDescriptor(
        name=name,
        in_spec=in_spec,
        out_spec=out_spec,
        lmax_sh=lmax_sh,
        paths=tuple(paths),
        self_sources=tuple(self_sources),
        per_species_self=per_species_self,
        self_connection=self_connection,
    )


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    shape: tuple
    fan_in: int
    init: str  # "normal" | "zeros"


def _conv_registry(desc: ConvDescriptor, config: ModelConfig):
    rb, width = config.radial_basis_size, config.radial_hidden_width
    if desc.n_paths:
        yield RegistryEntry(f"{desc.name}.radial.w1", (rb, width), rb, "normal")
        yield RegistryEntry(
            f"{desc.name}.radial.w2", (width, desc.n_paths), width, "normal"
        )
    for co, (mult, ir) in enumerate(desc.out_spec.channels):
        u = desc.concat_mult(co)
        if u:
            yield RegistryEntry(f"{desc.name}.mix.{co}", (u, mult), u, "normal")
        if desc.self_connection:
            v = desc.self_mult(co)
            if v:
                shape = (
                    (len(SPECIES), v, mult) if desc.per_species_self else (v, mult)
                )
                yield RegistryEntry(f"{desc.name}.self.{co}", shape, v, "normal")
        if ir.l == 0 and ir.parity == EVEN:
            yield RegistryEntry(f"{desc.name}.bias.{co}", (mult,), 1, "zeros")


@dataclass(frozen=True)
class ModelLayout:
    config: ModelConfig
    hidden: tuple  # ConvDescriptor per hidden layer
    outputs: tuple  # (species, ConvDescriptor)
    registry: tuple  # RegistryEntry


@lru_cache(maxsize=32)
def model_layout(config: ModelConfig) -> ModelLayout:
    hidden = []
    in_spec = INPUT_SPEC
    conv_out = gated_spec(config.hidden_spec)
    for k in range(config.num_layers):
        hidden.append(
            conv_descriptor(
                f"layer{k}",
                in_spec,
                conv_out,
                config.lmax_sh,
                per_species_self=True,
                self_connection=config.self_connection,
                require_paths=False,
            )
        )
        in_spec = config.hidden_spec
    outputs = tuple(
        (
            species,
            conv_descriptor(
                f"out.{species}",
                config.hidden_spec,
                ospec,
                config.lmax_sh,
                per_species_self=False,
                self_connection=config.self_connection,
                require_paths=True,
            ),
        )
        for species, ospec in config.output_spec
    )
    registry = []
    for desc in hidden:
        registry.extend(_conv_registry(desc, config))
    for _, desc in outputs:
        registry.extend(_conv_registry(desc, config))
    return ModelLayout(config, tuple(hidden), outputs, tuple(registry))


def param_count(config: ModelConfig) -> int:
    """Number of learnable scalars; pure arithmetic, no allocation."""
    return sum(int(np.prod(e.shape)) for e in model_layout(config).registry)


@dataclass
class Model:
    config: ModelConfig
    params: dict  # registry name -> ndarray

    @property
    def layout(self) -> ModelLayout:
        return model_layout(self.config)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.params[e.name].ravel() for e in self.layout.registry]
        )

    @staticmethod
    def from_vector(config: ModelConfig, vec: np.ndarray) -> "Model":
        layout = model_layout(config)
        expected = sum(int(np.prod(e.shape)) for e in layout.registry)
        if vec.shape != (expected,):
            raise ModelError(f"parameter vector must have shape ({expected},)")
        params = {}
        pos = 0
        for e in layout.registry:
            size = int(np.prod(e.shape))
            params[e.name] = vec[pos : pos + size].reshape(e.shape).copy()
            pos += size
        return Model(config, params)


def init_model(config: ModelConfig) -> Model:
    """Seeded init: N(0,1)/sqrt(fan-in) weights, zero biases, registry order."""
    rng = np.random.default_rng(config.seed)
    params = {}
    for e in model_layout(config).registry:
        if e.init == "zeros":
            params[e.name] = np.zeros(e.shape)
        else:
            params[e.name] = rng.standard_normal(e.shape) / math.sqrt(e.fan_in)
    return Model(config, params)


@dataclass
class LayerWeights:
    desc: ConvDescriptor
    params: dict  # full parameter mapping; keys are registry names


@dataclass
class EdgeBundle:
    """Per-edge tensors reused across layers (and cached across epochs).

    sh[l] is Y_l of the edge direction, prescaled by 1/sqrt(mean degree) so
    that merging bundles of different structures stays exact.
    """

    sh: list
    rb: np.ndarray


def edge_bundle(graph: Graph, lmax_sh: int, n_basis: int) -> EdgeBundle:
    if graph.num_edges:
        unit = graph.disp / graph.dist[:, None]
        sh = solid_harmonics(lmax_sh, unit)
        scale = 1.0 / math.sqrt(graph.num_edges / graph.num_nodes)
        sh = [block * scale for block in sh]
        rb = radial_basis(graph.dist, n_basis, graph.cutoff)
    else:
        sh = [np.zeros((0, 2 * l + 1)) for l in range(lmax_sh + 1)]
        rb = np.zeros((0, n_basis))
    return EdgeBundle(sh=sh, rb=rb)


def merge_graphs(graphs) -> Graph:
    cutoffs = {g.cutoff for g in graphs}
    if len(cutoffs) != 1:
        raise ModelError("cannot merge graphs with different cutoffs")
    offsets = np.cumsum([0] + [g.num_nodes for g in graphs[:-1]])
    return Graph(
        species_onehot=np.concatenate([g.species_onehot for g in graphs]),
        positions=np.concatenate([g.positions for g in graphs]),
        recv=np.concatenate([g.recv + o for g, o in zip(graphs, offsets)]),
        send=np.concatenate([g.send + o for g, o in zip(graphs, offsets)]),
        disp=np.concatenate([g.disp for g in graphs]),
        dist=np.concatenate([g.dist for g in graphs]),
        cutoff=cutoffs.pop(),
    )


def merge_bundles(bundles) -> EdgeBundle:
    lmax = len(bundles[0].sh) - 1
    return EdgeBundle(
        sh=[np.concatenate([b.sh[l] for b in bundles]) for l in range(lmax + 1)],
        rb=np.concatenate([b.rb for b in bundles]),
    )


def convolution(
    features: FeatureTensor,
    graph: Graph,
    layer_weights: LayerWeights,
    bundle: EdgeBundle = None,
) -> FeatureTensor:
    """Tensor-product message passing followed by the per-channel linear mix.

    For each output channel: messages from every allowed (input channel,
    Y_l2) path are CG-coupled per edge, weighted by the learned radial
    scalar for that path, summed onto receivers, concatenated over paths,
    and linearly mixed down to the channel multiplicity.  A per-species
    self-connection and (for even scalars) a bias are added when configured.
    """
    desc = layer_weights.desc
    params = layer_weights.params
    if features.spec != desc.in_spec:
        raise ModelError(
            f"feature spec {format_irreps(features.spec)} does not match layer "
            f"input spec {format_irreps(desc.in_spec)}"
        )
    if bundle is None:
        bundle = edge_bundle(graph, desc.lmax_sh, params[f"{desc.name}.radial.w1"].shape[0] if desc.n_paths else 1)
    x = features.values
    n = graph.num_nodes
    in_slices = slices(desc.in_spec)

    radial = None
    if desc.n_paths:
        hidden = ad.tanh(ad.einsum("eb,bh->eh", bundle.rb, params[f"{desc.name}.radial.w1"]))
        radial = ad.einsum("eh,hp->ep", hidden, params[f"{desc.name}.radial.w2"])

    sent_blocks = {}
    if graph.num_edges:
        x_send = ad.gather(x, graph.send)
        for co_paths in desc.paths:
            for p in co_paths:
                if p.in_channel not in sent_blocks:
                    sl = in_slices[p.in_channel]
                    mult = desc.in_spec.channels[p.in_channel][0]
                    block = ad.narrow(x_send, 1, sl.offset, sl.length)
                    sent_blocks[p.in_channel] = ad.reshape(
                        block, (graph.num_edges, mult, 2 * p.l1 + 1)
                    )

    onehot = graph.species_onehot
    out_parts = []
    for co, (mult, ir) in enumerate(desc.out_spec.channels):
        k = ir.dim
        term = None

        if desc.paths[co] and graph.num_edges:
            msgs = []
            for p in desc.paths[co]:
                rcol = ad.reshape(
                    ad.narrow(radial, 1, p.radial_column, 1),
                    (graph.num_edges, 1, 1),
                )
                cg = clebsch_gordan(p.l1, p.l2, p.l3).values
                # plain per-edge Y x CG tensor; only the two Var factors
                # (features, radial weight) enter the tape
                ycg = np.einsum("en,mnk->emk", bundle.sh[p.l2], cg)
                raw = ad.einsum("eum,emk->euk", sent_blocks[p.in_channel], ycg)
                msgs.append(ad.mul(raw, rcol))
            stacked = msgs[0] if len(msgs) == 1 else ad.concat(msgs, axis=1)
            pooled = ad.segment_sum(stacked, graph.recv, n)
            term = ad.einsum("nuk,uw->nwk", pooled, params[f"{desc.name}.mix.{co}"])

        if desc.self_connection and desc.self_sources[co]:
            blocks = []
            for ci in desc.self_sources[co]:
                sl = in_slices[ci]
                v = desc.in_spec.channels[ci][0]
                blocks.append(
                    ad.reshape(ad.narrow(x, 1, sl.offset, sl.length), (n, v, k))
                )
            stacked = blocks[0] if len(blocks) == 1 else ad.concat(blocks, axis=1)
            w = params[f"{desc.name}.self.{co}"]
            if desc.per_species_self:
                w_node = ad.einsum("ns,svw->nvw", onehot, w)
                sc = ad.einsum("nvk,nvw->nwk", stacked, w_node)
            else:
                sc = ad.einsum("nvk,vw->nwk", stacked, w)
            term = sc if term is None else ad.add(term, sc)

        if ir.l == 0 and ir.parity == EVEN:
            bias = ad.reshape(params[f"{desc.name}.bias.{co}"], (1, mult, 1))
            term = bias if term is None else ad.add(term, bias)

        if term is None:
            out_parts.append(np.zeros((n, mult * k)))
        else:
            out_parts.append(ad.reshape(term, (n, mult * k)))
    return FeatureTensor(desc.out_spec, ad.concat(out_parts, axis=1))


def gate(features: FeatureTensor) -> FeatureTensor:
    """Consume the gate scalars: tanh on l=0 channels, sigmoid gates on the rest.

    Expects the gated_spec layout: scalar channels, then one even-scalar
    gate channel whose multiplicity is the total non-scalar multiplicity,
    then the non-scalar channels.
    """
    spec = features.spec
    channels = spec.channels
    first_ns = next(
        (i for i, (_, ir) in enumerate(channels) if ir.l > 0), len(channels)
    )
    if first_ns == len(channels):
        return FeatureTensor(spec, ad.tanh(features.values))
    nonscalar = channels[first_ns:]
    if any(ir.l == 0 for _, ir in nonscalar):
        raise ModelError("gate expects all scalar channels before non-scalar ones")
    n_gates = sum(mult for mult, _ in nonscalar)
    gate_ch = channels[first_ns - 1]
    if first_ns == 0 or gate_ch != (n_gates, Irrep(0, EVEN)):
        raise ModelError(
            f"missing gate scalars: expected a {n_gates}x0e channel before the "
            "non-scalar block"
        )
    spec_slices = slices(spec)
    x = features.values
    n = ad.value(x).shape[0]

    scalar_width = spec_slices[first_ns - 1].offset
    parts = []
    if scalar_width:
        parts.append(ad.tanh(ad.narrow(x, 1, 0, scalar_width)))
    gate_sl = spec_slices[first_ns - 1]
    gates = ad.sigmoid(ad.narrow(x, 1, gate_sl.offset, gate_sl.length))
    used = 0
    for ch_index, (mult, ir) in enumerate(nonscalar, start=first_ns):
        sl = spec_slices[ch_index]
        block = ad.reshape(ad.narrow(x, 1, sl.offset, sl.length), (n, mult, ir.dim))
        g = ad.reshape(ad.narrow(gates, 1, used, mult), (n, mult, 1))
        used += mult
        parts.append(ad.reshape(ad.mul(block, g), (n, mult * ir.dim)))
    out_spec = IrrepsSpec(channels[: first_ns - 1] + nonscalar)
    return FeatureTensor(out_spec, ad.concat(parts, axis=1))


def _apply(params: dict, layout: ModelLayout, graph: Graph, bundle: EdgeBundle):
    """Run all layers; returns per-species output matrices and hidden states."""
    x = FeatureTensor(INPUT_SPEC, graph.species_onehot)
    hidden_states = []
    for desc in layout.hidden:
        x = convolution(x, graph, LayerWeights(desc, params), bundle)
        x = gate(x)
        hidden_states.append(x)
    outputs = {}
    for species, desc in layout.outputs:
        outputs[species] = convolution(
            x, graph, LayerWeights(desc, params), bundle
        ).values
    return outputs, hidden_states


def prepare(model_or_config, geometry: Geometry):
    """Graph + edge bundle for one structure (cacheable across epochs)."""
    config = getattr(model_or_config, "config", model_or_config)
    graph = build_graph(geometry, config.cutoff)
    return graph, edge_bundle(graph, config.lmax_sh, config.radial_basis_size)


def forward(
    model: Model, geometry: Geometry, prepared=None, with_hidden: bool = False
):
    """Per-atom density coefficients in the species' output layout."""
    graph, bundle = prepared if prepared is not None else prepare(model, geometry)
    outputs, hidden_states = _apply(model.params, model.layout, graph, bundle)
    # each species head was evaluated on every node, so an atom's vector is
    # simply its node row in that species' output matrix
    vectors = tuple(
        outputs[s][i] for i, s in enumerate(geometry.species)
    )
    coeffs = DensityCoefficients(geometry.species, vectors)
    if with_hidden:
        return coeffs, hidden_states
    return coeffs


def loss_mse(pred: DensityCoefficients, target: DensityCoefficients):
    """Mean squared difference over every coefficient entry."""
    if tuple(pred.species) != tuple(target.species):
        raise ModelError("coefficient layouts differ (species sequences)")
    total = None
    count = 0
    for pv, tv in zip(pred.vectors, target.vectors):
        pval, tval = ad.value(pv), ad.value(tv)
        if pval.shape != tval.shape:
            raise ModelError("coefficient layouts differ (vector lengths)")
        d = ad.sub(pv, tv)
        sse = ad.sum_all(ad.mul(d, d))
        total = sse if total is None else ad.add(total, sse)
        count += pval.size
    return ad.mul(total, 1.0 / count)


def _union_forward(params, layout, batch, prepared_list):
    """One fused pass over a batch; returns the batch-mean structure loss."""
    graphs = [p[0] for p in prepared_list]
    union_graph = merge_graphs(graphs)
    union_bundle = merge_bundles([p[1] for p in prepared_list])
    outputs, _ = _apply(params, layout, union_graph, union_bundle)

    entries = np.zeros(len(batch))
    targets = {s: [] for s in SPECIES}
    struct_of = {s: [] for s in SPECIES}
    rows_of = {s: [] for s in SPECIES}
    # union node order is structure order, atoms in structure order
    node = 0
    for i, (geo, coeffs) in enumerate(batch):
        for a in range(len(geo)):
            s = geo.species[a]
            targets[s].append(ad.value(coeffs.vectors[a]))
            struct_of[s].append(i)
            rows_of[s].append(node)
            entries[i] += ad.value(coeffs.vectors[a]).size
            node += 1

    per_struct_sse = None
    for s in SPECIES:
        if not rows_of[s]:
            continue
        rows = np.asarray(rows_of[s])
        pred = ad.gather(outputs[s], rows)
        tgt = np.stack(targets[s])
        d = ad.sub(pred, tgt)
        row_sse = ad.einsum("nd,nd->n", d, d)
        sse = ad.segment_sum(
            ad.reshape(row_sse, (len(rows_of[s]), 1)),
            np.asarray(struct_of[s]),
            len(batch),
        )
        per_struct_sse = sse if per_struct_sse is None else ad.add(per_struct_sse, sse)
    per_struct_mse = ad.mul(per_struct_sse, (1.0 / entries)[:, None])
    return ad.mean_all(per_struct_mse)


def loss_and_gradient(model: Model, batch, prepared=None):
    """Batch-mean MSE and its gradient as a flat registry-ordered vector."""
    if not batch:
        raise ModelError("batch must be nonempty")
    layout = model.layout
    if prepared is None:
        prepared = [prepare(model, geo) for geo, _ in batch]
    var_params = {name: ad.Var(arr) for name, arr in model.params.items()}
    loss = _union_forward(var_params, layout, batch, prepared)
    ad.backward(loss)
    grads = []
    for e in layout.registry:
        v = var_params[e.name]
        grads.append(
            (v.grad if v.grad is not None else np.zeros(e.shape)).ravel()
        )
    return float(ad.value(loss)), np.concatenate(grads)


def gradient(model: Model, batch, prepared=None) -> np.ndarray:
    return loss_and_gradient(model, batch, prepared)[1]


def channel_norms(features: FeatureTensor) -> dict:
    """Mean squared block norm per l, divided by 2l+1 (rotation invariant)."""
    vals = ad.value(features.values)
    sums = {}
    counts = {}
    for (mult, ir), sl in zip(features.spec.channels, slices(features.spec)):
        block = vals[:, sl.offset : sl.offset + sl.length].reshape(
            vals.shape[0], mult, ir.dim
        )
        sums[ir.l] = sums.get(ir.l, 0.0) + float(np.sum(block * block))
        counts[ir.l] = counts.get(ir.l, 0) + vals.shape[0] * mult
    return {
        l: sums[l] / counts[l] / (2 * l + 1) for l in sorted(sums)
    }


def spec_wigner(spec: IrrepsSpec, rotation: Rotation, inversion: bool = False) -> np.ndarray:
    """Block-diagonal transform of a flat irrep vector under (R, inversion)."""
    dim = spec.dim
    out = np.zeros((dim, dim))
    pos = 0
    for mult, ir in spec:
        d = wigner_d(ir.l, rotation).matrix
        if inversion:
            d = d * ir.parity
        for _ in range(mult):
            out[pos : pos + ir.dim, pos : pos + ir.dim] = d
            pos += ir.dim
    return out


def save_checkpoint(model: Model, path) -> None:
    """Versioned text container: config lines, then one parameter per line."""
    vec = model.to_vector()
    cfg = model.config
    lines = ["eqdens-checkpoint v1"]
    lines.append(f"num_layers {cfg.num_layers}")
    lines.append(f"hidden_spec {format_irreps(cfg.hidden_spec)}")
    for species, sp in cfg.output_spec:
        lines.append(f"output_spec {species} {format_irreps(sp)}")
    lines.append(f"lmax_sh {cfg.lmax_sh}")
    lines.append(f"cutoff {cfg.cutoff!r}")
    lines.append(f"radial_basis_size {cfg.radial_basis_size}")
    lines.append(f"radial_hidden_width {cfg.radial_hidden_width}")
    lines.append(f"seed {cfg.seed}")
    lines.append(f"self_connection {int(cfg.self_connection)}")
    lines.append(f"params {vec.size}")
    lines.extend("%.17g" % v for v in vec)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> Model:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "eqdens-checkpoint v1":
        raise ModelError(f"{path}: not a v1 checkpoint")
    fields = {}
    out_pairs = []
    i = 1
    while i < len(lines):
        key, _, rest = lines[i].partition(" ")
        if key == "params":
            break
        if key == "output_spec":
            species, _, spec = rest.partition(" ")
            out_pairs.append((species, spec))
        else:
            fields[key] = rest
        i += 1
    n = int(lines[i].split()[1])
    values = np.array([float(v) for v in lines[i + 1 : i + 1 + n]])
    if values.size != n:
        raise ModelError(f"{path}: expected {n} parameters, found {values.size}")
    config = ModelConfig(
        hidden_spec=fields["hidden_spec"],
        output_spec=tuple(out_pairs),
        num_layers=int(fields["num_layers"]),
        lmax_sh=int(fields["lmax_sh"]),
        cutoff=float(fields["cutoff"]),
        radial_basis_size=int(fields["radial_basis_size"]),
        radial_hidden_width=int(fields["radial_hidden_width"]),
        seed=int(fields["seed"]),
        self_connection=bool(int(fields["self_connection"])),
    )
    return Model.from_vector(config, values)
