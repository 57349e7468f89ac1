"""Model-layer tests: radial features, convolution, gate, forward, gradients,
optimizer, parameter accounting, norms probe, checkpoints.

Equivariance oracles come from the verified Wigner-D module; the convolution
is additionally checked against a slow per-edge reference implementation.
"""

import math

import numpy as np
import pytest

from eqdens import density
from eqdens.irreps import Irrep, IrrepsSpec, format_irreps, hidden_config, parse_irreps, slices
from eqdens.net import (
    FeatureTensor,
    Geometry,
    LayerWeights,
    Model,
    ModelConfig,
    ModelError,
    OptimizerState,
    adam_step,
    build_graph,
    channel_norms,
    conv_descriptor,
    convolution,
    edge_bundle,
    forward,
    gate,
    gated_spec,
    init_model,
    init_optimizer,
    load_checkpoint,
    loss_and_gradient,
    loss_mse,
    model_layout,
    param_count,
    prepare,
    radial_basis,
    save_checkpoint,
    spec_wigner,
)
from eqdens.net import autodiff as ad
from eqdens.density import DensityCoefficients
from eqdens.so3 import Rotation, clebsch_gordan, random_rotation, solid_harmonics

BASIS = density.default_basis()
OUT_SPEC = {"H": BASIS.spec_for("H"), "O": BASIS.spec_for("O")}

OH = 0.9572
HOH = math.radians(104.52)


def water(center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=float)
    h1 = c + [OH * math.sin(HOH / 2), 0.0, OH * math.cos(HOH / 2)]
    h2 = c + [-OH * math.sin(HOH / 2), 0.0, OH * math.cos(HOH / 2)]
    return Geometry(("O", "H", "H"), np.stack([c, h1, h2]))


def dimer():
    a = water().positions
    b = water((0.0, 2.9, 0.3)).positions
    return Geometry(("O", "H", "H") * 2, np.concatenate([a, b]))


def random_coefficients(geometry, seed):
    rng = np.random.default_rng(seed)
    return DensityCoefficients(
        geometry.species,
        tuple(rng.standard_normal(OUT_SPEC[s].dim) for s in geometry.species),
    )


@pytest.fixture(scope="module")
def desk_model():
    cfg = ModelConfig(hidden_spec=hidden_config(2, 8), output_spec=OUT_SPEC, seed=7)
    return init_model(cfg)


@pytest.fixture(scope="module")
def toy_model():
    cfg = ModelConfig(
        hidden_spec=hidden_config(2, 4),
        output_spec=OUT_SPEC,
        num_layers=1,
        seed=3,
    )
    return init_model(cfg)


class TestRadialBasis:
    def test_zero_at_cutoff(self):
        np.testing.assert_array_equal(radial_basis(3.5, 8, 3.5), np.zeros(8))

    def test_closed_form_at_half_cutoff(self):
        # envelope 1 - 28 x^6 + 48 x^7 - 21 x^8 times sin(k pi x)/x at x = 1/2
        got = radial_basis(1.75, 8, 3.5)
        env = 1.0 - 28 / 64 + 48 / 128 - 21 / 256
        k = np.arange(1, 9)
        expected = env * np.sin(k * math.pi / 2) / 0.5
        np.testing.assert_allclose(got, expected, atol=1e-14)
        assert np.any(got != 0.0) and np.all(np.isfinite(got))

    def test_envelope_decreases_toward_cutoff(self):
        def envelope(x):
            return 1.0 - 28 * x**6 + 48 * x**7 - 21 * x**8

        assert envelope(0.9) < envelope(0.5)
        # the implemented basis carries exactly this envelope
        for x in (0.3, 0.5, 0.77, 0.9):
            got = radial_basis(3.5 * x, 4, 3.5)
            k = np.arange(1, 5)
            np.testing.assert_allclose(
                got, envelope(x) * np.sin(k * math.pi * x) / x, atol=1e-13
            )

    def test_tiny_near_cutoff(self):
        assert np.max(np.abs(radial_basis(3.5 * 0.999, 8, 3.5))) < 1e-7

    def test_batch_shape(self):
        out = radial_basis(np.array([1.0, 2.0, 3.0]), 5, 3.5)
        assert out.shape == (3, 5)

    def test_beyond_cutoff_rejected(self):
        with pytest.raises(ModelError, match="cutoff"):
            radial_basis(3.6, 8, 3.5)

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ModelError, match="positive"):
            radial_basis(0.0, 8, 3.5)


class TestModelConfig:
    def test_scalars_must_precede_nonscalars(self):
        with pytest.raises(ModelError, match="scalar"):
            ModelConfig(hidden_spec="1x1o+4x0e", output_spec=OUT_SPEC)

    def test_unknown_species_rejected(self):
        with pytest.raises(ModelError, match="species"):
            ModelConfig(hidden_spec="4x0e", output_spec={"C": "1x0e"})

    def test_empty_output_rejected(self):
        with pytest.raises(ModelError):
            ModelConfig(hidden_spec="4x0e", output_spec={})

    def test_num_layers_validated(self):
        with pytest.raises(ModelError):
            ModelConfig(hidden_spec="4x0e", output_spec=OUT_SPEC, num_layers=0)

    def test_default_lmax_sh_covers_hidden_and_output(self):
        cfg = ModelConfig(hidden_spec="4x0e+1x2e", output_spec={"H": "1x1o"})
        assert cfg.lmax_sh == 2
        cfg = ModelConfig(hidden_spec="4x0e", output_spec=OUT_SPEC)
        assert cfg.lmax_sh == 4

    def test_gated_spec_layout(self):
        assert format_irreps(gated_spec(parse_irreps("2x0e+1x1o"))) == "2x0e+1x0e+1x1o"
        assert format_irreps(gated_spec(parse_irreps("3x0e"))) == "3x0e"
        assert (
            format_irreps(gated_spec(parse_irreps("2x0e+1x1o+1x2e")))
            == "2x0e+2x0e+1x1o+1x2e"
        )


class TestConvDescriptor:
    def test_paths_obey_selection_rules(self):
        desc = conv_descriptor(
            "t",
            parse_irreps("2x0e+1x1o"),
            parse_irreps("1x0e+1x1o+1x2e"),
            2,
            per_species_self=False,
            self_connection=False,
            require_paths=False,
        )
        for co, chan_paths in enumerate(desc.paths):
            l3 = desc.out_spec.channels[co][1].l
            p3 = desc.out_spec.channels[co][1].parity
            for p in chan_paths:
                assert abs(p.l1 - p.l2) <= l3 <= p.l1 + p.l2
                p1 = desc.in_spec.channels[p.in_channel][1].parity
                assert p3 == p1 * (-1) ** p.l2
        cols = [p.radial_column for chan in desc.paths for p in chan]
        assert cols == list(range(len(cols)))

    def test_unreachable_output_channel_rejected(self):
        # even scalar input cannot reach an odd scalar: Y_0 keeps parity
        with pytest.raises(ModelError, match="no tensor path"):
            conv_descriptor(
                "t",
                parse_irreps("2x0e"),
                parse_irreps("1x0o"),
                0,
                per_species_self=False,
                self_connection=False,
                require_paths=True,
            )

    def test_unreachable_channel_tolerated_when_optional(self):
        desc = conv_descriptor(
            "t",
            parse_irreps("2x0e"),
            parse_irreps("1x0o"),
            0,
            per_species_self=False,
            self_connection=False,
            require_paths=False,
        )
        assert desc.paths == ((),)


def naive_convolution(features, graph, layer_weights, bundle=None):
    """Direct per-edge reference: same contract as convolution(), different code."""
    desc = layer_weights.desc
    params = layer_weights.params
    x = ad.value(features.values)
    n = graph.num_nodes
    in_slices = slices(desc.in_spec)
    scale = (
        1.0 / math.sqrt(graph.num_edges / n) if graph.num_edges else 0.0
    )
    if graph.num_edges:
        unit = graph.disp / graph.dist[:, None]
        sh = solid_harmonics(desc.lmax_sh, unit)
        rb = radial_basis(
            graph.dist, params[f"{desc.name}.radial.w1"].shape[0], graph.cutoff
        )
        radial = np.tanh(rb @ params[f"{desc.name}.radial.w1"]) @ params[
            f"{desc.name}.radial.w2"
        ]
    out_blocks = []
    for co, (mult, ir) in enumerate(desc.out_spec.channels):
        k = ir.dim
        acc = np.zeros((n, 0, k))
        for p in desc.paths[co]:
            sl = in_slices[p.in_channel]
            u = desc.in_spec.channels[p.in_channel][0]
            cg = clebsch_gordan(p.l1, p.l2, p.l3).values
            pooled = np.zeros((n, u, k))
            for e in range(graph.num_edges):
                f = x[graph.send[e], sl.offset : sl.offset + sl.length].reshape(
                    u, 2 * p.l1 + 1
                )
                yc = np.einsum("n,mnk->mk", sh[p.l2][e], cg)
                pooled[graph.recv[e]] += (f @ yc) * radial[e, p.radial_column] * scale
            acc = np.concatenate([acc, pooled], axis=1)
        term = np.zeros((n, mult, k))
        if acc.shape[1]:
            term += np.einsum("nuk,uw->nwk", acc, params[f"{desc.name}.mix.{co}"])
        if desc.self_connection and desc.self_sources[co]:
            blocks = []
            for ci in desc.self_sources[co]:
                s = in_slices[ci]
                v = desc.in_spec.channels[ci][0]
                blocks.append(x[:, s.offset : s.offset + s.length].reshape(n, v, k))
            stacked = np.concatenate(blocks, axis=1)
            w = params[f"{desc.name}.self.{co}"]
            if desc.per_species_self:
                for node in range(n):
                    s_idx = int(np.argmax(graph.species_onehot[node]))
                    term[node] += np.einsum("vk,vw->wk", stacked[node], w[s_idx])
            else:
                term += np.einsum("nvk,vw->nwk", stacked, w)
        if ir.l == 0 and ir.parity == 1:
            term += params[f"{desc.name}.bias.{co}"].reshape(1, mult, 1)
        out_blocks.append(term.reshape(n, mult * k))
    return FeatureTensor(desc.out_spec, np.concatenate(out_blocks, axis=1))


class TestConvolution:
    def test_no_edges_gives_zero_without_self_interaction(self):
        cfg = ModelConfig(
            hidden_spec="4x0e+2x1o",
            output_spec=OUT_SPEC,
            self_connection=False,
            seed=1,
        )
        model = init_model(cfg)
        geo = Geometry(("O",), np.zeros((1, 3)))
        graph = build_graph(geo, cfg.cutoff)
        desc = model.layout.hidden[0]
        feats = FeatureTensor(desc.in_spec, graph.species_onehot)
        out = convolution(feats, graph, LayerWeights(desc, model.params))
        assert out.spec == desc.out_spec
        np.testing.assert_array_equal(ad.value(out.values), 0.0)

    def test_spec_mismatch_rejected(self, desk_model):
        graph = build_graph(water(), desk_model.config.cutoff)
        desc = desk_model.layout.hidden[0]
        bad = FeatureTensor(parse_irreps("1x0e"), np.ones((3, 1)))
        with pytest.raises(ModelError, match="spec"):
            convolution(bad, graph, LayerWeights(desc, desk_model.params))

    def test_identity_rotation_is_identity(self, desk_model):
        geo = water()
        out1 = forward(desk_model, geo)
        out2 = forward(desk_model, geo.transformed(matrix=np.eye(3)))
        for a, b in zip(out1.vectors, out2.vectors):
            np.testing.assert_array_equal(a, b)

    def test_matches_per_edge_reference(self, desk_model):
        # second implementation: explicit per-edge loop, plain numpy
        geo = dimer()
        graph = build_graph(geo, desk_model.config.cutoff)
        desc = desk_model.layout.hidden[1]
        rng = np.random.default_rng(11)
        feats = FeatureTensor(
            desc.in_spec, rng.standard_normal((len(geo), desc.in_spec.dim))
        )
        lw = LayerWeights(desc, desk_model.params)
        bundle = edge_bundle(
            graph, desc.lmax_sh, desk_model.config.radial_basis_size
        )
        fast = ad.value(convolution(feats, graph, lw, bundle).values)
        slow = ad.value(naive_convolution(feats, graph, lw).values)
        np.testing.assert_allclose(fast, slow, atol=1e-12)

    def test_layer_equivariance(self, desk_model):
        geo = dimer()
        desc = desk_model.layout.hidden[1]
        rng = np.random.default_rng(4)
        values = rng.standard_normal((len(geo), desc.in_spec.dim))
        lw = LayerWeights(desc, desk_model.params)

        graph = build_graph(geo, desk_model.config.cutoff)
        out = ad.value(convolution(FeatureTensor(desc.in_spec, values), graph, lw).values)

        for seed in range(3):
            rot = random_rotation(100 + seed)
            d_in = spec_wigner(desc.in_spec, rot)
            d_out = spec_wigner(desc.out_spec, rot)
            graph_r = build_graph(geo.transformed(matrix=rot.matrix), desk_model.config.cutoff)
            out_r = ad.value(
                convolution(FeatureTensor(desc.in_spec, values @ d_in.T), graph_r, lw).values
            )
            assert np.max(np.abs(out_r - out @ d_out.T)) < 1e-9


class TestGate:
    def test_saturated_gates_pass_features_through(self):
        spec = parse_irreps("1x0e+2x0e+1x1o+1x2e")
        rng = np.random.default_rng(0)
        scalars = rng.standard_normal((4, 1))
        nonscalars = rng.standard_normal((4, 8))
        values = np.concatenate([scalars, np.full((4, 2), 50.0), nonscalars], axis=1)
        out = gate(FeatureTensor(spec, values))
        assert format_irreps(out.spec) == "1x0e+1x1o+1x2e"
        got = ad.value(out.values)
        np.testing.assert_allclose(got[:, :1], np.tanh(scalars), atol=1e-15)
        np.testing.assert_allclose(got[:, 1:], nonscalars, atol=1e-15)

    def test_zero_nonscalar_features_stay_zero(self):
        spec = parse_irreps("2x0e+1x0e+1x1o")
        values = np.concatenate(
            [np.random.default_rng(1).standard_normal((3, 3)), np.zeros((3, 3))], axis=1
        )
        out = ad.value(gate(FeatureTensor(spec, values)).values)
        np.testing.assert_array_equal(out[:, -3:], 0.0)

    def test_scalar_only_spec_is_pointwise_activation(self):
        spec = parse_irreps("3x0e+1x0o")
        values = np.random.default_rng(2).standard_normal((2, 4))
        out = gate(FeatureTensor(spec, values))
        assert out.spec == spec
        np.testing.assert_allclose(ad.value(out.values), np.tanh(values), atol=1e-15)

    def test_missing_gate_scalars_rejected(self):
        with pytest.raises(ModelError, match="gate"):
            gate(FeatureTensor(parse_irreps("1x1o"), np.ones((1, 3))))

    def test_wrong_gate_multiplicity_rejected(self):
        spec = parse_irreps("1x0e+1x1o+1x1o")
        with pytest.raises(ModelError, match="gate"):
            gate(FeatureTensor(spec, np.ones((1, 7))))

    def test_scalar_after_nonscalar_rejected(self):
        spec = IrrepsSpec(((2, Irrep(0, 1)), (1, Irrep(1, -1)), (1, Irrep(0, 1))))
        with pytest.raises(ModelError, match="scalar"):
            gate(FeatureTensor(spec, np.ones((1, 6))))

    def test_equivariance(self):
        spec = parse_irreps("2x0e+3x0e+2x1o+1x2e")
        rng = np.random.default_rng(5)
        values = rng.standard_normal((5, spec.dim))
        out = ad.value(gate(FeatureTensor(spec, values)).values)
        out_spec = parse_irreps("2x0e+2x1o+1x2e")
        for seed in range(3):
            rot = random_rotation(200 + seed)
            rotated = values @ spec_wigner(spec, rot).T
            out_r = ad.value(gate(FeatureTensor(spec, rotated)).values)
            assert np.max(np.abs(out_r - out @ spec_wigner(out_spec, rot).T)) < 1e-9


class TestForward:
    def test_translation_invariance(self, desk_model):
        geo = dimer()
        out = forward(desk_model, geo)
        out_t = forward(desk_model, geo.transformed(shift=[11.0, -3.0, 0.7]))
        worst = max(
            np.max(np.abs(a - b)) for a, b in zip(out.vectors, out_t.vectors)
        )
        assert worst < 1e-10

    def test_rotation_equivariance(self, desk_model):
        geo = dimer()
        out = forward(desk_model, geo)
        for seed in range(5):
            rot = random_rotation(300 + seed)
            out_r = forward(desk_model, geo.transformed(matrix=rot.matrix))
            worst = max(
                np.max(np.abs(vr - spec_wigner(OUT_SPEC[s], rot) @ v))
                for s, v, vr in zip(geo.species, out.vectors, out_r.vectors)
            )
            assert worst < 1e-9

    def test_parity_under_inversion(self, desk_model):
        geo = dimer()
        out = forward(desk_model, geo)
        out_i = forward(desk_model, geo.transformed(matrix=-np.eye(3)))
        ident = Rotation.identity()
        worst = max(
            np.max(np.abs(vi - spec_wigner(OUT_SPEC[s], ident, inversion=True) @ v))
            for s, v, vi in zip(geo.species, out.vectors, out_i.vectors)
        )
        assert worst < 1e-9

    def test_rotoinversion_equivariance(self, desk_model):
        geo = dimer()
        out = forward(desk_model, geo)
        rot = random_rotation(901)
        out_ri = forward(desk_model, geo.transformed(matrix=-rot.matrix))
        worst = max(
            np.max(np.abs(vr - spec_wigner(OUT_SPEC[s], rot, inversion=True) @ v))
            for s, v, vr in zip(geo.species, out.vectors, out_ri.vectors)
        )
        assert worst < 1e-9

    def test_permutation_covariance(self, desk_model):
        geo = dimer()
        perm = [3, 0, 5, 1, 4, 2]
        out = forward(desk_model, geo)
        out_p = forward(desk_model, geo.permuted(perm))
        for k, orig in enumerate(perm):
            np.testing.assert_allclose(
                out_p.vectors[k], out.vectors[orig], atol=1e-12
            )

    def test_deterministic(self, desk_model):
        geo = water()
        a = forward(desk_model, geo)
        b = forward(desk_model, geo)
        for va, vb in zip(a.vectors, b.vectors):
            np.testing.assert_array_equal(va, vb)

    def test_output_layout_matches_species(self, desk_model):
        out = forward(desk_model, water())
        assert out.species == ("O", "H", "H")
        assert out.vectors[0].shape == (OUT_SPEC["O"].dim,)
        assert out.vectors[1].shape == (OUT_SPEC["H"].dim,)


class TestLossMSE:
    def test_exact_match_is_zero(self):
        c = random_coefficients(water(), 1)
        assert float(ad.value(loss_mse(c, c))) == 0.0

    def test_single_entry_difference(self):
        geo = Geometry(("H",), np.zeros((1, 3)))
        a = DensityCoefficients(("H",), (np.zeros(15),))
        b_vec = np.zeros(15)
        b_vec[4] = 2.0
        b = DensityCoefficients(("H",), (b_vec,))
        # squared difference 4 averaged over the 15 entries
        assert float(ad.value(loss_mse(a, b))) == pytest.approx(4.0 / 15)

    def test_matches_flat_recomputation(self):
        geo = water()
        a, b = random_coefficients(geo, 2), random_coefficients(geo, 3)
        flat_a = np.concatenate(a.vectors)
        flat_b = np.concatenate(b.vectors)
        expected = float(np.mean((flat_a - flat_b) ** 2))
        assert float(ad.value(loss_mse(a, b))) == pytest.approx(expected, rel=1e-14)

    def test_layout_mismatch_rejected(self):
        a = DensityCoefficients(("H",), (np.zeros(15),))
        b = DensityCoefficients(("O",), (np.zeros(70),))
        with pytest.raises(ModelError, match="layout"):
            loss_mse(a, b)
        c = DensityCoefficients(("H",), (np.zeros(14),))
        with pytest.raises(ModelError, match="layout"):
            loss_mse(a, c)


class TestGradient:
    def test_finite_difference_agreement(self, toy_model):
        geo = Geometry(("O", "H"), np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.96]]))
        batch = [(geo, random_coefficients(geo, 9))]
        _, grad = loss_and_gradient(toy_model, batch)
        vec = toy_model.to_vector()
        idx = np.random.default_rng(0).choice(vec.size, size=200, replace=False)
        step = 1e-5
        failures = 0
        for i in idx:
            plus, minus = vec.copy(), vec.copy()
            plus[i] += step
            minus[i] -= step
            lp, _ = loss_and_gradient(Model.from_vector(toy_model.config, plus), batch)
            lm, _ = loss_and_gradient(Model.from_vector(toy_model.config, minus), batch)
            fd = (lp - lm) / (2 * step)
            # guard the denominator: near-zero gradients sit at the FD noise
            # floor (|loss|*eps/step ~ 1e-11), where a pure relative error is
            # meaningless
            rel = abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-4)
            failures += rel >= 1e-5
        assert failures / len(idx) <= 0.01

    def test_zero_output_weights_zero_targets_kill_gradient(self, toy_model):
        params = {k: v.copy() for k, v in toy_model.params.items()}
        for name in params:
            if name.startswith("out."):
                params[name][:] = 0.0
        model = Model(toy_model.config, params)
        geo = water()
        zeros = DensityCoefficients(
            geo.species, tuple(np.zeros(OUT_SPEC[s].dim) for s in geo.species)
        )
        loss, grad = loss_and_gradient(model, [(geo, zeros)])
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_gradient_vanishes_at_exact_fit(self, toy_model):
        geo = water()
        target = forward(toy_model, geo)
        target = DensityCoefficients(
            target.species, tuple(ad.value(v) for v in target.vectors)
        )
        loss, grad = loss_and_gradient(toy_model, [(geo, target)])
        assert loss < 1e-28
        assert np.max(np.abs(grad)) < 1e-10

    def test_batch_is_mean_of_structure_losses(self, toy_model):
        geo_a, geo_b = water(), dimer()
        ta, tb = random_coefficients(geo_a, 21), random_coefficients(geo_b, 22)
        loss_ab, grad_ab = loss_and_gradient(toy_model, [(geo_a, ta), (geo_b, tb)])
        loss_a, grad_a = loss_and_gradient(toy_model, [(geo_a, ta)])
        loss_b, grad_b = loss_and_gradient(toy_model, [(geo_b, tb)])
        assert loss_ab == pytest.approx((loss_a + loss_b) / 2, rel=1e-12)
        np.testing.assert_allclose(grad_ab, (grad_a + grad_b) / 2, atol=1e-13)

    def test_batch_loss_matches_forward_losses(self, toy_model):
        geo_a, geo_b = water(), dimer()
        ta, tb = random_coefficients(geo_a, 31), random_coefficients(geo_b, 32)
        loss_ab, _ = loss_and_gradient(toy_model, [(geo_a, ta), (geo_b, tb)])
        la = float(ad.value(loss_mse(forward(toy_model, geo_a), ta)))
        lb = float(ad.value(loss_mse(forward(toy_model, geo_b), tb)))
        assert loss_ab == pytest.approx((la + lb) / 2, rel=1e-12)

    def test_reproducible_bitwise(self, toy_model):
        geo = water()
        batch = [(geo, random_coefficients(geo, 5))]
        l1, g1 = loss_and_gradient(toy_model, batch)
        l2, g2 = loss_and_gradient(toy_model, batch)
        assert l1 == l2
        np.testing.assert_array_equal(g1, g2)

    def test_empty_batch_rejected(self, toy_model):
        with pytest.raises(ModelError, match="batch"):
            loss_and_gradient(toy_model, [])


def reference_adam(vec, grads, step, m, v, lr, beta1, beta2, eps):
    """Textbook bias-corrected update, kept separate from the shipped code."""
    step = step + 1
    m = beta1 * m + (1.0 - beta1) * grads
    v = beta2 * v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    return vec - lr * m_hat / (np.sqrt(v_hat) + eps), step, m, v


class TestAdam:
    def test_zero_gradient_keeps_parameters(self, toy_model):
        state = init_optimizer(toy_model)
        new_model, new_state = adam_step(
            toy_model, np.zeros(toy_model.to_vector().size), state, lr=1e-2
        )
        np.testing.assert_array_equal(new_model.to_vector(), toy_model.to_vector())
        assert new_state.step == 1

    def test_first_step_moves_by_lr_sign(self, toy_model):
        rng = np.random.default_rng(8)
        vec = toy_model.to_vector()
        grads = rng.choice([-1.0, 1.0], vec.size) * rng.uniform(0.1, 2.0, vec.size)
        new_model, _ = adam_step(toy_model, grads, init_optimizer(toy_model), lr=1e-3)
        delta = new_model.to_vector() - vec
        np.testing.assert_allclose(delta, -1e-3 * np.sign(grads), atol=1e-9)

    def test_matches_reference_bit_for_bit(self, toy_model):
        rng = np.random.default_rng(12)
        model = toy_model
        state = init_optimizer(model)
        vec, step, m, v = model.to_vector(), 0, state.m.copy(), state.v.copy()
        for _ in range(5):
            grads = rng.standard_normal(vec.size)
            model, state = adam_step(model, grads, state, lr=3e-3, beta1=0.9, beta2=0.999, eps=1e-8)
            vec, step, m, v = reference_adam(vec, grads, step, m, v, 3e-3, 0.9, 0.999, 1e-8)
            assert np.array_equal(model.to_vector(), vec)
            assert state.step == step
            assert np.array_equal(state.m, m)
            assert np.array_equal(state.v, v)

    def test_nonfinite_gradient_rejected(self, toy_model):
        grads = np.zeros(toy_model.to_vector().size)
        grads[3] = np.nan
        with pytest.raises(ModelError, match="finite"):
            adam_step(toy_model, grads, init_optimizer(toy_model), lr=1e-3)

    def test_shape_mismatch_rejected(self, toy_model):
        with pytest.raises(ModelError, match="shape"):
            adam_step(toy_model, np.zeros(3), init_optimizer(toy_model), lr=1e-3)

    def test_state_mismatch_rejected(self, toy_model):
        n = toy_model.to_vector().size
        bad = OptimizerState(step=0, m=np.zeros(n - 1), v=np.zeros(n - 1))
        with pytest.raises(ModelError, match="state"):
            adam_step(toy_model, np.zeros(n), bad, lr=1e-3)


class TestParamCount:
    def test_hand_counted_toy(self):
        cfg = ModelConfig(hidden_spec="1x0e", output_spec={"H": "1x0e"}, num_layers=1)
        # layer0: radial 8x16 + 16x1 = 144; mix (2,1) = 2 from the one-hot
        # input channel; per-species self (2,2,1) = 4; bias 1  -> 151
        # out.H: radial 144; mix (1,1) = 1; self (1,1) = 1; bias 1 -> 147
        assert param_count(cfg) == 151 + 147

    def test_counts_decrease_with_rising_hidden_l(self):
        counts = [
            param_count(
                ModelConfig(hidden_spec=hidden_config(lh, 105), output_spec=OUT_SPEC)
            )
            for lh in range(4)
        ]
        assert all(a > b for a, b in zip(counts, counts[1:]))

    def test_desk_scale_counts_also_decrease(self):
        counts = [
            param_count(
                ModelConfig(hidden_spec=hidden_config(lh, 8), output_spec=OUT_SPEC)
            )
            for lh in range(3)
        ]
        assert all(a > b for a, b in zip(counts, counts[1:]))

    def test_wider_radial_network_costs_more(self):
        small = ModelConfig(hidden_spec="4x0e", output_spec=OUT_SPEC)
        wide = ModelConfig(
            hidden_spec="4x0e", output_spec=OUT_SPEC, radial_hidden_width=32
        )
        assert param_count(wide) > param_count(small)

    def test_matches_initialized_vector_length(self, desk_model):
        assert desk_model.to_vector().size == param_count(desk_model.config)


class TestChannelNorms:
    def test_single_vector_example(self):
        feats = FeatureTensor(parse_irreps("1x1o"), np.array([[1.0, 2.0, 2.0]]))
        assert channel_norms(feats) == {1: pytest.approx(3.0)}

    def test_zero_features(self):
        feats = FeatureTensor(parse_irreps("2x0e+1x2e"), np.zeros((3, 7)))
        assert channel_norms(feats) == {0: 0.0, 2: 0.0}

    def test_pools_multiplicities_and_parities(self):
        # two l=0 entries (1, 3) and one l=1 block (2,0,0):
        # l0 mean square = (1+9)/2 = 5; l1 = 4/3 after the 2l+1 division
        spec = parse_irreps("1x0e+1x0o+1x1o")
        feats = FeatureTensor(spec, np.array([[1.0, 3.0, 2.0, 0.0, 0.0]]))
        out = channel_norms(feats)
        assert out[0] == pytest.approx(5.0)
        assert out[1] == pytest.approx(4.0 / 3.0)

    def test_rotation_invariance(self):
        spec = parse_irreps("2x0e+2x1o+1x2e+1x3o")
        rng = np.random.default_rng(6)
        values = rng.standard_normal((4, spec.dim))
        base = channel_norms(FeatureTensor(spec, values))
        for seed in range(5):
            rot = random_rotation(400 + seed)
            rotated = values @ spec_wigner(spec, rot).T
            out = channel_norms(FeatureTensor(spec, rotated))
            for l, v in base.items():
                assert abs(out[l] - v) < 1e-10


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, toy_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(toy_model, path)
        loaded = load_checkpoint(path)
        assert loaded.config == toy_model.config
        np.testing.assert_array_equal(loaded.to_vector(), toy_model.to_vector())

    def test_round_trip_preserves_forward(self, toy_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(toy_model, path)
        loaded = load_checkpoint(path)
        a = forward(toy_model, water())
        b = forward(loaded, water())
        for va, vb in zip(a.vectors, b.vectors):
            np.testing.assert_array_equal(va, vb)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_text("something else\n")
        with pytest.raises(ModelError, match="checkpoint"):
            load_checkpoint(path)

    def test_truncated_file_rejected(self, toy_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(toy_model, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-10]) + "\n")
        with pytest.raises(ModelError, match="parameters"):
            load_checkpoint(path)


class TestDeterminism:
    def test_same_seed_same_parameters(self):
        cfg = ModelConfig(hidden_spec=hidden_config(1, 4), output_spec=OUT_SPEC, seed=42)
        a, b = init_model(cfg), init_model(cfg)
        np.testing.assert_array_equal(a.to_vector(), b.to_vector())

    def test_different_seed_different_parameters(self):
        base = dict(hidden_spec=hidden_config(1, 4), output_spec=OUT_SPEC)
        a = init_model(ModelConfig(seed=1, **base))
        b = init_model(ModelConfig(seed=2, **base))
        assert not np.array_equal(a.to_vector(), b.to_vector())

    def test_biases_start_at_zero(self, desk_model):
        for e in desk_model.layout.registry:
            if ".bias." in e.name:
                np.testing.assert_array_equal(desk_model.params[e.name], 0.0)

    def test_vector_round_trip(self, desk_model):
        vec = desk_model.to_vector()
        re = Model.from_vector(desk_model.config, vec)
        for name, arr in desk_model.params.items():
            np.testing.assert_array_equal(re.params[name], arr)

    def test_vector_length_validated(self, desk_model):
        with pytest.raises(ModelError, match="shape"):
            Model.from_vector(desk_model.config, np.zeros(3))
