"""Training driver and the three measurement sweeps built on top of it.

Everything here composes public operations from the data, net, and density
modules. A sweep is a sequence of independent training runs whose seeds all
come from the config, so rerunning any experiment with the same config
reproduces its numbers exactly.
"""

import math
import os
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .. import data
from ..density import default_basis, epsilon_report, make_grid
from ..irreps import hidden_config
from ..net import (
    FeatureTensor,
    Model,
    ModelConfig,
    adam_step,
    channel_norms,
    forward,
    init_model,
    init_optimizer,
    load_checkpoint,
    loss_and_gradient,
    param_count,
    prepare,
    save_checkpoint,
)
from .report import Table

__all__ = [
    "MINIMAL_HIDDEN",
    "NORM_LABELS",
    "ExperimentConfig",
    "ExperimentError",
    "Experiment2Result",
    "Experiment3Result",
    "RunRecord",
    "SweepResult",
    "build_datasets",
    "evaluate_checkpoint",
    "evaluate_model",
    "experiment1",
    "experiment1_advisories",
    "experiment2",
    "experiment3",
    "experiment3_advisories",
    "plateau_knee",
    "train",
]

# hidden layer of the feature-trajectory experiment
MINIMAL_HIDDEN = "15x0e+15x1o+15x2e"

# spectroscopic labels for plot legends
NORM_LABELS = {0: "s", 1: "p", 2: "d", 3: "f", 4: "g"}


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs: data sizes, model shape, schedule, seeds.

    ``l_h`` lists the hidden-layer angular momenta a sweep walks through;
    a single training run uses its first entry (or ``hidden_irreps`` when
    set, which overrides the generated layout). ``truncate`` drops output
    channels above that l from the auxiliary basis before training, and
    ``scaled`` equalizes per-l label standard deviations.
    """

    experiment: int = 1
    n_train: int = 128
    n_test: int = 32
    molecules: int = 3
    l_h: tuple = (0, 1, 2)
    lmax_o: tuple = (4, 3, 2, 1, 0)
    n_s: int = 8
    num_layers: int = 2
    hidden_irreps: str = ""
    truncate: int = -1  # -1: keep the full auxiliary basis
    scaled: bool = False
    epochs: int = 200
    learning_rate: float = 1e-2
    batch_size: int = 8
    data_seed: int = 2025
    teacher_seed: int = 7
    split_seed: int = 303
    model_seed: int = 11
    shuffle_seed: int = 404
    eval_structures: int = 8
    probe_structures: int = 8
    spacing: float = 0.5
    padding: float = 4.0
    out_dir: str = ""

    def __post_init__(self):
        if self.experiment not in (1, 2, 3):
            raise ExperimentError(f"experiment must be 1, 2, or 3, got {self.experiment}")
        if self.epochs < 1:
            raise ExperimentError("epochs must be >= 1")
        object.__setattr__(self, "l_h", tuple(int(l) for l in self.l_h))
        object.__setattr__(self, "lmax_o", tuple(int(l) for l in self.lmax_o))
        if not self.l_h:
            raise ExperimentError("l_h list must be nonempty")
        if any(l < 0 for l in self.l_h):
            raise ExperimentError("l_h entries must be >= 0")
        if not self.lmax_o or any(l < 0 or l > 4 for l in self.lmax_o):
            raise ExperimentError("lmax_o entries must lie in 0..4")
        if self.n_train < 1 or self.n_test < 1:
            raise ExperimentError("n_train and n_test must be >= 1")
        if self.molecules < 1:
            raise ExperimentError("molecules must be >= 1")
        if self.batch_size < 1:
            raise ExperimentError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ExperimentError("learning_rate must be positive")
        if self.truncate < -1 or self.truncate > 4:
            raise ExperimentError("truncate must be -1 (off) or lie in 0..4")
        if self.num_layers < 1:
            raise ExperimentError("num_layers must be >= 1")
        if self.n_s < 1:
            raise ExperimentError("n_s must be >= 1")
        if self.eval_structures < 1 or self.probe_structures < 1:
            raise ExperimentError("eval_structures and probe_structures must be >= 1")
        if self.spacing <= 0 or self.padding <= 0:
            raise ExperimentError("spacing and padding must be positive")


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one training run.

    ``norms`` holds, for every epoch, each hidden layer's per-l mean squared
    feature norm (normalized by 2l+1) measured on a fixed probe subset of the
    training structures after that epoch's updates. Wall time is excluded
    from equality so that identical seeds give identical records.
    """

    config: ExperimentConfig
    losses: tuple
    norm_ls: tuple
    norms: tuple
    eps_total: float
    eps_l: tuple  # ((l, value), ...) sorted by l
    param_count: int
    wall_time: float = field(compare=False, default=0.0)

    def __post_init__(self):
        if len(self.losses) != self.config.epochs:
            raise ExperimentError("loss series length must equal epochs")
        if len(self.norms) != self.config.epochs:
            raise ExperimentError("norm series length must equal epochs")
        flat = list(self.losses) + [self.eps_total] + [v for _, v in self.eps_l]
        for epoch_norms in self.norms:
            for layer_norms in epoch_norms:
                if len(layer_norms) != len(self.norm_ls):
                    raise ExperimentError("norm rows must cover every hidden l")
                flat.extend(layer_norms)
        if not all(math.isfinite(float(v)) for v in flat):
            raise ExperimentError("run record holds non-finite values")

    @property
    def eps_by_l(self) -> dict:
        return dict(self.eps_l)


@dataclass(frozen=True)
class SweepResult:
    table: Table
    records: tuple


@dataclass(frozen=True)
class Experiment2Result:
    table: Table
    plateau: Table  # (lmax_o, l_h where the error curve flattens)
    records: tuple


@dataclass(frozen=True)
class Experiment3Result:
    standard: RunRecord
    scaled: RunRecord


def build_datasets(config: ExperimentConfig):
    """Generate, label, transform, and split data exactly as the seeds say."""
    geometries = data.generate_clusters(
        config.n_train + config.n_test, config.molecules, seed=config.data_seed
    )
    ds = data.teacher_targets(geometries, default_basis(), teacher_seed=config.teacher_seed)
    if config.truncate >= 0:
        ds = data.truncate_dataset(ds, config.truncate)
    if config.scaled:
        ds = data.scale_dataset(ds)
    fraction = config.n_train / (config.n_train + config.n_test)
    return data.split(ds, fraction, config.split_seed)


def _model_config(config: ExperimentConfig, basis) -> ModelConfig:
    hidden = config.hidden_irreps or hidden_config(config.l_h[0], config.n_s)
    out = {s: basis.spec_for(s) for s in basis.species()}
    return ModelConfig(
        hidden_spec=hidden,
        output_spec=out,
        num_layers=config.num_layers,
        seed=config.model_seed,
    )


def _probe_norms(model: Model, entries, prepared, norm_ls):
    """Per-layer per-l norms pooled over every node of the probe structures."""
    stacks = None
    specs = None
    for (geo, _), prep in zip(entries, prepared):
        _, hidden = forward(model, geo, prep, with_hidden=True)
        if stacks is None:
            specs = [ft.spec for ft in hidden]
            stacks = [[ft.values] for ft in hidden]
        else:
            for k, ft in enumerate(hidden):
                stacks[k].append(ft.values)
    out = []
    for spec, values in zip(specs, stacks):
        norms = channel_norms(FeatureTensor(spec, np.vstack(values)))
        out.append(tuple(norms[l] for l in norm_ls))
    return tuple(out)


def evaluate_model(model: Model, ds: data.Dataset, config: ExperimentConfig):
    """Mean per-structure density errors over the first eval_structures entries."""
    k = min(config.eval_structures, len(ds.entries))
    totals = []
    per_l = defaultdict(list)
    for geo, ref in ds.entries[:k]:
        pred = forward(model, geo)
        grid = make_grid(geo, config.spacing, config.padding)
        eps_t, eps_per_l = epsilon_report(geo, ds.basis, ref, pred, grid)
        totals.append(eps_t)
        for l, v in eps_per_l.items():
            per_l[l].append(v)
    eps_total = float(np.mean(totals))
    eps_l = {l: float(np.mean(vs)) for l, vs in per_l.items()}
    return eps_total, eps_l


def _train(config: ExperimentConfig, datasets=None):
    started = time.perf_counter()
    train_ds, test_ds = datasets if datasets is not None else build_datasets(config)
    mc = _model_config(config, train_ds.basis)
    model = init_model(mc)
    state = init_optimizer(model)
    norm_ls = tuple(sorted({ir.l for _, ir in mc.hidden_spec}))

    prepared = [prepare(mc, geo) for geo, _ in train_ds.entries]
    n_probe = min(config.probe_structures, len(train_ds.entries))
    probe = train_ds.entries[:n_probe]
    probe_prepared = prepared[:n_probe]

    n = len(train_ds.entries)
    losses = []
    norm_series = []
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.shuffle_seed, epoch]).permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = [train_ds.entries[i] for i in idx]
            loss, grad = loss_and_gradient(model, batch, [prepared[i] for i in idx])
            if not math.isfinite(loss):
                raise ExperimentError(
                    f"training diverged: non-finite loss at epoch {epoch}"
                )
            model, state = adam_step(model, grad, state, lr=config.learning_rate)
            batch_losses.append(loss)
        losses.append(float(np.mean(batch_losses)))
        norm_series.append(_probe_norms(model, probe, probe_prepared, norm_ls))

    eps_total, eps_l = evaluate_model(model, test_ds, config)
    record = RunRecord(
        config=config,
        losses=tuple(losses),
        norm_ls=norm_ls,
        norms=tuple(norm_series),
        eps_total=eps_total,
        eps_l=tuple(sorted(eps_l.items())),
        param_count=param_count(mc),
        wall_time=time.perf_counter() - started,
    )
    return record, model


def train(config: ExperimentConfig) -> RunRecord:
    record, model = _train(config)
    _save(model, config, "model.ckpt")
    return record


def evaluate_checkpoint(path, config: ExperimentConfig):
    """Recompute a run's final density errors from its saved parameters."""
    model = load_checkpoint(path)
    _, test_ds = build_datasets(config)
    return evaluate_model(model, test_ds, config)


def _save(model: Model, config: ExperimentConfig, name: str) -> None:
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        save_checkpoint(model, os.path.join(config.out_dir, name))


def experiment1(config: ExperimentConfig) -> SweepResult:
    """Sweep the hidden angular momentum, full auxiliary basis."""
    records = []
    for l in config.l_h:
        run_cfg = replace(config, experiment=1, l_h=(l,), hidden_irreps="")
        record, model = _train(run_cfg)
        _save(model, config, f"exp1_lh{l}.ckpt")
        records.append(record)
    ls = [l for l, _ in records[0].eps_l]
    columns = ("l_h", "param_count", "eps_total") + tuple(f"eps_{l}" for l in ls)
    rows = tuple(
        (l, r.param_count, r.eps_total) + tuple(v for _, v in r.eps_l)
        for l, r in zip(config.l_h, records)
    )
    return SweepResult(Table(columns, rows), tuple(records))


def experiment2(config: ExperimentConfig) -> Experiment2Result:
    """Cross the hidden-l sweep with output-basis truncation levels."""
    records = []
    rows = []
    plateau_rows = []
    for lmax_o in config.lmax_o:
        sweep_eps = []
        for l in config.l_h:
            run_cfg = replace(
                config, experiment=2, l_h=(l,), hidden_irreps="", truncate=lmax_o
            )
            record, model = _train(run_cfg)
            _save(model, config, f"exp2_lo{lmax_o}_lh{l}.ckpt")
            records.append(record)
            rows.append((lmax_o, l, record.param_count, record.eps_total))
            sweep_eps.append(record.eps_total)
        plateau_rows.append((lmax_o, config.l_h[plateau_knee(sweep_eps)]))
    table = Table(("lmax_o", "l_h", "param_count", "eps_total"), tuple(rows))
    plateau = Table(("lmax_o", "plateau_l_h"), tuple(plateau_rows))
    return Experiment2Result(table, plateau, tuple(records))


def experiment3(config: ExperimentConfig) -> Experiment3Result:
    """Track hidden feature norms on the standard and the scaled labels."""
    hidden = config.hidden_irreps or MINIMAL_HIDDEN
    standard_cfg = replace(config, experiment=3, hidden_irreps=hidden, scaled=False)
    scaled_cfg = replace(config, experiment=3, hidden_irreps=hidden, scaled=True)
    standard, model_standard = _train(standard_cfg)
    scaled, model_scaled = _train(scaled_cfg)
    _save(model_standard, config, "exp3_standard.ckpt")
    _save(model_scaled, config, "exp3_scaled.ckpt")
    return Experiment3Result(standard, scaled)


def plateau_knee(series, threshold: float = 0.05) -> int:
    """Index after which no later value improves by more than ``threshold``.

    Improvement is relative: position i is the knee when every later value
    stays above series[i] * (1 - threshold). A monotone-then-flat error
    curve therefore yields the first index of the flat part.
    """
    values = [float(v) for v in series]
    if not values:
        raise ExperimentError("plateau_knee needs a nonempty series")
    if not all(math.isfinite(v) for v in values):
        raise ExperimentError("plateau_knee needs finite values")
    if not 0.0 < threshold < 1.0:
        raise ExperimentError("threshold must lie in (0, 1)")
    for i in range(len(values)):
        floor = values[i] * (1.0 - threshold)
        if all(v >= floor for v in values[i + 1 :]):
            return i
    raise AssertionError("unreachable: the last index always qualifies")


def experiment1_advisories(result: SweepResult) -> list:
    """Qualitative checks reported alongside the sweep, never asserted."""
    messages = []
    records = result.records
    ls = [l for l, _ in records[0].eps_l]
    if len(records) >= 2:
        first, second = records[0], records[1]
        ok = second.eps_total <= first.eps_total
        messages.append(
            "advisory: eps_total non-increasing from the first to the second "
            f"hidden config: {'yes' if ok else 'NO'} "
            f"({first.eps_total:.4f} -> {second.eps_total:.4f})"
        )
        improved = all(second.eps_by_l[l] <= first.eps_by_l[l] for l in ls)
        messages.append(
            "advisory: per-channel error improves for every output l: "
            f"{'yes' if improved else 'NO'}"
        )
    eps_series = [r.eps_total for r in records]
    if len(eps_series) >= 2:
        knee = result.table.rows[plateau_knee(eps_series)][0]
        messages.append(f"advisory: eps_total flattens at l_h={knee:g}")
    return messages


def experiment3_advisories(result: Experiment3Result) -> list:
    messages = []
    for label, record in (("standard", result.standard), ("scaled", result.scaled)):
        final = record.norms[-1][-1]  # last epoch, last hidden layer
        ordered = all(a >= b for a, b in zip(final, final[1:]))
        messages.append(
            f"advisory: {label} run ends with norms decreasing in l "
            f"(multipole-like hierarchy): {'yes' if ordered else 'NO'}"
        )
    return messages
