"""Command-line entry point.

Subcommands: gen-data, train, exp1, exp2, exp3, eval. Each accepts
``--config FILE`` (key = value lines mirroring ExperimentConfig fields),
``--seed N`` (master seed: derives the five pipeline seeds unless the
config file pins them individually), and ``--out PATH`` (output directory;
for gen-data, the dataset file to write).
"""

import argparse
import os
import sys
from dataclasses import replace

from .. import data
from ..density import DensityError, default_basis
from ..net import ModelError
from .harness import (
    NORM_LABELS,
    ExperimentConfig,
    ExperimentError,
    evaluate_checkpoint,
    experiment1,
    experiment1_advisories,
    experiment2,
    experiment3,
    experiment3_advisories,
    train,
)
from .report import (
    ReportError,
    Table,
    emit_csv,
    emit_svg_plot,
    record_series_table,
    record_summary_table,
)


def _int_tuple(text: str) -> tuple:
    parts = text.replace(",", " ").split()
    if not parts:
        raise ValueError(text)
    return tuple(int(p) for p in parts)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(text)


FIELD_PARSERS = {
    "experiment": int,
    "n_train": int,
    "n_test": int,
    "molecules": int,
    "l_h": _int_tuple,
    "lmax_o": _int_tuple,
    "n_s": int,
    "num_layers": int,
    "hidden_irreps": str,
    "truncate": int,
    "scaled": _bool,
    "epochs": int,
    "learning_rate": float,
    "batch_size": int,
    "data_seed": int,
    "teacher_seed": int,
    "split_seed": int,
    "model_seed": int,
    "shuffle_seed": int,
    "eval_structures": int,
    "probe_structures": int,
    "spacing": float,
    "padding": float,
    "out_dir": str,
}

# the seeds a bare --seed N expands into, in a fixed order
SEED_FIELDS = ("data_seed", "teacher_seed", "split_seed", "model_seed", "shuffle_seed")


def parse_config_text(text: str) -> dict:
    """Key = value lines into typed ExperimentConfig overrides."""
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ExperimentError(
                f"config line {lineno}: expected 'key = value', got {raw!r}"
            )
        if key not in FIELD_PARSERS:
            raise ExperimentError(
                f"config line {lineno}: unknown key {key!r} "
                f"(valid: {', '.join(sorted(FIELD_PARSERS))})"
            )
        try:
            overrides[key] = FIELD_PARSERS[key](value)
        except ValueError:
            raise ExperimentError(
                f"config line {lineno}: bad value {value!r} for {key}"
            ) from None
    return overrides


def build_config(config_path, seed, out_dir) -> ExperimentConfig:
    overrides = {}
    if config_path:
        with open(config_path) as fh:
            overrides.update(parse_config_text(fh.read()))
    if seed is not None:
        for offset, name in enumerate(SEED_FIELDS):
            overrides.setdefault(name, seed + offset)
    if out_dir is not None:
        overrides["out_dir"] = out_dir
    return ExperimentConfig(**overrides)


def _ensure_out(config: ExperimentConfig) -> str:
    out = config.out_dir or "runs"
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_gen_data(args) -> int:
    config = build_config(args.config, args.seed, None)
    geometries = data.generate_clusters(
        config.n_train + config.n_test, config.molecules, seed=config.data_seed
    )
    ds = data.teacher_targets(
        geometries, default_basis(), teacher_seed=config.teacher_seed
    )
    if config.truncate >= 0:
        ds = data.truncate_dataset(ds, config.truncate)
    if config.scaled:
        ds = data.scale_dataset(ds)
    path = args.out or "dataset.txt.gz"
    data.save_dataset(ds, path)
    print(f"wrote {len(ds.entries)} structures to {path}")
    return 0


def _cmd_train(args) -> int:
    config = build_config(args.config, args.seed, args.out)
    config = replace(config, out_dir=config.out_dir or "runs")
    out = _ensure_out(config)
    record = train(config)
    emit_csv(record_series_table(record), os.path.join(out, "run.csv"))
    emit_csv(record_summary_table(record), os.path.join(out, "summary.csv"))
    emit_svg_plot(
        {"train loss": record.losses},
        os.path.join(out, "loss.svg"),
        title="training loss",
        xlabel="epoch",
        ylabel="mean squared error",
        log_y=True,
    )
    print(
        f"trained {record.param_count} parameters for {config.epochs} epochs "
        f"in {record.wall_time:.1f}s"
    )
    print(f"final loss {record.losses[-1]:.6g}, eps_total {record.eps_total:.4f}%")
    return 0


def _advisory_lines(messages, out, name) -> None:
    for message in messages:
        print(message)
    with open(os.path.join(out, name), "w") as fh:
        fh.write("\n".join(messages) + "\n")


def _cmd_exp1(args) -> int:
    config = build_config(args.config, args.seed, args.out)
    config = replace(config, experiment=1, out_dir=config.out_dir or "runs")
    out = _ensure_out(config)
    result = experiment1(config)
    emit_csv(result.table, os.path.join(out, "exp1.csv"))
    ls = [l for l, _ in result.records[0].eps_l]
    series = {
        f"l_h={l}": [record.eps_by_l[lo] for lo in ls]
        for l, record in zip(config.l_h, result.records)
    }
    emit_svg_plot(
        series,
        os.path.join(out, "exp1_channels.svg"),
        title="density error by output channel",
        xlabel="output l",
        ylabel="eps_l (%)",
        x=ls,
    )
    _advisory_lines(experiment1_advisories(result), out, "exp1_advisories.txt")
    print(f"wrote {os.path.join(out, 'exp1.csv')}")
    return 0


def _cmd_exp2(args) -> int:
    config = build_config(args.config, args.seed, args.out)
    config = replace(config, experiment=2, out_dir=config.out_dir or "runs")
    out = _ensure_out(config)
    result = experiment2(config)
    emit_csv(result.table, os.path.join(out, "exp2.csv"))
    emit_csv(result.plateau, os.path.join(out, "exp2_plateau.csv"))
    by_lmax = {}
    for lmax_o, l_h, _, eps in result.table.rows:
        by_lmax.setdefault(lmax_o, []).append(eps)
    emit_svg_plot(
        {f"lmax_o={lo}": eps for lo, eps in by_lmax.items()},
        os.path.join(out, "exp2.svg"),
        title="density error on truncated outputs",
        xlabel="hidden l_h",
        ylabel="eps_total (%)",
        x=list(config.l_h),
    )
    for lmax_o, knee in result.plateau.rows:
        print(f"lmax_o={lmax_o:g}: eps_total flattens at l_h={knee:g}")
    print(f"wrote {os.path.join(out, 'exp2.csv')}")
    return 0


def _cmd_exp3(args) -> int:
    config = build_config(args.config, args.seed, args.out)
    config = replace(config, experiment=3, out_dir=config.out_dir or "runs")
    out = _ensure_out(config)
    result = experiment3(config)
    for label, record in (("standard", result.standard), ("scaled", result.scaled)):
        emit_csv(record_series_table(record), os.path.join(out, f"exp3_{label}.csv"))
        last_layer = len(record.norms[0]) - 1
        series = {
            NORM_LABELS.get(l, f"l={l}"): [
                record.norms[epoch][last_layer][i] for epoch in range(len(record.norms))
            ]
            for i, l in enumerate(record.norm_ls)
        }
        emit_svg_plot(
            series,
            os.path.join(out, f"exp3_{label}.svg"),
            title=f"feature norms through training ({label} labels)",
            xlabel="epoch",
            ylabel="mean |feature|^2 / (2l+1)",
            log_y=True,
        )
    _advisory_lines(experiment3_advisories(result), out, "exp3_advisories.txt")
    print(f"wrote {os.path.join(out, 'exp3_standard.csv')} and exp3_scaled.csv")
    return 0


def _cmd_eval(args) -> int:
    config = build_config(args.config, args.seed, args.out)
    eps_total, eps_l = evaluate_checkpoint(args.checkpoint, config)
    columns = ("eps_total",) + tuple(f"eps_{l}" for l in sorted(eps_l))
    row = (eps_total,) + tuple(eps_l[l] for l in sorted(eps_l))
    print(f"eps_total {eps_total:.4f}%")
    for l in sorted(eps_l):
        print(f"eps_{l} {eps_l[l]:.4f}%")
    if config.out_dir:
        out = _ensure_out(config)
        emit_csv(Table(columns, (row,)), os.path.join(out, "eval.csv"))
        print(f"wrote {os.path.join(out, 'eval.csv')}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="eqdens",
        description="equivariant density-coefficient models: data, training, sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("gen-data", _cmd_gen_data, "generate a teacher-labeled cluster dataset"),
        ("train", _cmd_train, "train one model and record its run"),
        ("exp1", _cmd_exp1, "sweep hidden l, report per-channel density errors"),
        ("exp2", _cmd_exp2, "cross hidden l with output truncation levels"),
        ("exp3", _cmd_exp3, "track hidden feature norms on standard and scaled labels"),
        ("eval", _cmd_eval, "recompute density errors from a checkpoint"),
    )
    for name, handler, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="master seed for all pipeline stages")
        p.add_argument(
            "--out",
            help="output directory (gen-data: dataset file path)",
        )
        if name == "eval":
            p.add_argument("--checkpoint", required=True, help="model checkpoint file")
        p.set_defaults(handler=handler)
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (
        ExperimentError,
        ReportError,
        DensityError,
        ModelError,
        data.DataError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
