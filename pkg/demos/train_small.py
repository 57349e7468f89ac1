"""Fit a small model to teacher densities and report the density error.

Runs a scaled-down version of the full pipeline in about a minute: generate
clusters, label them with the frozen teacher, train for a few epochs, then
integrate the error of the predicted density on a real-space grid. Writes
loss.svg next to the chosen output directory.
"""

import argparse
import pathlib

from eqdens.exp import ExperimentConfig, emit_svg_plot, train


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=2025)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = ExperimentConfig(
        n_train=24,
        n_test=8,
        molecules=2,
        l_h=(1,),
        n_s=4,
        epochs=args.epochs,
        batch_size=6,
        eval_structures=4,
        probe_structures=4,
        data_seed=args.seed,
        out_dir=str(out),
    )
    print(f"training: {config.n_train} clusters, {config.epochs} epochs, l_h=1")
    record = train(config)

    first, last = record.losses[0], record.losses[-1]
    print(f"loss {first:.4f} -> {last:.4f} ({record.wall_time:.1f}s)")
    print(f"eps_total {record.eps_total:.2f}%  ({record.param_count} parameters)")
    for l, eps in record.eps_l:
        print(f"  eps_{l} = {eps:.2f}%")

    emit_svg_plot(
        {"train loss": list(record.losses)},
        out / "loss.svg",
        title="small fit",
        xlabel="epoch",
        ylabel="mean squared coefficient error",
        log_y=True,
    )
    print(f"wrote {out / 'loss.svg'} and {out / 'model.ckpt'}")


if __name__ == "__main__":
    main()
