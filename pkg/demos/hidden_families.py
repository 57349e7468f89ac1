"""Print the constant-width hidden layer families and their parameter cost.

hidden_config(l_h, N_s) trades scalar channels for higher-order ones while
keeping the layer dimension fixed, so runs that differ only in l_h compare
representational order rather than capacity. Raising l_h SHRINKS the weight
count: higher-order channels spend their dimension on components that share
weights, while every scalar channel buys its own.
"""

import argparse

from eqdens.density import default_basis
from eqdens.irreps import format_irreps, hidden_config
from eqdens.net import ModelConfig, param_count


def show_family(n_s: int, num_layers: int, output_spec) -> None:
    print(f"N_s = {n_s}, {num_layers} interaction layers")
    print(f"  {'l_h':>3} {'hidden layout':50s} {'dim':>5} {'params':>9}")
    for l_h in range(5):
        spec = hidden_config(l_h, n_s)
        config = ModelConfig(
            hidden_spec=spec, output_spec=output_spec, num_layers=num_layers
        )
        print(
            f"  {l_h:3d} {format_irreps(spec):50s} {spec.dim:5d} "
            f"{param_count(config):9d}"
        )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--layers", type=int, default=2)
    args = ap.parse_args()

    basis = default_basis()
    out = {s: basis.spec_for(s) for s in basis.species()}
    show_family(105, args.layers, out)
    print()
    show_family(8, args.layers, out)


if __name__ == "__main__":
    main()
