"""Drive predicted probabilities toward a logical constraint by descending
the semantic loss.

Builds a circuit-backed module for the constraint, then runs projected
gradient descent from a uniform (or supplied) starting row, printing the
loss trajectory and the final probabilities. The default constraint is
(A -> B) & (C -> B). Typical invocation:

    python3 scripts/train_constraint.py --steps 100 --step-size 0.05
"""

import argparse

import numpy as np

from nesycirc.factory import ModuleFactory
from nesycirc.formula import make_name_table, parse_formula
from nesycirc.tasks import descend_semantic_loss


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--formula", default="(A -> B) & (C -> B)")
    ap.add_argument("--names", default="A,B,C",
                    help="comma-separated variable names in id order")
    ap.add_argument("--start", type=float, nargs="+", default=None,
                    help="starting probabilities (default uniform 0.5)")
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--step-size", type=float, default=0.05)
    ap.add_argument("--bounds", type=float, nargs=2, default=(0.001, 0.999))
    args = ap.parse_args()

    names = [n.strip() for n in args.names.split(",")]
    f = parse_formula(args.formula, make_name_table(names))
    module = ModuleFactory().build_formula_module(f, "probability")

    start = args.start if args.start is not None else [0.5] * len(names)
    if len(start) != len(names):
        ap.error(f"{len(start)} starting values for {len(names)} names")
    losses, final = descend_semantic_loss(module, start, steps=args.steps,
                                          step_size=args.step_size,
                                          bounds=tuple(args.bounds))

    print(f"constraint: {args.formula}")
    stride = max(1, args.steps // 10)
    for i in range(0, len(losses), stride):
        print(f"step {i:4d}  loss {losses[i]:.6f}")
    if (len(losses) - 1) % stride:
        print(f"step {len(losses) - 1:4d}  loss {losses[-1]:.6f}")
    print("final probabilities:")
    for name, p in zip(names, final):
        print(f"  {name} = {p:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
