#!/usr/bin/env python3
"""Generate the synthetic 32x32 two-domain digit dataset used by desk-scale runs.

Usage: python scripts/make_toy_dataset.py [--root data/digits] [--n-train 500]
"""

import argparse

from maskcyclegan import toydata


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="data/digits")
    parser.add_argument("--n-train", type=int, default=500)
    parser.add_argument("--n-test", type=int, default=100)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    root = toydata.make_dataset(args.root, n_train=args.n_train, n_test=args.n_test,
                                size=args.size, seed=args.seed)
    print(f"wrote {args.n_train}+{args.n_test} images per domain under {root}")


if __name__ == "__main__":
    main()
