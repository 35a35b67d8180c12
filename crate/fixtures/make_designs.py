"""Regenerates the design fixtures in this directory (numpy, fixed seeds)."""

import numpy as np
from pathlib import Path

HERE = Path(__file__).parent / "designs"


def write(name, pts):
    with open(HERE / name, "w") as f:
        f.write("x,y\n")
        for x, y in pts:
            f.write(f"{x:.15g},{y:.15g}\n")


def lattice(m):
    g = np.linspace(0.0, 1.0, m)
    return np.array([(x, y) for x in g for y in g])


def main():
    write("regular_10x10.csv", lattice(10))
    # 100 of the 196 nodes of a 14 x 14 grid, chosen at random.
    full = lattice(14)
    keep = np.sort(np.random.default_rng(14).choice(len(full), size=100, replace=False))
    write("incomplete_14x14.csv", full[keep])
    # Perturbed grid: each node of a 10 x 10 grid with cell width h moves by
    # independent uniform offsets in [-eps*h, eps*h] per coordinate.
    eps, h = 0.499, 0.1
    centers = (np.arange(10) + 0.5) * h
    base = np.array([(x, y) for x in centers for y in centers])
    offsets = np.random.default_rng(499).uniform(-eps * h, eps * h, size=base.shape)
    write("hybrid_100.csv", base + offsets)
    write("uniform_100.csv", np.random.default_rng(100).uniform(size=(100, 2)))
    write("uniform_600.csv", np.random.default_rng(600).uniform(size=(600, 2)))


if __name__ == "__main__":
    main()
