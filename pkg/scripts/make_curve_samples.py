#!/usr/bin/env python3
"""Generate the demonstration curve shipped as examples/curve_samples.csv.

200 noisy points around a quadratic Bezier arc starting at (0.3, -0.5) --
the initial position of the christoffel_double_integrator scenario -- and
bending up to (0.7, 0.6).  The jitter mimics real demonstration data and
keeps the empirical moment matrix well conditioned (exact curve samples
span a rank-deficient monomial space).  Fully deterministic; rerunning
reproduces the file byte for byte.
"""

import os

import numpy as np

P0 = np.array([0.3, -0.5])
P1 = np.array([1.0, -0.1])
P2 = np.array([0.7, 0.6])
N = 200
NOISE = 0.03
SEED = 20240614


def main() -> None:
    s = np.linspace(0.0, 1.0, N)[:, None]
    pts = (1 - s) ** 2 * P0 + 2 * s * (1 - s) * P1 + s**2 * P2
    pts = pts + np.random.default_rng(SEED).normal(0.0, NOISE, pts.shape)
    out = os.path.join(os.path.dirname(__file__), "..", "src", "momentflow",
                       "examples", "curve_samples.csv")
    with open(os.path.abspath(out), "w") as fh:
        fh.write("c1,c2\n")
        for row in pts:
            fh.write(f"{row[0]:.12g},{row[1]:.12g}\n")
    print(f"wrote {N} samples to {os.path.abspath(out)}")


if __name__ == "__main__":
    main()
