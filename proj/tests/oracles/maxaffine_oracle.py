"""Regenerates the seeded max-affine corpus function without the library.

MT19937-64 is written out here so the draw sequence can be checked against
the C++ standard library engine; uniforms use the top 53 bits of each draw.
The minimum is found by solving every 4-piece tie system with numpy and
keeping the feasible vertex of least value.

    python3 maxaffine_oracle.py [seed]
"""

import itertools
import sys

import numpy as np


class MT19937_64:
    N, M = 312, 156
    MATRIX_A = 0xB5026F5AA96619E9
    UPPER, LOWER = 0xFFFFFFFF80000000, 0x7FFFFFFF
    MASK = (1 << 64) - 1

    def __init__(self, seed):
        self.mt = [0] * self.N
        self.mt[0] = seed & self.MASK
        for i in range(1, self.N):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & self.MASK
        self.idx = self.N

    def _twist(self):
        for i in range(self.N):
            x = (self.mt[i] & self.UPPER) | (self.mt[(i + 1) % self.N] & self.LOWER)
            xa = x >> 1
            if x & 1:
                xa ^= self.MATRIX_A
            self.mt[i] = self.mt[(i + self.M) % self.N] ^ xa
        self.idx = 0

    def __call__(self):
        if self.idx >= self.N:
            self._twist()
        x = self.mt[self.idx]
        self.idx += 1
        x ^= (x >> 29) & 0x5555555555555555
        x ^= (x << 17) & 0x71D67FFFEDA60000
        x ^= (x << 37) & 0xFFF7EEE000000000
        x ^= x >> 43
        return x & self.MASK


def generate(seed):
    rng = MT19937_64(seed)
    unit = lambda: (rng() >> 11) * 2.0**-53
    grads = np.array([[2.0 * unit() - 1.0 for _ in range(3)] for _ in range(5)])
    offsets = np.array([unit() - 0.5 for _ in range(5)])
    grads -= grads.mean(axis=0)
    best = (np.inf, None)
    for tie in itertools.combinations(range(5), 4):
        a = np.hstack([grads[list(tie)], -np.ones((4, 1))])
        try:
            sol = np.linalg.solve(a, -offsets[list(tie)])
        except np.linalg.LinAlgError:
            continue
        x, t = sol[:3], sol[3]
        if np.all(grads @ x + offsets <= t + 1e-12) and t < best[0]:
            best = (t, x)
    return grads, offsets, best[0], best[1]


if __name__ == "__main__":
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 7
    g, b, t, x = generate(seed)
    print("first draw", MT19937_64(seed)())
    for row in g:
        print("grad", " ".join(repr(float(v)) for v in row))
    print("offsets", " ".join(repr(float(v)) for v in b))
    print("min_value", repr(float(t)))
    print("minimizer", " ".join(repr(float(v)) for v in x))
