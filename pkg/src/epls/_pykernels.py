"""Pure-Python/numpy fallback for the compiled kernels.

Must stay bit-identical to ``_ckernels.pyx``; ``tests/test_backends.py``
runs both on the same inputs.
"""

import numpy as np


def epls_assign(H, a, counts, increment, cap, strict, winners):
    for n in range(H.shape[0]):
        score = H[n] - a
        if strict:
            full = counts >= cap
            if not full.all():
                score[full] = -np.inf
        k = int(np.argmax(score))
        winners[n] = k
        counts[k] += 1
        a[k] = counts[k] * increment
