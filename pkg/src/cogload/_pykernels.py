"""Pure-Python reference kernels, used when the compiled extension is absent."""
import numpy as np


def cascade_filter(sections, x):
    """Filter every row of ``x`` through the cascade, zero initial state.

    ``sections`` rows are ``(b0, b1, b2, a1, a2)``; returns a new array.
    """
    out = np.array(x, dtype=np.float64, copy=True)
    coeffs = [tuple(float(c) for c in row) for row in sections]
    for r in range(out.shape[0]):
        row = out[r].tolist()
        for b0, b1, b2, a1, a2 in coeffs:
            z1 = z2 = 0.0
            for i, xi in enumerate(row):
                yi = b0 * xi + z1
                z1 = b1 * xi - a1 * yi + z2
                z2 = b2 * xi - a2 * yi
                row[i] = yi
        out[r] = row
    return out
