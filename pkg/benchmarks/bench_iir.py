"""Time the biquad cascade kernels: compiled, pure Python and scipy.

Usage::

    python benchmarks/bench_iir.py [--seconds 60] [--channels 4] [--repeat 3]

The input is ``channels`` rows of white noise at 256 Hz filtered by the
default preprocessing cascade (notch followed by the 1-75 Hz bandpass).
Outputs of every backend are checked against each other before timing.
"""
import argparse
import timeit

import numpy as np

from cogload import _backend, _pykernels
from cogload.sigproc import design_butterworth_bandpass, design_notch


def backends():
    out = {"python": _pykernels.cascade_filter}
    try:
        out["cython"] = _backend.get_kernels("cython").cascade_filter
    except ImportError:
        print("compiled kernels not built; timing the pure-Python path only")
    try:
        from scipy.signal import sosfilt
    except ImportError:
        pass
    else:
        def scipy_cascade(sections, x):
            sos = np.column_stack([sections[:, :3], np.ones(len(sections)), sections[:, 3:]])
            return sosfilt(sos, x, axis=-1)

        out["scipy"] = scipy_cascade
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=60.0, help="signal length per channel")
    ap.add_argument("--channels", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3, help="best-of repeats")
    args = ap.parse_args(argv)

    fs = 256.0
    filt = design_notch(60, 30, fs).then(design_butterworth_bandpass(1, 75, 2, fs))
    x = np.random.default_rng(0).standard_normal((args.channels, int(args.seconds * fs)))
    impls = backends()

    ref = impls["python"](filt.sections, x)
    for name, fn in impls.items():
        err = np.max(np.abs(fn(filt.sections, x) - ref))
        if err > 1e-9:
            raise SystemExit(f"{name} disagrees with the pure-Python kernel (max abs diff {err:.3g})")

    n = x.size
    print(f"{len(filt)} biquads, {args.channels} x {x.shape[1]} samples")
    print(f"{'backend':<8} {'best s':>10} {'Msamples/s':>12} {'vs python':>10}")
    times = {}
    for name, fn in impls.items():
        times[name] = min(timeit.repeat(lambda: fn(filt.sections, x), number=1, repeat=args.repeat))
    for name, t in times.items():
        print(f"{name:<8} {t:>10.4f} {n / t / 1e6:>12.2f} {times['python'] / t:>9.1f}x")
    print(f"selected backend at import: {_backend.BACKEND}")


if __name__ == "__main__":
    main()
