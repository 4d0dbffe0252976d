"""Walk a synthetic gaze trace through the symbol encoding chain.

A fixation/saccade signal is median filtered, wavelet-transformed per axis,
quantized into 5 levels, and joined into one of 25 motion symbols. Run:

    python demos/01_gaze_symbol_encoding.py
"""

import numpy as np

from gazeact import PipelineConfig
from gazeact.encoding import (
    decode_joint,
    encode_joint,
    haar_cwt,
    median_filter,
    quantize,
    estimate_thresholds,
)

rng = np.random.default_rng(0)
rate = 30.0
config = PipelineConfig(sample_rate=rate)

# --- a gaze x-trace: fixations with occasional saccadic jumps -----------------
n = 600
x = np.empty(n)
pos = 320.0
for i in range(n):
    if rng.random() < 0.05:  # saccade roughly every 2/3 s at 30 Hz
        pos += rng.normal(0, 80)
    x[i] = pos + rng.normal(0, 0.8)
y = np.full(n, 240.0) + rng.normal(0, 0.8, n)

# --- the chain, one stage at a time -------------------------------------------
x_f = median_filter(x, config.median_filter_width)
y_f = median_filter(y, config.median_filter_width)
cx = haar_cwt(x_f, config.wavelet_scale)
cy = haar_cwt(y_f, config.wavelet_scale)
print(f"signal length {n}, wavelet scale {config.wavelet_scale}")
print(f"|Cx| range: {np.abs(cx.values).min():.3f} .. {np.abs(cx.values).max():.3f}")

taus = estimate_thresholds([cx.values, cy.values])
print(f"estimated thresholds: tau_small={taus[0]:.3f}, tau_large={taus[1]:.3f}")

qx = quantize(cx, *taus)
qy = quantize(cy, *taus)
codes = encode_joint(qx, qy)

# --- what the stream looks like ------------------------------------------------
counts = np.bincount(codes, minlength=25)
print("\nsymbol histogram (code: count), center symbol 12 = no motion:")
for code in np.argsort(-counts)[:8]:
    dx, dy = decode_joint([code])
    print(f"  {code:2d} (qx={int(dx[0]):+d}, qy={int(dy[0]):+d}): {counts[code]}")
print(f"\nfraction of 'still' symbols (code 12): {counts[12] / n:.2f}")
print("saccades show up as short runs of extreme-level symbols around each jump")
