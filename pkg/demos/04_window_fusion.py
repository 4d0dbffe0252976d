"""From symbol streams to fused, labeled window features.

Each channel is histogrammed over 25 s sliding windows with a 1 s stride on a
shared clock, the blocks are concatenated (eye 25 + ego 25 + visual 15 = 65
dims), and every window takes the label covering most of its span. Run:

    python demos/04_window_fusion.py
"""

import numpy as np

from gazeact import PipelineConfig
from gazeact.evaluation import featurize_session, fit_channels
from gazeact.fusion import window_count
from gazeact.synthetic import make_synthetic_sessions

config = PipelineConfig(sample_rate=6.0, class_mode=5)
sessions = make_synthetic_sessions(seed=0, rate=config.sample_rate)
session = sessions[0]

span = session.labels.span()
print(f"session {session.key}: {span[1]:.0f} s, "
      f"{len(session.gaze)} gaze samples, {len(session.flows)} flow pairs, "
      f"{len(session.embeddings)} embeddings")
print(f"expected windows: floor(({span[1]:.0f} - {config.window_seconds:.0f}) / "
      f"{config.stride_seconds:.0f}) + 1 = "
      f"{window_count(span[1], config.window_seconds, config.stride_seconds)}")

# thresholds and the vocabulary come from training data; here we fit on the
# same session purely to inspect the feature layout
fit = fit_channels([session], config, ("eye", "ego", "visual"))
print(f"thresholds: gaze {tuple(round(t, 2) for t in fit.taus_gaze)}, "
      f"motion {tuple(round(t, 3) for t in fit.taus_motion)}")

windows = featurize_session(session, config, fit)
print(f"\nfeature matrix: {windows.matrix.shape} "
      f"(channels {'+'.join(windows.channels)}, {windows.n_dropped} windows dropped)")

row = windows.matrix[0]
print(f"first window (t_center {windows.centers[0]:.1f} s, label {windows.labels[0].value}):")
print(f"  eye block sums to    {row[:25].sum():.9f}")
print(f"  ego block sums to    {row[25:50].sum():.9f}")
print(f"  visual block sums to {row[50:].sum():.9f}")

labels = [lab.value for lab in windows.labels]
print("\nwindows per label:", {lab: labels.count(lab) for lab in sorted(set(labels))})
