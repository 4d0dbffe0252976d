"""Estimate global camera motion between two frames with sparse tracking.

Corners are detected on a textured frame, tracked into a translated copy with
pyramidal Lucas-Kanade, validated by forward-backward re-tracking, and reduced
to a single (dx, dy) by the component-wise median. Run:

    python demos/02_ego_motion_tracking.py
"""

import numpy as np

from gazeact.synthetic import make_textured_frame, translate_frame
from gazeact.tracking import detect_corners, fb_filter, median_flow, track_lk

true_shift = (3, 2)
frame_a = make_textured_frame((480, 640), seed=42)
frame_b = translate_frame(frame_a, *true_shift)

corners = detect_corners(frame_a, max_corners=200, quality=0.01, min_distance=8)
print(f"detected {len(corners)} corners (strongest first, spaced >= 8 px)")

tracked = track_lk(frame_a, frame_b, corners, window=15, levels=3)
ok = [p for p in tracked if p.status == "ok"]
print(f"tracked {len(ok)}/{len(tracked)} points forward")

validated = fb_filter(tracked, frame_a, frame_b, threshold=1.0)
survivors = [p for p in validated if p.status == "ok"]
fb_errors = np.array([p.fb_error for p in survivors])
print(f"forward-backward check kept {len(survivors)} points "
      f"(median fb error {np.median(fb_errors):.4f} px)")

est = median_flow(survivors)
print(f"\nmedian flow: ({est.dx:+.3f}, {est.dy:+.3f}) px/frame over {est.n_points} points")
print(f"true shift:  ({true_shift[0]:+d}, {true_shift[1]:+d})")
print(f"error:       {np.hypot(est.dx - true_shift[0], est.dy - true_shift[1]):.4f} px")

# the median shrugs off bad tracks: corrupt a third of them by 25 px
corrupted = list(survivors)
for i in range(0, len(corrupted), 3):
    p = corrupted[i]
    corrupted[i] = type(p)(p.origin, (p.destination[0] + 25.0, p.destination[1]))
est_bad = median_flow(corrupted)
print(f"\nafter corrupting every 3rd track by +25 px: ({est_bad.dx:+.3f}, {est_bad.dy:+.3f})")
