"""Render the atmospheric scattering model over a parameter grid.

Generates one synthetic scene, synthesizes homogeneous haze for a grid of
atmospheric-light / scattering-coefficient values, and writes a contact
sheet.  Deeper pixels (larger d) lose more visibility, and larger beta
thickens the haze everywhere.
"""

from pathlib import Path

import numpy as np

from hazeattack import corpus, harness, hazemodel, imagecore

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

# a reproducible synthetic scene plus a left-to-right depth ramp
scene = corpus.render_example(label=7, index=0, seed=42)  # "rock"
depth = imagecore.synthetic_depth("h-ramp", 64, 64)

clean_png = OUT / "scene.png"
imagecore.save_image(scene, clean_png)
imagecore.save_depth(depth, OUT / "scene_depth.pfm")

print("single rendering: A=0.9, beta=0.1")
hazy = hazemodel.haze_homogeneous(scene, depth, hazemodel.HazeScalars(0.9, 0.1))
imagecore.save_image(hazy, OUT / "scene_hazy.png")
deviation = np.abs(hazy - scene).mean(axis=(1, 2))
print(f"  mean |H - I| at top row {deviation[0]:.4f} vs bottom row {deviation[-1]:.4f}")
print(f"  columns get hazier left to right: "
      f"{np.abs(hazy - scene).mean(axis=(0, 2))[[0, 31, 63]].round(4)}")

grid_png = OUT / "haze_grid.png"
harness.emit_haze_grid(clean_png, OUT / "scene_depth.pfm",
                       a_values=[0.8, 0.9, 1.0],
                       b_values=[0.05, 0.10, 0.15, 0.20],
                       out_path=grid_png)
print(f"3x4 parameter grid written to {grid_png}")
