"""Inspect a trained model's latent space.

    python3 demos/latent_study.py model.svae dataset_dir [outdir]

Writes a traversal mosaic (PGM) for the latent coordinates most correlated
with the grip force, prints the latent correlation summary, and compares
matched land and water renders.
"""

import sys
from pathlib import Path

import numpy as np

from tactile_svae import analysis, data, svae

ckpt = svae.load_checkpoint(sys.argv[1])
ds = data.load_dataset(sys.argv[2])
out = Path(sys.argv[3] if len(sys.argv) > 3 else "latent_out")
out.mkdir(parents=True, exist_ok=True)

cm = analysis.latent_correlation(ckpt, ds.test)
print(f"mean |corr| between latent coordinates: {cm.mean_abs_offdiag():.3f}")

lw = analysis.latent_wrench_correlation(ckpt, ds.test)
fy = np.nan_to_num(np.abs(lw.values[:, 1]))
top = [int(k) for k in np.argsort(fy)[::-1][:4]]
print("coordinates most tied to fy:", {k: round(float(lw.values[k, 1]), 3) for k in top})

grid = analysis.latent_traversal(ckpt, top, (-3.0, 3.0), 9)
analysis.write_pgm_mosaic(out / "traversal_fy.pgm", grid)
print("traversal mosaic ->", out / "traversal_fy.pgm")

print("collapsed coordinates:", analysis.collapsed_dims(ckpt, 1e-3))

land, water, wrenches, _ = data.generate_pairs(100, seed=7)
rep = analysis.domain_shift_report(ckpt, land, water, wrenches)
print(f"land/water: mean cosine {rep['mean_cosine_similarity']:.3f}, "
      f"mean R2 land {rep['land']['mean_r2']:.3f} vs water {rep['water']['mean_r2']:.3f}")
