"""Render a small dataset, train a few epochs and report per-axis R².

    python3 demos/quickstart.py [workdir]

A 300-sample, 5-epoch run takes about two minutes on one core. The numbers
are far from the full 3000-sample, 30-epoch pipeline; the point is the flow.
"""

import sys
from pathlib import Path

from tactile_svae import analysis, data, svae

work = Path(sys.argv[1] if len(sys.argv) > 1 else "quickstart_out")

manifest = data.generate_dataset(300, seed=0, out_dir=work / "data")
print("splits:", manifest["split_sizes"])

ds = data.load_dataset(work / "data")


def progress(epoch, train_loss, val_loss):
    print(f"epoch {epoch:2d}  train {train_loss['total']:.4f}  val {val_loss['total']:.4f}")


ckpt = svae.train(ds, svae.SVAEArchitecture(), svae.LossConfig(alpha=1.0, beta=0.1),
                  svae.TrainConfig(epochs=5), callback=progress)
svae.save_checkpoint(ckpt, work / "model.svae")

report = analysis.evaluate(ckpt, ds.test)
for axis, value in zip(analysis.AXES, report.r2):
    print(f"  R2[{axis}] = {value:.3f}")
print(f"reconstruction MSE {report.recon_mse:.5f}")

# one image through the whole chain
mu, _ = svae.encode(ckpt, ds.test.images[0])
print("predicted wrench:", svae.predict_wrench(ckpt, mu)[0].round(3))
print("true wrench:     ", ds.test.wrenches[0].round(3))
