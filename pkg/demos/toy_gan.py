"""Train a small generator on the two-cluster toy corpus and watch SWD fall.

Takes a few minutes on one core.  Pass ``--dp`` for the private variant.

    python demos/toy_gan.py [--dp] [--steps 400]
"""
import argparse

from trajcnn.codec import NormalizationSpec
from trajcnn.dp import DpConfig
from trajcnn.gan import DiscriminatorConfig, GeneratorConfig, TrainConfig, generate, train
from trajcnn.metrics import evaluate
from trajcnn.toy import SyntheticToySpec, make_toy_dataset

ap = argparse.ArgumentParser()
ap.add_argument("--dp", action="store_true")
ap.add_argument("--steps", type=int, default=400)
ap.add_argument("--width", type=int, default=16)
args = ap.parse_args()

# DP needs room for a 640-trajectory virtual batch
toy = make_toy_dataset(SyntheticToySpec(per_cluster=2500 if args.dp else 250))
spec = NormalizationSpec.from_bbox(toy.bbox)
cfg = TrainConfig(steps=args.steps, snapshot_every=max(1, args.steps // 8),
                  generator=GeneratorConfig(width=args.width), discriminator=DiscriminatorConfig(width=args.width))
res = train(cfg, toy, spec, dp=DpConfig() if args.dp else None)

for r in res.log:
    if r["event"] == "snapshot":
        print(f"step {r['step']:5d}  swd {r['swd']:.4f}  loss_d {r['loss_d'] or 0:.3f}  loss_g {r['loss_g'] or 0:.3f}")
if res.epsilon is not None:
    print(f"privacy: epsilon {res.epsilon:.3f} at delta {res.delta:.2e}")

# as many generated points as real ones
fake = generate(res.generator, len(toy), seed=1, spec=spec)
rep = evaluate(toy, fake, spec, n_projections=100, swd_samples=5000, seed=0)
print(f"HD {rep.hausdorff:.4f}  SWD {rep.sliced_wasserstein:.4f}  TTD {rep.ttd_wasserstein:.4f}  TRR {rep.trr:.3f}")
