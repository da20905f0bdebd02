"""Train on clean and pixel-poisoned synthetic data, then compare entropy maps.

    python3 demos/poison_audit.py [OUTDIR]

Writes two heatmaps and a compression table to OUTDIR (default: demo_out).
Takes under a minute on one core.
"""
import os
import sys

import numpy as np

from tnml import TrainConfig, entropy_map, evaluate, generate_synthetic, init_model, split_dataset, train
from tnml.analysis import compression_sweep
from tnml.poison import PoisonSpec, SinglePixel, apply_poison
from tnml.report import COMPRESSION_COLUMNS, heatmap_svg, rows_csv, write_text

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

ds = generate_synthetic(3000, 8, (16, 16), clutter_variance=0.005, seed=1, background=0.5, target=0.54)
train_ds, test_ds = split_dataset(ds, 0.7, seed=2)
cfg = TrainConfig(max_bond_dim=8, n_sweeps=4)


def fit(data):
    model, _ = train(init_model("ttn", 256, 8, image_shape=(16, 16)), data, None, cfg)
    return model


clean = fit(train_ds)
print(f"clean model: test accuracy {evaluate(clean, test_ds)[0]:.3f}")

# the attacker writes a label-dependent value into pixel (1, 1)
spec = PoisonSpec(SinglePixel(17), seed=11, n_classes=8)
poisoned = fit(apply_poison(train_ds, spec))
acc_p = evaluate(poisoned, apply_poison(test_ds, spec))[0]
acc_c = evaluate(poisoned, test_ds)[0]
print(f"poisoned model: accuracy {acc_p:.3f} on poisoned test data, {acc_c:.3f} on clean test data")

for name, model in (("clean", clean), ("poisoned", poisoned)):
    emap = entropy_map(model, name)
    write_text(os.path.join(out, f"entropy_{name}.svg"), heatmap_svg(emap.values, title=f"{name} model"))
    (r, c, v), = emap.top(1)
    print(f"{name}: highest entropy at pixel ({r}, {c}), {v:.4f} nats; median {np.median(emap.values):.2e}")

reports = compression_sweep(clean, [1e-6, 1e-4, 1e-3, 1e-2], test_ds)
write_text(os.path.join(out, "compression.csv"), rows_csv(COMPRESSION_COLUMNS, [r.as_row() for r in reports]))
for r in reports:
    print(f"eps {r.eps:g}: {r.ratio:.1%} of the parameters, accuracy {r.accuracy_after:.3f}")
