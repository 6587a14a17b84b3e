"""Dev calibration: full vs no_discriminator across seeds (criterion 6a)."""

import sys
import time
from pathlib import Path

import torch

from volsynth.ablation import run_ablation_suite, SUITES
from volsynth.dataset import DatasetManifest, generate_dataset
from volsynth.train import TrainConfig, TrainSetup

torch.set_num_threads(2)

EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 12
SEEDS = [int(s) for s in sys.argv[2].split(",")] if len(sys.argv) > 2 else [2, 3]

root = Path("/tmp/trend_data")
base = generate_dataset(root, n_samples=125, shape=(32, 32, 32), structure_count=5, seed=2024, folds=10, fold_index=0, force=True)
manifest = DatasetManifest(
    samples=base.samples,
    split={"train": list(range(100)), "test": list(range(100, 120)), "val": list(range(120, 125))},
    generator_params=base.generator_params,
    global_seed=base.global_seed,
    root=base.root,
)

setup = TrainSetup(train=TrainConfig(epochs=EPOCHS, batch_size=2, seed=1))
t0 = time.time()
report = run_ablation_suite(
    manifest, setup, SUITES["adversarial"], seeds=SEEDS,
    progress=lambda msg: print(f"[{time.time()-t0:7.1f}s] {msg}", flush=True),
)
print(f"\ntotal {time.time()-t0:.0f}s epochs={EPOCHS}")
for row in report.rows:
    for per in row.per_seed:
        print(f"{row.label:12s} seed={per['seed']} mae={per['mae']:.4f} psnr={per['psnr']:.3f} ms_ssim={per['ms_ssim']:.4f} fid={per['fid']:.4f}")
