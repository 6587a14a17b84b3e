"""Dev calibration: how many epochs until the desk model clears MS-SSIM 0.80.

Trains the default setup on the criterion-scale dataset (100 train /
20 test at 32^3) for one seed, logging validation metrics per epoch.
Not part of the deliverable test suite.
"""

import sys
import time
from pathlib import Path

import torch

from volsynth.dataset import generate_dataset
from volsynth.evaluation import evaluate_generator
from volsynth.train import TrainConfig, TrainSetup, create_state, load_split_tensors, train_step, _validation_metrics
from volsynth.seeds import derive_seed
import dataclasses
import numpy as np

torch.set_num_threads(2)

out = Path("/tmp/calib_data")
t0 = time.time()
manifest = generate_dataset(out, n_samples=125, shape=(32, 32, 32), structure_count=5, seed=1234, folds=10, fold_index=0)
print(f"dataset: {time.time()-t0:.1f}s; splits:", {k: len(v) for k, v in manifest.split.items()})

setup = TrainSetup(train=TrainConfig(epochs=40, batch_size=2, seed=1))
state = create_state(setup)
x_train, y_train, _ = load_split_tensors(manifest, "train")
x_test, y_test, _ = load_split_tensors(manifest, "test")
n = x_train.shape[0]
print("train size:", n)

steps_per_epoch = (n + 1) // 2
for epoch in range(40):
    te = time.time()
    perm = np.random.default_rng(derive_seed(1, "shuffle", epoch)).permutation(n)
    for b in range(steps_per_epoch):
        idx = perm[b * 2 : (b + 1) * 2]
        log = train_step(state, x_train[idx], y_train[idx], setup)
    val = _validation_metrics(state, x_test, y_test)
    print(
        f"epoch {epoch:3d}  {time.time()-te:6.1f}s  l1={log.l1:.4f} adv={log.g_adv:.4f} d={log.d_loss:.4f} "
        f"klf={log.kl_forward:.3f}  val_mae={val['mae']:.4f} val_msssim={val['ms_ssim']:.4f}",
        flush=True,
    )
