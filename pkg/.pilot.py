"""Pilot for desk-scale acceptance gates (criteria 5-7)."""
import time

import torch

import share_hsi as sh

torch.set_num_threads(2)

rng = sh.RandomSource(99)
cube = sh.synthesize_lowrank_cube(8, 64, 64, 2, rng.child("gt"))
mask = sh.column_mask((8, 64, 64), 0.25, rng.child("mask"))
op = sh.InpaintOperator(mask)
y = sh.corrupt(op.apply(cube.tensor()), sh.NoiseModel("gaussian", sigma=25 / 255),
               rng.child("noise"))

net_cfg = sh.NetworkConfig(channels=16, spectral_depth=2, stages=2, patch_size=8,
                           bank_rank=4, bank_size=64)
base = sh.evaluate(torch.clamp(op.pseudo_inverse(y), 0, 1).numpy(), cube.data)
print("baseline H^dag y:", base, flush=True)

for terms in (("sure", "rec"), ("mc",), ("mc", "rec")):
    for seed in (0,):
        t0 = time.time()
        spec = sh.LossSpec(terms=terms, alpha=1.0, sigma=25 / 255, tau=0.01)
        cfg = sh.TrainConfig(epochs=600, loss=spec, transform="shift",
                             net=net_cfg, seed=seed)
        xhat, rep = sh.restore_single(y, op, cfg, reference=cube)
        print(f"inpaint terms={terms} seed={seed}: best={rep.metrics['mpsnr']:.2f} "
              f"final={rep.final_metrics['mpsnr']:.2f} "
              f"best_epoch={rep.best_epoch} t={time.time()-t0:.0f}s", flush=True)

# SR fixture: x2, gaussian 7x7 std 1, circular
cube_sr = sh.synthesize_lowrank_cube(8, 32, 32, 2, rng.child("gt-sr"))
op_sr = sh.BlurDownsampleOperator(sh.gaussian_kernel(7, 1.0), 2, boundary="circular")
y_sr = sh.corrupt(op_sr.apply(cube_sr.tensor()),
                  sh.NoiseModel("gaussian", sigma=25 / 255), rng.child("noise-sr"))
base_sr = sh.evaluate(torch.clamp(op_sr.pseudo_inverse(y_sr), 0, 1).numpy(), cube_sr.data)
print("baseline SR:", base_sr, flush=True)
for dasa_on in (True, False):
    for seed in (0, 1):
        t0 = time.time()
        spec = sh.LossSpec(terms=("sure", "rec"), alpha=1.0, sigma=25 / 255, tau=0.01)
        cfg = sh.TrainConfig(epochs=400, loss=spec, transform="scale",
                             net=sh.NetworkConfig(channels=16, bank_rank=4,
                                                  bank_size=64, dasa=dasa_on),
                             seed=seed)
        xhat, rep = sh.restore_single(y_sr, op_sr, cfg, reference=cube_sr)
        print(f"sr dasa={dasa_on} seed={seed}: best={rep.metrics['mpsnr']:.2f} "
              f"final={rep.final_metrics['mpsnr']:.2f} t={time.time()-t0:.0f}s",
              flush=True)
print("pilot done")
