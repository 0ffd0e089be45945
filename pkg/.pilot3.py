"""Pilot 3: capacity sweep for the loss-ordering gate + DASA direction."""
import time

import torch

import share_hsi as sh
from share_hsi.losses import loss_share
from share_hsi.metrics import mpsnr
from share_hsi.network import NetworkConfig, RestorationNet
from share_hsi.trainer import cosine_lr
from share_hsi.transforms import sample

torch.set_num_threads(2)

rng = sh.RandomSource(99)
cube = sh.synthesize_lowrank_cube(8, 64, 64, 2, rng.child("gt"))
mask = sh.column_mask((8, 64, 64), 0.25, rng.child("mask"))
op = sh.InpaintOperator(mask)
y = sh.corrupt(op.apply(cube.tensor()), sh.NoiseModel("gaussian", sigma=25 / 255),
               rng.child("noise"))

EPOCHS = 600
for terms in (("sure", "rec"), ("mc", "rec"), ("mc",)):
    spec = sh.LossSpec(terms=terms, alpha=1.0, sigma=25 / 255, tau=0.01)
    root = sh.RandomSource(0)
    cfg = NetworkConfig(channels=32, bank_rank=4, bank_size=64,
                        init_seed=root.child("init-seed").derived_seed() % 2 ** 31)
    net = RestorationNet(8, cfg, op, (64, 64))
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    tsrc = root.child("transform-sampling")
    pgen = root.child("sure-probe").torch_generator()
    ngen = root.child("rec-noise").torch_generator()
    t0 = time.time()
    for epoch in range(EPOCHS):
        lr = cosine_lr(epoch, EPOCHS, 1e-3, 1e-4)
        for g in opt.param_groups:
            g["lr"] = lr
        T = sample("shift", tsrc.child(str(epoch)), 64, 64)
        total, bd = loss_share(net, op, y, spec, T, probe_rng=pgen, noise_rng=ngen)
        opt.zero_grad()
        total.backward()
        opt.step()
        if (epoch + 1) % 150 == 0:
            with torch.no_grad():
                psnr = mpsnr(torch.clamp(net(y), 0, 1).numpy(), cube.data)
            print(f"C32 {'+'.join(terms):9s} epoch {epoch+1:4d} loss {bd.total:8.4f} "
                  f"mpsnr {psnr:6.2f} ({time.time()-t0:.0f}s)", flush=True)

# DASA direction with zero-init back-projection, 3 seeds
cube_sr = sh.synthesize_lowrank_cube(8, 32, 32, 2, rng.child("gt-sr"))
op_sr = sh.BlurDownsampleOperator(sh.gaussian_kernel(7, 1.0), 2, boundary="circular")
y_sr = sh.corrupt(op_sr.apply(cube_sr.tensor()),
                  sh.NoiseModel("gaussian", sigma=25 / 255), rng.child("noise-sr"))
for dasa_on in (True, False):
    for seed in (0, 1, 2):
        t0 = time.time()
        spec = sh.LossSpec(terms=("sure", "rec"), alpha=1.0, sigma=25 / 255, tau=0.01)
        cfg = sh.TrainConfig(epochs=600, loss=spec, transform="scale",
                             net=sh.NetworkConfig(channels=16, bank_rank=4,
                                                  bank_size=64, dasa=dasa_on),
                             seed=seed)
        xhat, rep = sh.restore_single(y_sr, op_sr, cfg, reference=cube_sr)
        print(f"sr dasa={dasa_on} seed={seed}: best={rep.metrics['mpsnr']:.2f} "
              f"final={rep.final_metrics['mpsnr']:.2f} t={time.time()-t0:.0f}s",
              flush=True)
print("pilot3 done")
