"""Trajectory diagnostic: PSNR vs epoch for the three loss-term sets."""
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

EPOCHS = 2000
for terms in (("sure", "rec"), ("mc", "rec"), ("mc",)):
    spec = sh.LossSpec(terms=terms, alpha=1.0, sigma=25 / 255, tau=0.01)
    root = sh.RandomSource(0)
    cfg = NetworkConfig(channels=16, bank_rank=4, bank_size=64,
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
        if (epoch + 1) % 200 == 0:
            with torch.no_grad():
                psnr = mpsnr(torch.clamp(net(y), 0, 1).numpy(), cube.data)
            print(f"{'+'.join(terms):10s} epoch {epoch+1:5d} loss {bd.total:8.4f} "
                  f"mpsnr {psnr:6.2f} ({time.time()-t0:.0f}s)", flush=True)
print("pilot2 done")
