"""Pilot 4: does constant-lr training reach the noise-pass-through regime,
and does the unbiased-risk fidelity resist it? Small scale for speed."""
import time

import torch

import share_hsi as sh
from share_hsi.losses import loss_share
from share_hsi.metrics import mpsnr
from share_hsi.network import NetworkConfig, RestorationNet
from share_hsi.transforms import sample

torch.set_num_threads(2)

rng = sh.RandomSource(99)
cube = sh.synthesize_lowrank_cube(8, 32, 32, 2, rng.child("gt32"))
mask = sh.column_mask((8, 32, 32), 0.25, rng.child("mask32"))
op = sh.InpaintOperator(mask)
y = sh.corrupt(op.apply(cube.tensor()), sh.NoiseModel("gaussian", sigma=25 / 255),
               rng.child("noise32"))
print("noise floor (sigma^2 * observed fraction):",
      (25 / 255) ** 2 * 0.75, flush=True)

EPOCHS = 1500
for terms in (("mc",), ("sure",), ("mc", "rec"), ("sure", "rec")):
    spec = sh.LossSpec(terms=terms, alpha=1.0, sigma=25 / 255, tau=0.01)
    root = sh.RandomSource(0)
    cfg = NetworkConfig(channels=16, bank_rank=4, bank_size=64,
                        init_seed=root.child("init-seed").derived_seed() % 2 ** 31)
    net = RestorationNet(8, cfg, op, (32, 32))
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)  # constant lr
    tsrc = root.child("transform-sampling")
    pgen = root.child("sure-probe").torch_generator()
    ngen = root.child("rec-noise").torch_generator()
    t0 = time.time()
    for epoch in range(EPOCHS):
        T = sample("shift", tsrc.child(str(epoch)), 32, 32)
        total, bd = loss_share(net, op, y, spec, T, probe_rng=pgen, noise_rng=ngen)
        opt.zero_grad()
        total.backward()
        opt.step()
        if (epoch + 1) % 250 == 0:
            with torch.no_grad():
                psnr = mpsnr(torch.clamp(net(y), 0, 1).numpy(), cube.data)
            print(f"{'+'.join(terms):9s} epoch {epoch+1:5d} "
                  f"fid {bd.fidelity:8.5f} total {bd.total:8.5f} "
                  f"mpsnr {psnr:6.2f} ({time.time()-t0:.0f}s)", flush=True)
print("pilot4 done", flush=True)
