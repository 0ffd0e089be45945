"""Pilot 6: higher constant lr to force the MC branch into noise overfitting."""
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
print("noise floor:", (25 / 255) ** 2 * 0.75, flush=True)

EPOCHS = 2000
for lr in (3e-3,):
    for alpha in (1.0, 0.25):
        for terms in (("mc", "rec"), ("sure", "rec")):
            spec = sh.LossSpec(terms=terms, alpha=alpha, sigma=25 / 255, tau=0.01)
            root = sh.RandomSource(0)
            cfg = NetworkConfig(channels=16, bank_rank=4, bank_size=64,
                                init_seed=root.child("init-seed").derived_seed() % 2 ** 31)
            net = RestorationNet(8, cfg, op, (32, 32))
            net.train()
            opt = torch.optim.Adam(net.parameters(), lr=lr)
            tsrc = root.child("transform-sampling")
            pgen = root.child("sure-probe").torch_generator()
            ngen = root.child("rec-noise").torch_generator()
            t0 = time.time()
            best = -1e9
            for epoch in range(EPOCHS):
                T = sample("shift", tsrc.child(str(epoch)), 32, 32)
                total, bd = loss_share(net, op, y, spec, T,
                                       probe_rng=pgen, noise_rng=ngen)
                opt.zero_grad()
                total.backward()
                opt.step()
                if (epoch + 1) % 250 == 0:
                    with torch.no_grad():
                        psnr = mpsnr(torch.clamp(net(y), 0, 1).numpy(), cube.data)
                    best = max(best, psnr)
                    print(f"lr={lr} a={alpha} {'+'.join(terms):9s} "
                          f"epoch {epoch+1:5d} fid {bd.fidelity:8.5f} "
                          f"mpsnr {psnr:6.2f} best-so-far {best:6.2f} "
                          f"({time.time()-t0:.0f}s)", flush=True)
print("pilot6 done", flush=True)
