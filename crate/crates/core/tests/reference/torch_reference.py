"""Regenerates the frozen values in tests/torch_reference.rs.

Inputs are the closed-form `wave(n, a, b)` sequences also built on the Rust
side; only outputs are printed. Run: python3 torch_reference.py
"""
import math

import torch
import torch.nn.functional as F

torch.set_default_dtype(torch.float64)


def wave(n, a, b, scale=1.0):
    return torch.tensor([scale * math.sin(a * i + b) for i in range(n)])


B, LEN, CIN, K, COUT, DENSE, CLASSES = 3, 7, 3, 3, 4, 2, 3
EPS = 1e-5

# Rust layouts: input [len, cin], conv weights [k, cin, cout], dense [n, m].
xs = [wave(LEN * CIN, 0.37, 0.1 + e).reshape(LEN, CIN).requires_grad_() for e in range(B)]
conv_w = wave(K * CIN * COUT, 0.61, 0.3, 0.5).reshape(K, CIN, COUT).requires_grad_()
conv_b = wave(COUT, 1.3, 0.2, 0.1).requires_grad_()
dense_w = wave(COUT * DENSE, 0.83, 0.5, 0.7).reshape(COUT, DENSE).requires_grad_()
dense_b = wave(DENSE, 0.9, 1.1, 0.1).requires_grad_()
gamma = (1.0 + wave(2 * DENSE, 0.5, 0.0, 0.3)).requires_grad_()
beta = wave(2 * DENSE, 0.7, 0.4, 0.2).requires_grad_()
head_w = wave(2 * DENSE * CLASSES, 0.45, 0.8, 0.6).reshape(2 * DENSE, CLASSES).requires_grad_()
head_b = wave(CLASSES, 1.7, 0.0, 0.1).requires_grad_()
labels = torch.tensor([0, 2, 1])

feats = []
for x in xs:
    conv = F.conv1d(x.T.unsqueeze(0), conv_w.permute(2, 1, 0), conv_b)  # [1, cout, 5]
    h = F.relu(conv)
    pooled = (F.max_pool1d(h, 2, 2) + F.avg_pool1d(h, 2, 2)) / 2  # [1, cout, 2]
    d = F.relu(pooled[0].T @ dense_w + dense_b)  # [2, dense]
    feats.append(d.reshape(-1))
flat = torch.stack(feats)
normed = F.batch_norm(flat, None, None, gamma, beta, training=True, eps=EPS)
logits = normed @ head_w + head_b
loss = F.cross_entropy(logits, labels)
loss.backward()


def show(name, t):
    vals = ", ".join(repr(float(v)) for v in t.detach().reshape(-1))
    print(f"const {name}: &[f64] = &[{vals}];")


print(f"const LOSS: f64 = {float(loss.detach())!r};")
show("LOGITS", logits)
show("D_CONV_W", conv_w.grad)
show("D_CONV_B", conv_b.grad)
show("D_DENSE_W", dense_w.grad)
show("D_GAMMA", gamma.grad)
show("D_BETA", beta.grad)
show("D_HEAD_W", head_w.grad)
show("D_X0", xs[0].grad)

# Adam: three steps on a fixed quadratic, default lr 1e-3.
w = wave(5, 0.9, 0.2).requires_grad_()
opt = torch.optim.Adam([w], lr=1e-3, betas=(0.9, 0.999), eps=1e-8)
for step in range(3):
    opt.zero_grad()
    ((w - 0.25 * step) ** 2).sum().backward()
    opt.step()
show("ADAM_W", w)
