"""How the KTD-CE terms react to predictions at different distances.

    python demos/loss_surface.py
"""
import numpy as np

from shotorder import ktdce
from shotorder.ktdce import LossConfig
from shotorder.permlab import build_ktd_matrix

K = build_ktd_matrix(3)
O = np.zeros((6, 6))
truth = np.array([0])

print("pred  d   CE      faithful  soft")
for pred in range(6):
    z = np.zeros((1, 6))
    z[0, pred] = 3.0
    faithful = ktdce.ktdce_loss(z, truth, K, O, LossConfig())
    soft = ktdce.ktdce_loss(z, truth, K, O, LossConfig(mode="soft"))
    print(f"{pred:4d}  {K[pred, 0]}  {faithful.ce_part:.3f}  {faithful.total:8.3f}  {soft.total:.3f}")

# faithful mode leaves the logits gradient untouched; soft mode does not
z = np.random.default_rng(0).normal(size=(4, 6))
y = np.array([0, 1, 2, 3])
ce = ktdce.ce_grad(z, y)
print("\nfaithful grad == CE grad:", np.array_equal(ktdce.grad_logits(z, y, K, O), ce))
print("soft grad - CE grad, max abs:", np.abs(ktdce.grad_logits(z, y, K, O, LossConfig(mode="soft")) - ce).max())

# the offset only moves where predictions land
g = ktdce.grad_offset(z, y, K, O + 0.01, LossConfig())
print("\nd loss / d O (faithful, pred_first):")
print(np.round(g, 3))
