"""Central finite-difference check of model gradients under the KTD-CE loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .. import ktdce
from ..ktdce import LossConfig
from ..permlab import build_ktd_matrix


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: str
    rel_errors: np.ndarray

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def relative_error(a, b, floor=1e-10):
    return abs(a - b) / max(abs(a), abs(b), floor)


def finite_diff_check(model, frames, cine, truths, offset=None, loss_config=LossConfig(mode="soft"),
                      n_params=64, h=1e-5, seed=0, names=None) -> GradCheckReport:
    """Compare autograd-through-model gradients with central differences.

    Run on a float64 model.  ``soft`` mode by default: the faithful distance
    term is piecewise constant and would only add jump noise.
    """
    K = build_ktd_matrix(model.config.k)
    n = model.config.num_classes
    O = np.zeros((n, n)) if offset is None else np.asarray(offset, dtype=np.float64)
    model.eval()

    def loss():
        with torch.no_grad():
            z = model(frames, cine).double().numpy()
        return ktdce.ktdce_loss(z, truths, K, O, loss_config).total

    model.zero_grad()
    logits = model(frames, cine)
    z = logits.detach().double().numpy()
    logits.backward(torch.from_numpy(ktdce.grad_logits(z, truths, K, O, loss_config)).to(logits.dtype))

    params = [(nm, p) for nm, p in model.named_parameters() if names is None or nm in names]
    sizes = np.array([p.numel() for _, p in params])
    rng = np.random.default_rng(seed)
    # sample parameter tensors proportionally to size, then a flat entry inside
    picks = rng.choice(len(params), size=n_params, p=sizes / sizes.sum())
    errors = []
    worst, worst_err = "", -1.0
    for which in picks:
        nm, p = params[which]
        flat = p.data.view(-1)
        j = int(rng.integers(flat.numel()))
        analytic = float(p.grad.view(-1)[j])
        orig = float(flat[j])
        flat[j] = orig + h
        up = loss()
        flat[j] = orig - h
        down = loss()
        flat[j] = orig
        numeric = (up - down) / (2 * h)
        err = relative_error(analytic, numeric)
        errors.append(err)
        if err > worst_err:
            worst, worst_err = f"{nm}[{j}]", err
    return GradCheckReport(float(max(errors)), len(errors), worst, np.array(errors))
