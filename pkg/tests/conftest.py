import numpy as np
import pytest
import torch


def finite_difference_check(module, loss_fn, seed=0, max_entries=6, eps=1e-4,
                            rel=1e-3):
    """Compare autograd gradients against central finite differences.

    Runs in whatever dtype the module carries (use float64 modules); checks
    every parameter tensor, sampling at most ``max_entries`` scalar entries
    from large tensors.
    """
    for p in module.parameters():
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    for name, p in module.named_parameters():
        flat = p.detach().view(-1)
        count = flat.numel()
        idxs = range(count) if count <= max_entries else \
            rng.choice(count, max_entries, replace=False)
        for i in idxs:
            i = int(i)
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + eps
            hi = loss_fn().item()
            with torch.no_grad():
                flat[i] = orig - eps
            lo = loss_fn().item()
            with torch.no_grad():
                flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            an = p.grad.view(-1)[i].item()
            assert an == pytest.approx(fd, rel=rel, abs=1e-8), f"{name}[{i}]"


@pytest.fixture
def fd_check():
    return finite_difference_check
