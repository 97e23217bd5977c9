"""Finite-difference gradient oracle, independent of autograd."""

import torch


def analytic_gradients(loss_fn, params):
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    return [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
            for p in params]


def fd_gradients(loss_fn, params, h=1e-5):
    """Central differences, one scalar parameter at a time."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * h)
            grads.append(g)
    return grads


def max_relative_error(analytic, fd):
    """Per-tensor norm-relative error, maximized over tensors.

    The denominator floor absorbs parameters whose true gradient is exactly
    zero (e.g. a convolution bias immediately followed by batch norm), where
    both routes return only numerical noise.
    """
    worst = 0.0
    for ga, gf in zip(analytic, fd):
        denom = max(ga.norm().item(), gf.norm().item(), 1e-6)
        worst = max(worst, (ga - gf).norm().item() / denom)
    return worst
