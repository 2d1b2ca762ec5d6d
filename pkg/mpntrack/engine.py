#!/usr/bin/env python
# -*- coding: utf-8 -*-

''' Dense-network engine: parameter container, tape, Adam and gradient checks.

    Reverse-mode differentiation is torch autograd.  A Tape records the
    outputs of every primitive application in the order they were produced,
    so ``backward`` can seed the sweep from the last one, and counts rows
    per primitive kind for cost instrumentation.
'''

import logging
from collections import Counter

import numpy as np
import torch
import torch.nn as nn

from mpntrack.encoders.linear import MlpSpec, build_mlp

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


class Tape:
    def __init__(self):
        self.records = []
        self.counts  = Counter()

        return None


    def record(self, kind, output, rows = 1):
        self.records.append((kind, output))
        self.counts[kind] += int(rows)

        return output


    def __len__(self):
        return len(self.records)




class ModelParams(nn.Module):
    ''' Named networks plus the optimizer state that trains them.  '''

    def __init__(self):
        super().__init__()
        self.networks   = nn.ModuleDict()
        self.specs      = {}
        self.optimizer  = None
        self.opt_config = None
        self.step_count = 0
        self.metadata   = {}


    def add(self, name, spec):
        if name in self.networks:
            raise ValueError(f"Network {name} already exists.")
        self.networks[name] = build_mlp(spec)
        self.specs[name]    = spec

        return self.networks[name]


    def __getitem__(self, name):
        if name not in self.networks:
            raise KeyError(f"Missing network: {name}")
        return self.networks[name]


    def __contains__(self, name):
        return name in self.networks


    def require(self, names):
        missing = [ name for name in names if name not in self.networks ]
        if missing:
            raise KeyError(f"Missing networks: {', '.join(missing)}")


    def configure_optimizers(self, lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8,
                                   weight_decay = 1e-4, decoupled_weight_decay = False):
        ''' Create the Adam optimizer on first use, refresh its hyperparameters after.

            Bias vectors are kept out of weight decay.
        '''
        opt_config = dict( lr = lr, beta1 = beta1, beta2 = beta2, eps = eps,
                           weight_decay = weight_decay,
                           decoupled_weight_decay = decoupled_weight_decay, )

        if self.optimizer is None or self.opt_config["decoupled_weight_decay"] != decoupled_weight_decay:
            decay, no_decay = [], []
            for name, p in self.networks.named_parameters():
                (no_decay if name.endswith("bias") else decay).append(p)
            groups = [ { "params" : decay   , "weight_decay" : weight_decay },
                       { "params" : no_decay, "weight_decay" : 0.0          }, ]
            opt_cls = torch.optim.AdamW if decoupled_weight_decay else torch.optim.Adam
            self.optimizer = opt_cls(groups, lr = lr, betas = (beta1, beta2), eps = eps)
        else:
            for group_id, group in enumerate(self.optimizer.param_groups):
                group["lr"]           = lr
                group["betas"]        = (beta1, beta2)
                group["eps"]          = eps
                group["weight_decay"] = weight_decay if group_id == 0 else 0.0

        self.opt_config = opt_config

        return self.optimizer


    def save_checkpoint(self, path, metadata = None):
        chkpt = {
            "format_version" : CHECKPOINT_FORMAT_VERSION,
            "specs"          : { name : spec.to_dict() for name, spec in self.specs.items() },
            "state_dict"     : self.networks.state_dict(),
            "optimizer"      : None if self.optimizer is None else self.optimizer.state_dict(),
            "opt_config"     : self.opt_config,
            "step_count"     : self.step_count,
            "metadata"       : metadata or {},
        }
        logger.info(f"SAVE - {path}")
        torch.save(chkpt, path)


    @classmethod
    def load_checkpoint(cls, path):
        chkpt = torch.load(path, map_location = 'cpu')
        version = chkpt.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"Unsupported checkpoint format version {version} in {path}.")

        params = cls()
        for name, spec_dict in chkpt["specs"].items():
            params.add(name, MlpSpec.from_dict(spec_dict))
        params.networks.load_state_dict(chkpt["state_dict"])
        params.step_count = chkpt["step_count"]
        params.metadata   = chkpt.get("metadata", {})

        if chkpt["optimizer"] is not None:
            params.configure_optimizers(**chkpt["opt_config"])
            params.optimizer.load_state_dict(chkpt["optimizer"])

        logger.info(f"MSG - loaded {len(params.specs)} networks from {path}")

        return params




def mlp_forward(spec, net, x, tape = None):
    ''' Apply an MLP to a vector or a batch of row vectors.  '''
    x = torch.as_tensor(x, dtype = torch.float64)
    if x.shape[-1] != spec.dim_in:
        raise ValueError(f"Input has {x.shape[-1]} features, network expects {spec.dim_in}.")

    y = net(x)

    if tape is not None:
        tape.record('mlp', y, rows = x.shape[0] if x.dim() > 1 else 1)

    return y




def backward(tape, output_gradient = None):
    ''' Sweep gradients back from the last recorded output.

        Gradients accumulate into every touched parameter's ``.grad`` and into
        any input tensor created with ``requires_grad``.
    '''
    if tape is None or len(tape) == 0:
        raise RuntimeError("backward called before any forward pass was recorded.")

    _, output = tape.records[-1]
    if output_gradient is None:
        if output.numel() != 1:
            raise ValueError("output_gradient is required for non-scalar outputs.")
        grad = None
    else:
        grad = torch.as_tensor(output_gradient, dtype = output.dtype)
        if grad.shape != output.shape:
            raise ValueError(f"output_gradient shape {tuple(grad.shape)} does not match output shape {tuple(output.shape)}.")

    torch.autograd.backward(output, grad_tensors = grad)
    tape.records.clear()

    return None




def adam_step(params, lr = 3e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8,
                      weight_decay = 1e-4, decoupled_weight_decay = False):
    ''' One Adam update from the accumulated gradients, then zero them.  '''
    if lr <= 0:
        raise ValueError(f"Learning rate must be positive, got {lr}.")

    optimizer = params.configure_optimizers( lr = lr, beta1 = beta1, beta2 = beta2, eps = eps,
                                             weight_decay = weight_decay,
                                             decoupled_weight_decay = decoupled_weight_decay, )
    optimizer.step()
    optimizer.zero_grad(set_to_none = False)
    params.step_count += 1

    return None




class GradCheckReport:
    def __init__(self, max_relative_error, worst_parameter, num_checked, tolerance):
        self.max_relative_error = max_relative_error
        self.worst_parameter    = worst_parameter
        self.num_checked        = num_checked
        self.tolerance          = tolerance
        self.passed             = max_relative_error <= tolerance


    def __repr__(self):
        return (f"GradCheckReport(max_relative_error={self.max_relative_error:.3e}, "
                f"worst_parameter={self.worst_parameter}, num_checked={self.num_checked}, passed={self.passed})")




def _named_parameters(params):
    if isinstance(params, nn.Module):
        return [ (name, p) for name, p in params.named_parameters() ]
    return list(params.items())


def grad_check(loss_fn, params, tolerance = 1e-4, h = 1e-5, max_entries = None, seed = 0, floor = 1e-6):
    ''' Compare autograd gradients with central finite differences.

        Parameters
        ----------
        loss_fn : callable returning a scalar tensor computed from params.
        params : nn.Module or dict of name -> leaf tensor.
        max_entries : int or None, number of parameter entries sampled.

        The relative error of an entry is |analytic - numeric| / max(|numeric|, floor).
    '''
    named = _named_parameters(params)

    # Analytic gradients...
    for _, p in named: p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = { name : (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)) for name, p in named }

    # Entries to check...
    entries = [ (name, idx) for name, p in named for idx in range(p.numel()) ]
    if max_entries is not None and max_entries < len(entries):
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(entries), size = max_entries, replace = False))
        entries = [ entries[i] for i in pick ]

    lookup   = dict(named)
    err_max  = 0.0
    err_name = None
    with torch.no_grad():
        for name, idx in entries:
            flat = lookup[name].view(-1)
            orig = flat[idx].item()

            flat[idx] = orig + h
            loss_plus = float(loss_fn())
            flat[idx] = orig - h
            loss_minus = float(loss_fn())
            flat[idx] = orig

            numeric = (loss_plus - loss_minus) / (2 * h)
            grad    = analytic[name].view(-1)[idx].item()
            err     = abs(grad - numeric) / max(abs(numeric), floor)
            if err > err_max:
                err_max, err_name = err, f"{name}[{idx}]"

    report = GradCheckReport(err_max, err_name, len(entries), tolerance)
    logger.info(f"MSG - {report}")

    return report
