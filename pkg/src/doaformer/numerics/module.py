"""Parameter containers: named traversal, train/eval mode, state transfer."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, matmul


def param(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def linear_init(rng, fan_in, shape):
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for linear/conv weights."""
    bound = 1.0 / np.sqrt(fan_in) if fan_in > 0 else 0.0
    return param(rng.uniform(-bound, bound, size=shape))


class Module:
    """Base class: child Tensors/Modules registered by attribute order."""

    def __init__(self):
        self._training = False

    def named_parameters(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(full + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{full}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{full}.{i}", item))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self):
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, flag=True):
        self._training = flag
        for _, value in vars(self).items():
            if isinstance(value, Module):
                value.train(flag)
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        item.train(flag)
        return self

    def eval(self):
        return self.train(False)

    @property
    def training(self):
        return self._training

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise KeyError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, arr in state.items():
            p = params[name]
            if p.data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {p.data.shape} vs {arr.shape}")
            p.data = np.asarray(arr, dtype=np.float64).copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """y = x @ W + b with W (in, out)."""

    def __init__(self, rng, d_in, d_out, bias=True):
        super().__init__()
        self.w = linear_init(rng, d_in, (d_in, d_out))
        self.b = linear_init(rng, d_in, (d_out,)) if bias else None

    def forward(self, x):
        y = matmul(x, self.w)
        if self.b is not None:
            y = y + self.b
        return y
