"""Adam optimizer and a finite-difference gradient checker."""

from dataclasses import dataclass, field

import numpy as np

from conther import kern
from conther.tensor import NumericsError, backward


@dataclass
class AdamState:
    """Moment estimates for one parameter list; arrays mirror param shapes."""

    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
            step_count=0,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(params, grads, state, lr, names=None):
    """Apply one bias-corrected Adam update in place; increments step_count.

    A NaN gradient aborts with the offending parameter and step number.
    Missing (None) gradients are treated as zero.
    """
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {lr}")
    step = state.step_count + 1
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if p.data.shape != g.shape:
            raise ValueError(
                f"adam_step: grad shape {g.shape} does not match param {p.data.shape}"
            )
        if np.isnan(g).any():
            name = names[i] if names else f"param[{i}]"
            raise NumericsError(f"NaN gradient in {name} at optimizer step {step}")
        kern.adam_update(
            p.data.reshape(-1),
            np.ascontiguousarray(g).reshape(-1),
            state.first_moment[i].reshape(-1),
            state.second_moment[i].reshape(-1),
            step,
            lr,
            state.beta1,
            state.beta2,
            state.epsilon,
        )
    state.step_count = step
    return params, state


class Adam:
    """Stateful wrapper pairing a parameter list with its AdamState."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8, names=None):
        self.params = list(params)
        self.lr = lr
        self.names = list(names) if names is not None else None
        self.state = AdamState.for_params(self.params, beta1, beta2, epsilon)

    def step(self):
        grads = [p.grad for p in self.params]
        adam_step(self.params, grads, self.state, self.lr, names=self.names)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def finite_diff_check(f, params, eps=1e-6, max_coords=200, rng=None):
    """Max relative error between autodiff and central differences.

    f(params) must return a scalar Tensor built from the given params.
    At most max_coords coordinates per parameter are probed (all of them
    when the parameter is small enough); the error is
    |autodiff - central| / max(1, |central|).
    """
    if eps <= 0:
        raise ValueError(f"finite_diff_check: eps must be positive, got {eps}")
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.grad = None
    out = f(params)
    backward(out)
    worst = 0.0
    for p in params:
        ad = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            hi = f(params).item()
            flat[c] = orig - eps
            lo = f(params).item()
            flat[c] = orig
            fd = (hi - lo) / (2.0 * eps)
            err = abs(ad.reshape(-1)[c] - fd) / max(1.0, abs(fd))
            if err > worst:
                worst = err
    return worst
