import logging

import numpy as np

from ..errors import NonFiniteError, ConfigError

logger = logging.getLogger(__name__)

def adam_step(parameters, t, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """
    One bias-corrected Adam update of every parameter, using the gradients
    left by `backward` and the moments stored on each Parameter. A missing
    gradient counts as zero.

    Parameters
    ----------
    parameters : list of Parameter

    t : int
        Step index, starting at 1

    Raises
    ------
    NonFiniteError
        If any gradient holds NaN or Inf; nothing is updated then.
    """
    if t < 1:
        raise ValueError("Adam step index must start at 1")
    grads = []
    for p in parameters:
        g = p.grad
        if g is None:
            g = np.zeros(p.shape, dtype=p.dtype)
        elif not np.all(np.isfinite(g)):
            raise NonFiniteError("Non-finite gradient", where=p.name)
        grads.append(g)
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g in zip(parameters, grads):
        p.adam_m = (beta1 * p.adam_m + (1.0 - beta1) * g).astype(p.dtype)
        p.adam_v = (beta2 * p.adam_v + (1.0 - beta2) * (g * g)).astype(p.dtype)
        m_hat = p.adam_m / bc1
        v_hat = p.adam_v / bc2
        p.assign(p.value - lr * m_hat / (np.sqrt(v_hat) + eps))

class Adam:
    """
    Adam optimizer over a fixed list of parameters.
    """
    def __init__(self, parameters, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ConfigError("learning rate must be non-negative")
        self.parameters = list(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def zero_grad(self):
        for p in self.parameters:
            p.zero_grad()

    def step(self):
        adam_step(self.parameters, self.t + 1, self.lr, self.beta1, self.beta2, self.eps)
        self.t += 1
