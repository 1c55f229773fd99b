from typing import Dict, Mapping

import numpy as np

from application.models import TrainConfig


class SGD:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def update(self, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """In-place update so graphs holding the arrays see the new values."""
        for name, grad in grads.items():
            params[name] -= self.learning_rate * grad

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        pass


class Adam:
    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def update(self, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            m = self.m.setdefault(name, np.zeros_like(params[name]))
            v = self.v.setdefault(name, np.zeros_like(params[name]))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            params[name] -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {"t": np.array(float(self.t))}
        state.update({f"m.{name}": value for name, value in self.m.items()})
        state.update({f"v.{name}": value for name, value in self.v.items()})
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        self.t = int(state.get("t", 0))
        self.m = {name[2:]: np.array(value) for name, value in state.items() if name.startswith("m.")}
        self.v = {name[2:]: np.array(value) for name, value in state.items() if name.startswith("v.")}


def build_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
