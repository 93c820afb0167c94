"""
Classe de base des modules du réseau.
Registre ordonné des paramètres et des sous-modules, mode entraînement/inférence.
"""

from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from app.core.exceptions import CheckpointError, ShapeError
from app.core.tensor import Tensor, as_tensor, matmul, reshape


def uniform_parameter(generator: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> Tensor:
    """Poids uniformes dans ±1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(generator.uniform(-bound, bound, size=shape), requires_grad=True)


def zero_parameter(shape: Tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Module:
    """
    Conteneur de paramètres.

    L'ordre d'enregistrement fixe l'ordre de named_parameters(),
    donc celui de la charge utile des checkpoints.
    """

    def __init__(self):
        self._parameters: Dict[str, Tensor] = {}
        self._modules: Dict[str, "Module"] = {}
        self.training = True

    def add_parameter(self, name: str, tensor: Tensor) -> Tensor:
        self._parameters[name] = tensor
        return tensor

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self._parameters.items():
            yield prefix + name, tensor
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + ".")

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for module in self._modules.values():
            module.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """
        Remplace les valeurs des paramètres.

        Raises:
            CheckpointError: Nom absent ou forme différente
        """
        params = self.parameters()
        missing = [name for name in params if name not in arrays]
        if missing:
            raise CheckpointError(f"Paramètres absents du checkpoint: {', '.join(missing)}")
        unexpected = [name for name in arrays if name not in params]
        if unexpected:
            raise CheckpointError(f"Paramètres inconnus du modèle: {', '.join(unexpected)}")
        for name, p in params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != p.shape:
                raise CheckpointError(
                    f"Forme incompatible pour '{name}': checkpoint {value.shape}, modèle {p.shape}"
                )
            p.data[...] = value


class Linear(Module):
    """Couche affine y = x·W + b sur le dernier axe."""

    def __init__(self, in_features: int, out_features: int, generator: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.add_parameter(
            "weight", uniform_parameter(generator, (in_features, out_features), in_features)
        )
        self.bias = self.add_parameter("bias", zero_parameter((out_features,))) if bias else None

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1:] != (self.in_features,):
            raise ShapeError(f"Linear: {self.in_features} entrées attendues, forme {x.shape}")
        lead = x.shape[:-1]
        flat = reshape(x, (-1, self.in_features)) if x.ndim != 2 else x
        y = matmul(flat, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return reshape(y, lead + (self.out_features,)) if x.ndim != 2 else y
