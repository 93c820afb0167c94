"""
Optimiseur Adam avec correction de biais et écrêtage de la norme globale.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from app.core.exceptions import ShapeError
from app.core.tensor import Tensor


@dataclass
class AdamState:
    """
    État d'Adam pour un ensemble de paramètres nommés.

    Attributes:
        step_count: Nombre de pas effectués
        m: Premiers moments par paramètre
        v: Seconds moments par paramètre (toujours >= 0)
    """
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> None:
    """
    Applique un pas d'Adam en place.

    Les gradients ne sont pas remis à zéro ici: c'est à l'appelant de le faire.

    Raises:
        ShapeError: Paramètre, gradient et moments de formes différentes
    """
    state.step_count += 1
    bc1 = 1.0 - state.beta1 ** state.step_count
    bc2 = 1.0 - state.beta2 ** state.step_count

    for name, param in params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ShapeError(f"adam: gradient {g.shape} pour le paramètre '{name}' {param.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        m, v = state.m[name], state.v[name]
        if m.shape != param.shape or v.shape != param.shape:
            raise ShapeError(f"adam: moments {m.shape} pour le paramètre '{name}' {param.shape}")

        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)

        m_hat = m / bc1
        v_hat = v / bc2
        param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def global_grad_norm(params: Mapping[str, Tensor]) -> float:
    total = 0.0
    for param in params.values():
        if param.grad is not None:
            total += float(np.sum(param.grad * param.grad))
    return float(np.sqrt(total))


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: Optional[float]) -> float:
    """
    Ramène la norme globale des gradients à max_norm si elle la dépasse.

    Returns:
        Norme globale avant écrêtage
    """
    norm = global_grad_norm(params)
    if max_norm is not None and max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for param in params.values():
            if param.grad is not None:
                param.grad *= scale
    return norm


__all__ = ["AdamState", "adam_step", "clip_grad_norm", "global_grad_norm"]
