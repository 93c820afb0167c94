"""
Vérification des gradients par différences finies centrées.
"""

from typing import Callable, Dict, Mapping, Optional

import numpy as np

from app.core.tensor import Tensor


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def _numeric_gradient(
    loss_fn: Callable[[], Tensor],
    target: Tensor,
    h: float,
    coords: Optional[np.ndarray] = None,
) -> np.ndarray:
    flat = target.data.reshape(-1)
    numeric = np.zeros_like(flat)
    indices = range(flat.size) if coords is None else coords
    for i in indices:
        original = flat[i]
        step = h * max(1.0, abs(original))
        flat[i] = original + step
        plus = loss_fn().item()
        flat[i] = original - step
        minus = loss_fn().item()
        flat[i] = original
        numeric[i] = (plus - minus) / (2.0 * step)
    return numeric.reshape(target.shape)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-6) -> float:
    """
    Compare le gradient rétropropagé de f en x aux différences finies centrées.

    Args:
        f: Fonction scalaire d'un tenseur
        x: Point d'évaluation (modifié temporairement, restauré ensuite)
        h: Pas relatif, multiplié par max(1, |x_i|)

    Returns:
        max |analytique - numérique| / max(1, |analytique|, |numérique|)
    """
    leaf = Tensor(x.data, requires_grad=True)
    f(leaf).backward()
    analytic = leaf.grad.copy()

    numeric = _numeric_gradient(lambda: f(leaf), leaf, h)
    return _relative_error(analytic, numeric)


def grad_check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-6,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> Dict[str, float]:
    """
    Vérifie chaque tenseur de paramètres d'un modèle.

    loss_fn doit être déterministe (dropout désactivé, tirages re-semés).

    Args:
        loss_fn: Recalcule la perte scalaire à partir des paramètres courants
        params: Paramètres nommés
        h: Pas relatif
        max_coords: Nombre maximal de coordonnées testées par tenseur (toutes si None)
        seed: Graine du sous-échantillonnage des coordonnées

    Returns:
        Erreur relative maximale par paramètre
    """
    for p in params.values():
        p.zero_grad()
    loss_fn().backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    picker = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for name, p in params.items():
        coords = None
        if max_coords is not None and p.size > max_coords:
            coords = np.sort(picker.choice(p.size, size=max_coords, replace=False))
        numeric = _numeric_gradient(loss_fn, p, h, coords)
        a = analytic[name].reshape(-1)
        n = numeric.reshape(-1)
        if coords is not None:
            a, n = a[coords], n[coords]
        errors[name] = _relative_error(a, n)
    for p in params.values():
        p.zero_grad()
    return errors


__all__ = ["grad_check", "grad_check_parameters"]
