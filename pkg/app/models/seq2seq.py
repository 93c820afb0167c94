"""
Modèle séquence à séquence: encodeur LSTM empilé, décodeur LSTM autorégressif,
attention croisée multi-têtes et tête de prédiction affine.

Toutes les opérations travaillent sur un lot [B × ...]; les entrées
non batchées sont promues à B = 1 puis ramenées.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import DomainError, ShapeError
from app.core.rng import Rng
from app.core.tensor import (
    Tensor,
    as_tensor,
    concat,
    dropout,
    matmul,
    mean,
    reshape,
    sigmoid,
    softmax,
    stack,
    tanh,
    transpose,
)
from app.models.base import Linear, Module, uniform_parameter, zero_parameter
from app.models.features import FeatureExtractor, FeatureInputs, FeatureMatrix
from app.schemas.training import TrainConfig


LayerState = Tuple[Tensor, Tensor]


class LstmLayer(Module):
    """
    Une couche LSTM, portes fusionnées dans l'ordre entrée, oubli, cellule, sortie.

    gates = x·W_ih + h·W_hh + b, découpé en 4 blocs de hidden_size.
    """

    def __init__(self, input_size: int, hidden_size: int, generator: np.random.Generator):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        fan_in = input_size + hidden_size
        self.weight_ih = self.add_parameter(
            "weight_ih", uniform_parameter(generator, (input_size, 4 * hidden_size), fan_in)
        )
        self.weight_hh = self.add_parameter(
            "weight_hh", uniform_parameter(generator, (hidden_size, 4 * hidden_size), fan_in)
        )
        self.bias = self.add_parameter("bias", zero_parameter((4 * hidden_size,)))

    def project_inputs(self, x_seq: Tensor) -> Tensor:
        """Partie x·W_ih + b de toutes les portes, pour toute la séquence [B × L × 4H]."""
        return matmul(x_seq, self.weight_ih) + self.bias

    def cell(self, projected: Tensor, state: LayerState) -> LayerState:
        h_prev, c_prev = state
        gates = projected + matmul(h_prev, self.weight_hh)
        size = self.hidden_size
        i = sigmoid(gates[:, 0:size])
        f = sigmoid(gates[:, size:2 * size])
        g = tanh(gates[:, 2 * size:3 * size])
        o = sigmoid(gates[:, 3 * size:4 * size])
        c = f * c_prev + i * g
        h = o * tanh(c)
        return h, c

    def step(self, x: Tensor, state: LayerState) -> LayerState:
        """x [B × input_size], état (h, c) [B × H] -> nouvel état."""
        return self.cell(matmul(x, self.weight_ih) + self.bias, state)


class LstmStack(Module):
    """
    Pile de couches LSTM, dropout entre couches en entraînement seulement.

    Attributes:
        hidden_size: 128 par défaut
        num_layers: 5 par défaut
        dropout_rate: Appliqué aux activations transmises d'une couche à la suivante
    """

    def __init__(
        self,
        input_size: int,
        hidden_size: int,
        num_layers: int,
        generator: np.random.Generator,
        dropout_rate: float = 0.0,
    ):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.dropout_rate = dropout_rate
        self.layers: List[LstmLayer] = []
        for index in range(num_layers):
            layer = LstmLayer(input_size if index == 0 else hidden_size, hidden_size, generator)
            self.layers.append(self.add_module(f"layers.{index}", layer))

    def zero_state(self, batch: int) -> List[LayerState]:
        shape = (batch, self.hidden_size)
        return [(Tensor(np.zeros(shape)), Tensor(np.zeros(shape))) for _ in range(self.num_layers)]

    def check_state(self, state: Sequence[LayerState], batch: int) -> None:
        if len(state) != self.num_layers:
            raise ShapeError(f"LSTM: {self.num_layers} couches attendues, état de {len(state)} couches")
        for h, c in state:
            if h.shape != (batch, self.hidden_size) or c.shape != (batch, self.hidden_size):
                raise ShapeError(
                    f"LSTM: état {h.shape}/{c.shape} incompatible avec ({batch}, {self.hidden_size})"
                )

    def _between_layers(self, x: Tensor, generator: Optional[np.random.Generator]) -> Tensor:
        if self.training and self.dropout_rate > 0 and generator is not None:
            return dropout(x, self.dropout_rate, generator)
        return x

    def step(
        self,
        x: Tensor,
        state: Sequence[LayerState],
        generator: Optional[np.random.Generator] = None,
    ) -> Tuple[Tensor, List[LayerState]]:
        """Un pas de temps à travers toutes les couches."""
        if x.shape[-1] != self.input_size:
            raise ShapeError(f"LSTM: {self.input_size} entrées attendues, forme {x.shape}")
        self.check_state(state, x.shape[0])
        new_state = []
        for index, layer in enumerate(self.layers):
            if index > 0:
                x = self._between_layers(x, generator)
            h, c = layer.step(x, state[index])
            new_state.append((h, c))
            x = h
        return x, new_state

    def run(
        self,
        x_seq: Tensor,
        state: Optional[Sequence[LayerState]] = None,
        generator: Optional[np.random.Generator] = None,
    ) -> Tuple[Tensor, List[LayerState]]:
        """
        Récurrence de gauche à droite sur [B × L × input_size], couche par couche.

        Returns:
            (états cachés de la dernière couche [B × L × H], état final par couche)
        """
        if x_seq.ndim != 3 or x_seq.shape[-1] != self.input_size:
            raise ShapeError(f"LSTM: séquence [B × L × {self.input_size}] attendue, forme {x_seq.shape}")
        batch, length, _ = x_seq.shape
        state = list(state) if state is not None else self.zero_state(batch)
        self.check_state(state, batch)
        final = []
        for index, layer in enumerate(self.layers):
            if index > 0:
                x_seq = self._between_layers(x_seq, generator)
            projected = layer.project_inputs(x_seq)
            h, c = state[index]
            outputs = []
            for t in range(length):
                h, c = layer.cell(projected[:, t, :], (h, c))
                outputs.append(h)
            final.append((h, c))
            x_seq = stack(outputs, axis=1)
        return x_seq, final


@dataclass
class EncoderStates:
    """
    Attributes:
        h_seq: États cachés de la couche supérieure [B × L_in × H]
        final: (h, c) par couche, état initial du décodeur
    """
    h_seq: Tensor
    final: List[LayerState]


@dataclass
class DecoderStep:
    """Sorties d'un pas de décodage."""
    o_t: Tensor
    state: List[LayerState]
    context: Tensor
    alpha: np.ndarray
    y_hat_t: Tensor


class Encoder(Module):
    def __init__(
        self,
        input_size: int,
        hidden_size: int,
        num_layers: int,
        generator: np.random.Generator,
        dropout_rate: float = 0.0,
    ):
        super().__init__()
        self.input_size = input_size
        self.stack = self.add_module(
            "lstm", LstmStack(input_size, hidden_size, num_layers, generator, dropout_rate)
        )

    def __call__(
        self,
        m: Union[FeatureMatrix, Tensor],
        generator: Optional[np.random.Generator] = None,
    ) -> EncoderStates:
        """
        États initiaux nuls, récurrence empilée sur M.

        Raises:
            ShapeError: Nombre de canaux différent de input_size
        """
        x = m.m if isinstance(m, FeatureMatrix) else as_tensor(m)
        if x.shape[-1] != self.input_size:
            raise ShapeError(f"Encodeur: {self.input_size} canaux attendus, M de forme {x.shape}")
        if x.ndim == 2:
            x = reshape(x, (1,) + x.shape)
        h_seq, final = self.stack.run(x, generator=generator)
        return EncoderStates(h_seq=h_seq, final=final)


class Decoder(Module):
    """La prédiction précédente (scalaire) est relevée à hidden_size par une couche affine."""

    def __init__(
        self,
        hidden_size: int,
        num_layers: int,
        generator: np.random.Generator,
        dropout_rate: float = 0.0,
    ):
        super().__init__()
        self.hidden_size = hidden_size
        self.lift = self.add_module("lift", Linear(1, hidden_size, generator))
        self.stack = self.add_module(
            "lstm", LstmStack(hidden_size, hidden_size, num_layers, generator, dropout_rate)
        )

    def step(
        self,
        prev_y,
        state: Sequence[LayerState],
        generator: Optional[np.random.Generator] = None,
    ) -> Tuple[Tensor, List[LayerState]]:
        """
        prev_y [B] -> (o_t [B × H], nouvel état).

        Raises:
            ShapeError: État incompatible avec la pile
        """
        prev_y = as_tensor(prev_y)
        x = self.lift(reshape(prev_y, (-1, 1)))
        return self.stack.step(x, state, generator)


@dataclass
class AttentionMemory:
    """Clés et valeurs pré-calculées une fois par séquence encodée."""
    keys_t: Tensor     # [B × heads × d × L_in]
    values: Tensor     # [B × heads × L_in × d]
    length: int


class CrossAttention(Module):
    """
    Attention du décodeur sur les états de l'encodeur.

    Mode littéral (paper_exact): une tête, pas de projection, pas de facteur
    d'échelle: alpha = softmax(H·o_t), contexte = Σ alpha_i·H_i.
    Mode multi-têtes: projections Q/K/V découpées par tête, échelle 1/sqrt(d),
    concaténation puis projection de sortie.
    """

    def __init__(
        self,
        hidden_size: int,
        num_heads: int,
        generator: np.random.Generator,
        paper_exact: bool = False,
    ):
        super().__init__()
        self.hidden_size = hidden_size
        self.paper_exact = paper_exact
        self.num_heads = 1 if paper_exact else num_heads
        if hidden_size % self.num_heads != 0:
            raise ShapeError(f"Attention: hidden_size {hidden_size} non divisible par {self.num_heads} têtes")
        self.head_size = hidden_size // self.num_heads
        if not paper_exact:
            for name in ("query", "key", "value"):
                self.add_parameter(
                    f"w_{name}", uniform_parameter(generator, (hidden_size, hidden_size), hidden_size)
                )
            self.output = self.add_module("output", Linear(hidden_size, hidden_size, generator))

    def precompute(self, h_seq: Tensor) -> AttentionMemory:
        if h_seq.ndim != 3:
            raise ShapeError(f"Attention: états [B × L × H] attendus, forme {h_seq.shape}")
        batch, length, hidden = h_seq.shape
        if length == 0:
            raise ShapeError("Attention: séquence encodée vide (L_in = 0)")
        if hidden != self.hidden_size:
            raise ShapeError(f"Attention: états de taille {hidden}, {self.hidden_size} attendue")
        if self.paper_exact:
            values = reshape(h_seq, (batch, 1, length, hidden))
            return AttentionMemory(keys_t=transpose(values, (0, 1, 3, 2)), values=values, length=length)

        def split_heads(x: Tensor) -> Tensor:
            x = reshape(x, (batch, length, self.num_heads, self.head_size))
            return transpose(x, (0, 2, 1, 3))

        keys = split_heads(matmul(h_seq, self._parameters["w_key"]))
        values = split_heads(matmul(h_seq, self._parameters["w_value"]))
        return AttentionMemory(keys_t=transpose(keys, (0, 1, 3, 2)), values=values, length=length)

    def attend(self, o_t: Tensor, memory: AttentionMemory) -> Tuple[Tensor, Tensor]:
        """
        o_t [B × H] -> (contexte [B × H], alpha [B × L_in] moyenné sur les têtes).
        """
        if o_t.ndim != 2 or o_t.shape[-1] != self.hidden_size:
            raise ShapeError(f"Attention: requête [B × {self.hidden_size}] attendue, forme {o_t.shape}")
        batch = o_t.shape[0]
        if self.paper_exact:
            query = reshape(o_t, (batch, 1, 1, self.hidden_size))
            scores = matmul(query, memory.keys_t)
        else:
            query = matmul(o_t, self._parameters["w_query"])
            query = reshape(query, (batch, self.num_heads, 1, self.head_size))
            scores = matmul(query, memory.keys_t) * (1.0 / np.sqrt(self.head_size))
        alpha = softmax(scores, axis=-1)                        # [B × heads × 1 × L]
        context = reshape(matmul(alpha, memory.values), (batch, self.hidden_size))
        if not self.paper_exact:
            context = self.output(context)
        alpha_mean = mean(reshape(alpha, (batch, self.num_heads, memory.length)), axis=1)
        return context, alpha_mean

    def __call__(self, o_t, h_seq) -> Tuple[Tensor, Tensor]:
        """
        Attention pour un pas; accepte o_t [H] avec h_seq [L × H].

        Raises:
            ShapeError: L_in = 0 ou tailles cachées différentes
        """
        o_t, h_seq = as_tensor(o_t), as_tensor(h_seq)
        single = o_t.ndim == 1
        if single:
            if h_seq.ndim != 2:
                raise ShapeError(f"Attention: états [L × H] attendus, forme {h_seq.shape}")
            if h_seq.shape[0] == 0:
                raise ShapeError("Attention: séquence encodée vide (L_in = 0)")
            o_t = reshape(o_t, (1,) + o_t.shape)
            h_seq = reshape(h_seq, (1,) + h_seq.shape)
        context, alpha = self.attend(o_t, self.precompute(h_seq))
        if single:
            return context[0], alpha[0]
        return context, alpha


class PredictionHead(Module):
    """y_hat = affine([o_t ; contexte]), contrainte normalisée scalaire."""

    def __init__(self, hidden_size: int, generator: np.random.Generator):
        super().__init__()
        self.linear = self.add_module("linear", Linear(2 * hidden_size, 1, generator))

    def __call__(self, o_t, context) -> Tensor:
        o_t, context = as_tensor(o_t), as_tensor(context)
        y = self.linear(concat([o_t, context], axis=-1))
        return reshape(y, y.shape[:-1])


@dataclass
class ForwardTrace:
    """Détail d'une passe avant, pour l'inspection et les tests."""
    predictions: Tensor
    alphas: np.ndarray            # [B × L_out × L_in]
    decoder_inputs: np.ndarray    # [B × L_out]


class Seq2SeqModel(Module):
    """
    Extracteur de caractéristiques, encodeur, décodeur, attention et tête.

    L'ordre d'enregistrement des sous-modules fixe l'ordre des paramètres
    dans les checkpoints.
    """

    def __init__(self, config: TrainConfig, rng: Rng):
        super().__init__()
        self.config = config
        generator = rng.numpy()
        hidden = config.hidden_size
        self.features = self.add_module(
            "features", FeatureExtractor(generator, config.gaf_enabled, config.f2d_reduction)
        )
        self.encoder = self.add_module(
            "encoder",
            Encoder(self.features.c_total, hidden, config.num_layers, generator, config.dropout),
        )
        self.decoder = self.add_module(
            "decoder", Decoder(hidden, config.num_layers, generator, config.dropout)
        )
        self.attention = self.add_module(
            "attention", CrossAttention(hidden, config.num_heads, generator, config.paper_exact)
        )
        self.head = self.add_module("head", PredictionHead(hidden, generator))

    @property
    def dropout_active(self) -> bool:
        return self.training and self.config.dropout > 0

    def decode_step(
        self,
        prev_y,
        state: Sequence[LayerState],
        memory: AttentionMemory,
        generator: Optional[np.random.Generator] = None,
    ) -> DecoderStep:
        o_t, new_state = self.decoder.step(prev_y, state, generator)
        if self.config.attention_enabled:
            context, alpha = self.attention.attend(o_t, memory)
            alpha_values = alpha.data
        else:
            context = Tensor(np.zeros(o_t.shape))
            alpha_values = np.full((o_t.shape[0], memory.length), 1.0 / memory.length)
        y_hat = self.head(o_t, context)
        return DecoderStep(o_t=o_t, state=new_state, context=context, alpha=alpha_values, y_hat_t=y_hat)

    def forward(
        self,
        m: Union[FeatureMatrix, Tensor],
        target: Optional[np.ndarray] = None,
        teacher_forcing_ratio: float = 0.0,
        rng: Optional[Rng] = None,
        l_out: Optional[int] = None,
        return_trace: bool = False,
    ) -> Union[Tensor, ForwardTrace]:
        """
        Encode une fois puis décode L_out pas.

        À chaque pas, l'entrée suivante du décodeur est la vérité terrain avec
        la probabilité teacher_forcing_ratio, sinon la prédiction courante.
        Le premier pas reçoit 0.

        Args:
            m: Matrice de caractéristiques [L_in × C] ou [B × L_in × C]
            target: Contraintes normalisées [L_out] ou [B × L_out]
            teacher_forcing_ratio: Dans [0, 1]; 0 en inférence
            rng: Flux des tirages de teacher forcing et des masques de dropout
            l_out: Longueur de sortie quand target est absent

        Raises:
            DomainError: Ratio hors de [0, 1], ratio > 0 sans cible, flux manquant
            ShapeError: Cible incompatible avec M
        """
        if not 0.0 <= teacher_forcing_ratio <= 1.0:
            raise DomainError(f"teacher_forcing_ratio {teacher_forcing_ratio} hors de [0, 1]")
        if teacher_forcing_ratio > 0 and target is None:
            raise DomainError("teacher forcing demandé sans séquence cible")
        needs_draws = 0.0 < teacher_forcing_ratio < 1.0
        if (needs_draws or self.dropout_active) and rng is None:
            raise DomainError("un flux Rng est requis pour le teacher forcing ou le dropout")

        x = m.m if isinstance(m, FeatureMatrix) else as_tensor(m)
        single = x.ndim == 2
        batch = 1 if single else x.shape[0]

        truth = None
        if target is not None:
            truth = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
            truth = truth.reshape(batch, -1) if single and truth.ndim == 1 else truth
            if truth.ndim != 2 or truth.shape[0] != batch:
                raise ShapeError(f"cible de forme {truth.shape} pour un lot de {batch}")
            steps = truth.shape[1]
            if l_out is not None and l_out != steps:
                raise ShapeError(f"l_out={l_out} différent de la longueur de la cible {steps}")
        elif l_out is not None:
            steps = int(l_out)
        else:
            raise ShapeError("longueur de sortie inconnue: fournir target ou l_out")
        if steps < 1:
            raise ShapeError(f"longueur de sortie invalide: {steps}")

        generator = rng.numpy() if self.dropout_active else None
        encoded = self.encoder(x, generator)
        memory = self.attention.precompute(encoded.h_seq) if self.config.attention_enabled else \
            AttentionMemory(keys_t=encoded.h_seq, values=encoded.h_seq, length=encoded.h_seq.shape[1])

        prev = Tensor(np.zeros(batch))
        state = encoded.final
        predictions, alphas, inputs = [], [], []
        for t in range(steps):
            inputs.append(prev.data.copy())
            step = self.decode_step(prev, state, memory, generator)
            state = step.state
            predictions.append(step.y_hat_t)
            alphas.append(step.alpha)
            if t == steps - 1:
                break
            use_truth = teacher_forcing_ratio >= 1.0 or (needs_draws and rng.random() < teacher_forcing_ratio)
            prev = Tensor(truth[:, t]) if use_truth else step.y_hat_t

        out = stack(predictions, axis=1)
        if single:
            out = out[0]
        if not return_trace:
            return out
        alpha_arr = np.stack(alphas, axis=1)
        input_arr = np.stack(inputs, axis=1)
        if single:
            alpha_arr, input_arr = alpha_arr[0], input_arr[0]
        return ForwardTrace(predictions=out, alphas=alpha_arr, decoder_inputs=input_arr)

    def run(
        self,
        inputs: FeatureInputs,
        target: Optional[np.ndarray] = None,
        teacher_forcing_ratio: float = 0.0,
        rng: Optional[Rng] = None,
        l_out: Optional[int] = None,
        return_trace: bool = False,
    ) -> Union[Tensor, ForwardTrace]:
        """Caractéristiques puis forward, pour un lot prétraité."""
        return self.forward(
            self.features(inputs),
            target=target,
            teacher_forcing_ratio=teacher_forcing_ratio,
            rng=rng,
            l_out=l_out,
            return_trace=return_trace,
        )


__all__ = [
    "LstmLayer",
    "LstmStack",
    "EncoderStates",
    "DecoderStep",
    "Encoder",
    "Decoder",
    "AttentionMemory",
    "CrossAttention",
    "PredictionHead",
    "ForwardTrace",
    "Seq2SeqModel",
]
