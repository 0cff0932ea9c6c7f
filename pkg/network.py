"""Dense tanh network mapping (x, y, t) to (psi, p, s11, s12, s22), with exact input derivatives.

Input derivatives are nested torch autograd passes over the network (create_graph keeps
them differentiable), so losses built from them can be differentiated again with respect
to every weight and bias.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F

from errors import (
    CheckpointIncompatibleError,
    EvaluationOverflowError,
    GradientUnavailableError,
    InputShapeError,
    InvalidArchitectureError,
    NonFiniteInputError,
)
from utils import get_logger

DTYPE = torch.float64
N_INPUTS = 3
N_OUTPUTS = 5
OUTPUT_NAMES = ("psi", "p", "s11", "s12", "s22")
PSI, PRESSURE, S11, S12, S22 = range(N_OUTPUTS)

logger = get_logger(__name__)

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[float]]


def default_layer_sizes(hidden_layers: int = 7, hidden_width: int = 50) -> List[int]:
    return [N_INPUTS] + [hidden_width] * hidden_layers + [N_OUTPUTS]


def validate_layer_sizes(layer_sizes: Sequence[int]) -> List[int]:
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise InvalidArchitectureError(f"need at least an input and an output layer, got {sizes}")
    if any(int(n) != n or n <= 0 for n in sizes):
        raise InvalidArchitectureError(f"layer sizes must be positive integers, got {sizes}")
    if sizes[0] != N_INPUTS or sizes[-1] != N_OUTPUTS:
        raise InvalidArchitectureError(
            f"network must map {N_INPUTS} inputs to {N_OUTPUTS} outputs, got {sizes}"
        )
    return [int(n) for n in sizes]


@dataclass
class NetworkParams:
    """Weights (out x in) and biases of each dense layer."""
    layer_sizes: List[int]
    weights: List[torch.Tensor]
    biases: List[torch.Tensor]

    def __post_init__(self):
        self.layer_sizes = validate_layer_sizes(self.layer_sizes)
        n_layers = len(self.layer_sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise InvalidArchitectureError(
                f"expected {n_layers} weight/bias pairs, got {len(self.weights)}/{len(self.biases)}"
            )
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if tuple(w.shape) != expected or tuple(b.shape) != (expected[0],):
                raise InvalidArchitectureError(
                    f"layer {k}: weight {tuple(w.shape)} / bias {tuple(b.shape)}, expected {expected}"
                )

    @property
    def parameter_count(self) -> int:
        return parameter_count(self.layer_sizes)

    def flatten(self) -> torch.Tensor:
        """Per layer: weight rows, then bias (the checkpoint ordering)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.reshape(-1))
            parts.append(b.reshape(-1))
        return torch.cat(parts)

    @classmethod
    def from_flat(cls, flat: torch.Tensor, layer_sizes: Sequence[int]) -> "NetworkParams":
        """View a flat vector as network parameters; gradients flow back into `flat`."""
        sizes = validate_layer_sizes(layer_sizes)
        if flat.numel() != parameter_count(sizes):
            raise InvalidArchitectureError(
                f"flat vector has {flat.numel()} entries, architecture {sizes} needs {parameter_count(sizes)}"
            )
        weights, biases, offset = [], [], 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            weights.append(flat[offset:offset + n_in * n_out].view(n_out, n_in))
            offset += n_in * n_out
            biases.append(flat[offset:offset + n_out])
            offset += n_out
        return cls(sizes, weights, biases)

    def detached(self) -> "NetworkParams":
        """Independent copy; later mutation of self does not leak into it."""
        return NetworkParams(
            list(self.layer_sizes),
            [w.detach().clone() for w in self.weights],
            [b.detach().clone() for b in self.biases],
        )

    def is_finite(self) -> bool:
        return all(torch.isfinite(t).all().item() for t in self.weights + self.biases)


def parameter_count(layer_sizes: Sequence[int]) -> int:
    sizes = list(layer_sizes)
    return sum(n_in * n_out + n_out for n_in, n_out in zip(sizes[:-1], sizes[1:]))


def init_network(layer_sizes: Sequence[int], seed: int) -> NetworkParams:
    """Glorot-uniform weights, zero biases; bit-identical for a given seed."""
    sizes = validate_layer_sizes(layer_sizes)
    if seed < 0:
        raise InvalidArchitectureError(f"seed must be unsigned, got {seed}")
    generator = torch.Generator().manual_seed(int(seed))
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = float(np.sqrt(6.0 / (n_in + n_out)))
        w = torch.empty(n_out, n_in, dtype=DTYPE).uniform_(-bound, bound, generator=generator)
        weights.append(w)
        biases.append(torch.zeros(n_out, dtype=DTYPE))
    return NetworkParams(sizes, weights, biases)


def as_points(inputs: ArrayLike) -> torch.Tensor:
    """Coerce a triple or an (N, 3) batch to a float64 tensor of shape (N, 3)."""
    points = torch.as_tensor(inputs, dtype=DTYPE)
    if points.ndim == 1:
        points = points.unsqueeze(0)
    if points.ndim != 2 or points.shape[1] != N_INPUTS:
        raise InputShapeError(f"expected (N, {N_INPUTS}) inputs, got shape {tuple(points.shape)}")
    if not torch.isfinite(points).all():
        raise NonFiniteInputError("network input contains NaN or infinite values")
    return points


def _forward_tensor(params: NetworkParams, points: torch.Tensor) -> torch.Tensor:
    h = points
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = F.linear(h, w, b)
        if k < last:
            h = torch.tanh(h)
    return h


def forward(params: NetworkParams, inputs: ArrayLike) -> torch.Tensor:
    """Network outputs; a single triple gives a 5-vector, a batch gives (N, 5)."""
    single = torch.as_tensor(inputs).ndim == 1
    out = _forward_tensor(params, as_points(inputs))
    return out[0] if single else out


FieldFn = Callable[[torch.Tensor], torch.Tensor]


@dataclass
class PointEvaluation:
    """Outputs and input derivatives at a batch of points.

    first_derivs[n, i, j]      = d output_i / d input_j
    second_derivs[n, j, k]     = d2 psi / d input_j d input_k   (j differentiated first)
    third_derivs[n, j, k, l]   = d3 psi / d input_j d input_k d input_l   (order 3 only)
    """
    inputs: torch.Tensor
    outputs: torch.Tensor
    first_derivs: torch.Tensor
    second_derivs: Optional[torch.Tensor] = None
    third_derivs: Optional[torch.Tensor] = None

    @property
    def order(self) -> int:
        if self.third_derivs is not None:
            return 3
        if self.second_derivs is not None:
            return 2
        return 1

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _grad(y: torch.Tensor, x: torch.Tensor, create_graph: bool) -> torch.Tensor:
    if not y.requires_grad:
        return torch.zeros_like(x)
    (g,) = torch.autograd.grad(y.sum(), x, create_graph=create_graph, retain_graph=True,
                               allow_unused=True)
    return torch.zeros_like(x) if g is None else g


def evaluate_field_with_derivatives(field: FieldFn, inputs: ArrayLike, order: int = 2,
                                    create_graph: bool = True) -> PointEvaluation:
    """Derivatives of any (N, 3) -> (N, 5) torch function.

    Points are independent rows, so the gradient of a column sum yields per-point derivatives.
    With create_graph=False the results are detached (prediction); otherwise they stay
    differentiable with respect to whatever the field closes over.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
    points = as_points(inputs).detach().requires_grad_(True)
    with torch.enable_grad():
        outputs = field(points)
        if not torch.isfinite(outputs).all():
            raise EvaluationOverflowError("network outputs overflowed to non-finite values")

        inner_graph = create_graph or order > 1
        first = torch.stack(
            [_grad(outputs[:, i], points, inner_graph if i == PSI else create_graph)
             for i in range(N_OUTPUTS)],
            dim=1,
        )
        second = third = None
        if order >= 2:
            second_graph = create_graph or order > 2
            second = torch.stack(
                [_grad(first[:, PSI, j], points, second_graph) for j in range(N_INPUTS)], dim=1
            )
        if order == 3:
            third = torch.stack(
                [torch.stack([_grad(second[:, j, k], points, create_graph) for k in range(N_INPUTS)], dim=1)
                 for j in range(N_INPUTS)],
                dim=1,
            )

    evaluation = PointEvaluation(points, outputs, first, second, third)
    for name in ("first_derivs", "second_derivs", "third_derivs"):
        value = getattr(evaluation, name)
        if value is not None and not torch.isfinite(value).all():
            raise EvaluationOverflowError(f"{name} contain non-finite values")
    if not create_graph:
        evaluation = PointEvaluation(
            points.detach(), outputs.detach(), first.detach(),
            None if second is None else second.detach(),
            None if third is None else third.detach(),
        )
    return evaluation


def evaluate_with_derivatives(params: NetworkParams, inputs: ArrayLike, order: int = 2,
                              create_graph: bool = True) -> PointEvaluation:
    if order not in (2, 3):
        raise ValueError(f"order must be 2 or 3, got {order}")
    return evaluate_field_with_derivatives(
        lambda pts: _forward_tensor(params, pts), inputs, order, create_graph
    )


def evaluate_first_order(params: NetworkParams, inputs: ArrayLike, create_graph: bool = True) -> PointEvaluation:
    """Outputs and first input derivatives only (enough for velocities and pressure)."""
    return evaluate_field_with_derivatives(
        lambda pts: _forward_tensor(params, pts), inputs, 1, create_graph
    )


def loss_gradient(params_list: Sequence[NetworkParams],
                  loss: Callable[[List[NetworkParams]], torch.Tensor]) -> List[NetworkParams]:
    """Reverse-accumulation gradient of a scalar loss, laid out like each NetworkParams.

    The loss receives leaf copies of the parameters, so parameters reached only through
    nested input-derivative computations are included.
    """
    flats = [p.flatten().detach().clone().requires_grad_(True) for p in params_list]
    leaves = [NetworkParams.from_flat(flat, p.layer_sizes) for flat, p in zip(flats, params_list)]
    value = loss(leaves)
    if value.ndim != 0:
        raise GradientUnavailableError(f"loss must be a scalar, got shape {tuple(value.shape)}")
    if not torch.isfinite(value):
        raise GradientUnavailableError(f"loss is not finite ({value.item()})")
    grads = torch.autograd.grad(value, flats, allow_unused=True)
    result = []
    for g, flat, p in zip(grads, flats, params_list):
        g = torch.zeros_like(flat) if g is None else g
        result.append(NetworkParams.from_flat(g.detach(), p.layer_sizes))
    return result


# Checkpoint text format: "layers: n0 ... nk", then per layer the weight rows and the bias,
# one row per line, values with 17 significant digits (bit-exact round trip).

def _format_row(values: torch.Tensor) -> str:
    return " ".join(f"{v:.17g}" for v in values.detach().cpu().tolist())


def format_checkpoint(params: NetworkParams) -> str:
    lines = ["layers: " + " ".join(str(n) for n in params.layer_sizes)]
    for w, b in zip(params.weights, params.biases):
        lines.extend(_format_row(row) for row in w)
        lines.append(_format_row(b))
    return "\n".join(lines) + "\n"


def parse_checkpoint(text: str, expected_layers: Optional[Sequence[int]] = None) -> NetworkParams:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("layers:"):
        raise CheckpointIncompatibleError("checkpoint must start with a 'layers:' header")
    try:
        sizes = [int(tok) for tok in lines[0][len("layers:"):].split()]
        sizes = validate_layer_sizes(sizes)
    except (ValueError, InvalidArchitectureError) as e:
        raise CheckpointIncompatibleError(f"bad checkpoint header: {e}") from e
    if expected_layers is not None and list(expected_layers) != sizes:
        raise CheckpointIncompatibleError(
            f"checkpoint architecture {sizes} does not match configured {list(expected_layers)}"
        )

    rows = lines[1:]
    expected_rows = sum(n_out + 1 for n_out in sizes[1:])
    if len(rows) != expected_rows:
        raise CheckpointIncompatibleError(f"expected {expected_rows} value rows, found {len(rows)}")

    weights, biases, cursor = [], [], 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        try:
            w = [[float(v) for v in rows[cursor + r].split()] for r in range(n_out)]
            b = [float(v) for v in rows[cursor + n_out].split()]
        except ValueError as e:
            raise CheckpointIncompatibleError(f"non-numeric checkpoint value: {e}") from e
        if any(len(r) != n_in for r in w) or len(b) != n_out:
            raise CheckpointIncompatibleError(f"row width mismatch in layer {len(weights)}")
        weights.append(torch.tensor(w, dtype=DTYPE))
        biases.append(torch.tensor(b, dtype=DTYPE))
        cursor += n_out + 1
    return NetworkParams(sizes, weights, biases)


def save_checkpoint(params: NetworkParams, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(format_checkpoint(params))
    logger.debug(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Union[str, Path], expected_layers: Optional[Sequence[int]] = None) -> NetworkParams:
    path = Path(path)
    if not path.exists():
        raise CheckpointIncompatibleError(f"checkpoint not found: {path}")
    return parse_checkpoint(path.read_text(), expected_layers)
