"""
Tests for the dense tanh network: initialization, forward pass, input derivatives,
parameter gradients and the checkpoint text format.
"""
import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose

from errors import CheckpointIncompatibleError, InputShapeError, InvalidArchitectureError, NonFiniteInputError
from network import (
    DTYPE,
    PRESSURE,
    PSI,
    NetworkParams,
    default_layer_sizes,
    evaluate_first_order,
    evaluate_with_derivatives,
    format_checkpoint,
    forward,
    init_network,
    load_checkpoint,
    loss_gradient,
    parameter_count,
    parse_checkpoint,
    save_checkpoint,
)

TANH_HALF = np.tanh(0.5)
SECH2_HALF = 1.0 - np.tanh(0.5) ** 2
SECOND_HALF = -2.0 * np.tanh(0.5) * SECH2_HALF


def _zeros(layer_sizes):
    weights = [torch.zeros(n_out, n_in, dtype=DTYPE) for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:])]
    biases = [torch.zeros(n_out, dtype=DTYPE) for n_out in layer_sizes[1:]]
    return NetworkParams(list(layer_sizes), weights, biases)


def _tanh_x_network():
    """One hidden unit: psi(x, y, t) = tanh(x)."""
    params = _zeros([3, 1, 5])
    params.weights[0][0, 0] = 1.0
    params.weights[1][PSI, 0] = 1.0
    return params


def test_parameter_count_of_default_architecture():
    assert parameter_count(default_layer_sizes()) == 15755
    assert init_network(default_layer_sizes(), 0).parameter_count == 15755


def test_init_network_zero_biases_and_determinism():
    params = init_network([3, 5], seed=7)
    assert all(torch.count_nonzero(b) == 0 for b in params.biases)

    a = init_network([3, 16, 16, 5], seed=3)
    b = init_network([3, 16, 16, 5], seed=3)
    assert torch.equal(a.flatten(), b.flatten())
    assert not torch.equal(a.flatten(), init_network([3, 16, 16, 5], seed=4).flatten())


def test_init_network_glorot_bound():
    params = init_network([3, 50, 5], seed=1)
    bound = np.sqrt(6.0 / (3 + 50))
    assert float(params.weights[0].abs().max()) <= bound


@pytest.mark.parametrize("sizes", [[], [3], [3, 0, 5], [2, 5], [3, 4]])
def test_invalid_architectures_rejected(sizes):
    with pytest.raises(InvalidArchitectureError):
        init_network(sizes, 0)


def test_forward_zero_network_and_affine_layer():
    assert torch.equal(forward(_zeros([3, 8, 5]), [0.3, -0.2, 0.1]), torch.zeros(5, dtype=DTYPE))

    affine = _zeros([3, 5])
    affine.weights[0].fill_(1.0)
    assert_allclose(forward(affine, [1.0, 2.0, 3.0]).numpy(), np.full(5, 6.0))


def test_forward_tanh_unit():
    out = forward(_tanh_x_network(), [0.5, 0.0, 0.0])
    assert_allclose(float(out[PSI]), TANH_HALF, atol=1e-10)


def test_forward_batch_shape_and_nonfinite_input():
    params = init_network([3, 4, 5], 0)
    assert forward(params, np.zeros((7, 3))).shape == (7, 5)
    with pytest.raises(NonFiniteInputError):
        forward(params, [np.nan, 0.0, 0.0])
    with pytest.raises(NonFiniteInputError):
        forward(params, [[0.0, np.inf, 0.0]])


def test_wrong_input_shape():
    params = init_network([3, 4, 5], 0)
    with pytest.raises(InputShapeError):
        forward(params, [0.0, 1.0])
    with pytest.raises(InputShapeError):
        evaluate_first_order(params, np.zeros((4, 2)))


@pytest.mark.parametrize("order", [1, 2, 3])
def test_detached_evaluation_matches_differentiable(order):
    params = init_network([3, 6, 6, 5], 4)
    points = np.random.default_rng(2).uniform(size=(9, 3))
    if order == 1:
        detached = evaluate_first_order(params, points, create_graph=False)
        attached = evaluate_first_order(params, points, create_graph=True)
    else:
        detached = evaluate_with_derivatives(params, points, order=order, create_graph=False)
        attached = evaluate_with_derivatives(params, points, order=order, create_graph=True)
    assert not detached.first_derivs.requires_grad
    assert_allclose(detached.first_derivs.numpy(), attached.first_derivs.detach().numpy(), rtol=1e-14)
    if order == 3:
        assert_allclose(detached.third_derivs.numpy(), attached.third_derivs.detach().numpy(), rtol=1e-14)


def test_tanh_unit_derivatives():
    params = _tanh_x_network()
    at_zero = evaluate_with_derivatives(params, [0.0, 0.0, 0.0], order=2, create_graph=False)
    assert float(at_zero.outputs[0, PSI]) == 0.0
    assert_allclose(float(at_zero.first_derivs[0, PSI, 0]), 1.0, atol=1e-14)
    assert_allclose(float(at_zero.second_derivs[0, 0, 0]), 0.0, atol=1e-14)

    at_half = evaluate_with_derivatives(params, [0.5, 0.0, 0.0], order=3, create_graph=False)
    assert_allclose(float(at_half.first_derivs[0, PSI, 0]), SECH2_HALF, atol=1e-10)
    assert_allclose(float(at_half.second_derivs[0, 0, 0]), SECOND_HALF, atol=1e-10)
    # d3/dx3 tanh = -2 sech^2 (1 - 3 tanh^2)
    t = np.tanh(0.5)
    assert_allclose(float(at_half.third_derivs[0, 0, 0, 0]), -2 * (1 - t ** 2) * (1 - 3 * t ** 2), atol=1e-10)


def test_order_two_leaves_third_derivatives_empty():
    evaluation = evaluate_with_derivatives(init_network([3, 4, 5], 0), np.zeros((2, 3)), order=2)
    assert evaluation.order == 2
    assert evaluation.third_derivs is None
    with pytest.raises(ValueError):
        evaluate_with_derivatives(init_network([3, 4, 5], 0), np.zeros((2, 3)), order=1)


def _central_difference(fn, points, h=1e-4):
    """d fn / d input_j by five-point central differences; fn maps (N, 3) -> (N, ...)."""
    columns = []
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        columns.append(
            (-fn(points + 2 * step) + 8 * fn(points + step) - 8 * fn(points - step) + fn(points - 2 * step))
            / (12 * h)
        )
    return np.stack(columns, axis=-1)


def test_input_derivatives_match_finite_differences():
    rng = np.random.default_rng(11)
    for trial in range(50):
        depth = int(rng.integers(1, 4))
        width = int(rng.integers(2, 17))
        params = init_network([3] + [width] * depth + [5], seed=trial)
        points = rng.uniform(-1.0, 1.0, size=(20, 3))

        evaluation = evaluate_with_derivatives(params, points, order=2, create_graph=False)

        def outputs(pts):
            return forward(params, pts).numpy()

        def psi_gradient(pts):
            return evaluate_first_order(params, pts, create_graph=False).first_derivs[:, PSI].numpy()

        assert_allclose(evaluation.first_derivs.numpy(), _central_difference(outputs, points), rtol=1e-5, atol=1e-8)
        assert_allclose(evaluation.second_derivs.numpy(), _central_difference(psi_gradient, points),
                        rtol=1e-5, atol=1e-8)


def test_third_derivatives_match_finite_differences():
    rng = np.random.default_rng(5)
    params = init_network([3, 12, 12, 5], seed=2)
    points = rng.uniform(-1.0, 1.0, size=(10, 3))
    evaluation = evaluate_with_derivatives(params, points, order=3, create_graph=False)

    def psi_hessian(pts):
        return evaluate_with_derivatives(params, pts, order=2, create_graph=False).second_derivs.numpy()

    assert_allclose(evaluation.third_derivs.numpy(), _central_difference(psi_hessian, points), rtol=1e-5, atol=1e-8)


def test_mixed_partials_are_symmetric():
    evaluation = evaluate_with_derivatives(init_network([3, 10, 10, 5], 4),
                                           np.random.default_rng(0).uniform(-1, 1, (15, 3)),
                                           order=2, create_graph=False)
    d2 = evaluation.second_derivs.numpy()
    assert_allclose(d2, np.swapaxes(d2, 1, 2), atol=1e-12)


def test_loss_gradient_zero_network_is_stationary():
    params = _zeros([3, 6, 5])
    (grad,) = loss_gradient([params], lambda leaves: (forward(leaves[0], [0.2, 0.4, 0.1]) ** 2).sum())
    assert torch.count_nonzero(grad.flatten()) == 0


def test_loss_gradient_affine_layer_by_hand():
    params = init_network([3, 5], seed=9)
    params.biases[0] = torch.tensor([0.1, -0.2, 0.3, 0.0, 0.5], dtype=DTYPE)
    x = torch.tensor([1.0, 2.0, 3.0], dtype=DTYPE)

    (grad,) = loss_gradient([params], lambda leaves: forward(leaves[0], x)[0] ** 2)

    out = float(forward(params, x)[0])
    expected_w = torch.zeros(5, 3, dtype=DTYPE)
    expected_w[0] = 2.0 * out * x
    expected_b = torch.zeros(5, dtype=DTYPE)
    expected_b[0] = 2.0 * out
    assert_allclose(grad.weights[0].numpy(), expected_w.numpy(), rtol=1e-12)
    assert_allclose(grad.biases[0].numpy(), expected_b.numpy(), rtol=1e-12)


def test_loss_gradient_reaches_through_input_derivatives():
    """Losses built from second input derivatives are differentiated through the nested passes."""
    params = init_network([3, 6, 6, 5], seed=1)
    points = np.random.default_rng(2).uniform(-1, 1, (5, 3))

    def loss(leaves):
        evaluation = evaluate_with_derivatives(leaves[0], points, order=2)
        return (evaluation.second_derivs[:, 0, 1] ** 2).sum() + evaluation.outputs[:, PRESSURE].sum()

    (grad,) = loss_gradient([params], loss)
    flat = grad.flatten().numpy()

    h = 1e-6
    base = params.flatten().detach()
    for index in (0, 10, 30, 60, len(base) - 1):
        shift = torch.zeros_like(base)
        shift[index] = h
        plus = loss([NetworkParams.from_flat(base + shift, params.layer_sizes)]).item()
        minus = loss([NetworkParams.from_flat(base - shift, params.layer_sizes)]).item()
        assert_allclose(flat[index], (plus - minus) / (2 * h), rtol=1e-5, atol=1e-8)


def test_from_flat_and_flatten_roundtrip():
    params = init_network([3, 7, 5], seed=12)
    again = NetworkParams.from_flat(params.flatten(), params.layer_sizes)
    for a, b in zip(params.weights + params.biases, again.weights + again.biases):
        assert torch.equal(a, b)
    with pytest.raises(InvalidArchitectureError):
        NetworkParams.from_flat(params.flatten()[:-1], params.layer_sizes)


def test_detached_copy_is_independent():
    params = init_network([3, 4, 5], seed=0)
    copy = params.detached()
    params.weights[0].add_(1.0)
    assert not torch.equal(copy.weights[0], params.weights[0])


def test_checkpoint_text_is_stable(tmp_path):
    params = init_network([3, 9, 9, 5], seed=21)
    first = save_checkpoint(params, tmp_path / "a.ckpt")
    loaded = load_checkpoint(first, [3, 9, 9, 5])
    second = save_checkpoint(loaded, tmp_path / "b.ckpt")

    assert first.read_bytes() == second.read_bytes()
    assert torch.equal(loaded.flatten(), params.flatten())


def test_checkpoint_rejects_mismatched_architecture(tmp_path):
    text = format_checkpoint(init_network([3, 4, 5], seed=0))
    with pytest.raises(CheckpointIncompatibleError):
        parse_checkpoint(text, [3, 8, 5])
    with pytest.raises(CheckpointIncompatibleError):
        parse_checkpoint("\n".join(text.splitlines()[:-1]))
    with pytest.raises(CheckpointIncompatibleError):
        parse_checkpoint("weights\n1 2 3\n")
    with pytest.raises(CheckpointIncompatibleError):
        load_checkpoint(tmp_path / "missing.ckpt")
