import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualpqc.discriminator import (
    ALPHA,
    LAYERS,
    MlpParams,
    PenaltyConfig,
    disc_backward,
    disc_forward,
    forward_batch,
    gradient_penalty,
    init_mlp,
    input_gradients,
    load_checkpoint,
    save_checkpoint,
    zeros_like,
)
from dualpqc.errors import DatasetParseError, DomainError


def small_random(rng, sizes=(4, 6, 5, 1), scale=1.0):
    return MlpParams(
        [rng.normal(size=(o, i)) * scale for i, o in zip(sizes[:-1], sizes[1:])],
        [rng.normal(size=o) * scale for o in sizes[1:]],
    )


def reference_forward(params, x):
    """Layer-by-layer re-evaluation with explicit loops over units."""
    h = list(map(float, x))
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = [sum(w[o, i] * h[i] for i in range(len(h))) + b[o] for o in range(w.shape[0])]
        if layer < len(params.weights) - 1:
            h = [v if v > 0 else ALPHA * v for v in z]
        else:
            h = z
    return 1 / (1 + np.exp(-h[0]))


def rel_close(analytic, numeric, rtol=1e-5, atol=1e-7):
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    small = np.abs(numeric) < 1e-2
    assert np.all(np.abs(analytic - numeric)[small] < atol)
    big = ~small
    assert np.all(np.abs(analytic - numeric)[big] <= rtol * np.abs(numeric)[big])


def test_zero_params_give_half():
    params = zeros_like(init_mlp(np.random.default_rng(0)))
    assert disc_forward(params, [0.1, 0.2, 0.3, 0.4]) == 0.5


def test_leaky_relu_slope():
    # one hidden unit with pre-activation -1 feeding the output with weight 1
    params = MlpParams(
        [np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]])],
        [np.array([-1.0]), np.array([0.0]), np.array([0.0])],
    )
    _, (acts, pre) = forward_batch(params, np.array([[0.0]]))
    assert pre[0][0, 0] == -1.0
    assert acts[1][0, 0] == pytest.approx(-0.2)


def test_forward_matches_reference():
    rng = np.random.default_rng(1)
    params = init_mlp(rng)
    for _ in range(3):
        x = rng.dirichlet(np.ones(4))
        assert disc_forward(params, x) == pytest.approx(reference_forward(params, x), abs=1e-13)


def test_layer_sizes_and_init_bounds():
    params = init_mlp(np.random.default_rng(2))
    assert params.layer_sizes == LAYERS
    for w, b in zip(params.weights, params.biases):
        bound = 1 / np.sqrt(w.shape[1])
        assert np.all(np.abs(w) <= bound) and np.all(np.abs(b) <= bound)


def test_forward_rejects_bad_input():
    params = init_mlp(np.random.default_rng(0))
    with pytest.raises(DomainError):
        disc_forward(params, [0.1, 0.2, np.nan, 0.3])
    with pytest.raises(DomainError):
        disc_forward(params, [0.1, 0.2, 0.3])


def test_zero_upstream_zero_gradients():
    params = init_mlp(np.random.default_rng(3))
    grads, dx = disc_backward(params, [0.25] * 4, 0.0)
    assert not np.any(grads.to_vector()) and not np.any(dx)


def _fd_param_grad(params, x, h=1e-5):
    vec = params.to_vector()
    sizes = params.layer_sizes
    out = np.zeros_like(vec)
    for r in range(len(vec)):
        up, down = vec.copy(), vec.copy()
        up[r] += h
        down[r] -= h
        out[r] = (disc_forward(MlpParams.from_vector(up, sizes), x) - disc_forward(MlpParams.from_vector(down, sizes), x)) / (2 * h)
    return out


def test_backward_matches_finite_differences_every_block():
    rng = np.random.default_rng(4)
    params = small_random(rng)
    x = rng.normal(size=4)
    grads, dx = disc_backward(params, x, 1.0)
    rel_close(grads.to_vector(), _fd_param_grad(params, x))
    fd_x = np.array([(disc_forward(params, x + e) - disc_forward(params, x - e)) / 2e-5 for e in np.eye(4) * 1e-5])
    rel_close(dx, fd_x)


def test_backward_full_size_sampled_parameters():
    rng = np.random.default_rng(5)
    params = init_mlp(rng)
    x = rng.dirichlet(np.ones(4))
    grads, dx = disc_backward(params, x, 2.5)
    vec = params.to_vector()
    analytic = grads.to_vector()
    for r in rng.choice(len(vec), size=60, replace=False):
        up, down = vec.copy(), vec.copy()
        up[r] += 1e-5
        down[r] -= 1e-5
        fd = 2.5 * (disc_forward(MlpParams.from_vector(up), x) - disc_forward(MlpParams.from_vector(down), x)) / 2e-5
        rel_close(analytic[r], fd)
    fd_x = [2.5 * (disc_forward(params, x + e) - disc_forward(params, x - e)) / 2e-5 for e in np.eye(4) * 1e-5]
    rel_close(dx, fd_x)


def test_penalty_zero_for_constant_discriminator():
    params = zeros_like(init_mlp(np.random.default_rng(0)))
    pen, grads = gradient_penalty(params, np.full((3, 4), 0.25), PenaltyConfig())
    assert pen == 0 and not np.any(grads.to_vector())


def test_penalty_direct_evaluation_for_steep_discriminator():
    # linear logit w . x with |w| = 2: gradient norm is 2 * sigma'(z) <= 0.5 < c, so no penalty;
    # with |w| = 20 the norm exceeds c and the value matches the formula evaluated by hand
    w = np.array([2.0, 0, 0, 0])
    for scale in (1.0, 10.0):
        params = MlpParams(
            [np.eye(4), np.eye(4), (scale * w)[None, :]],
            [np.zeros(4), np.zeros(4), np.zeros(1)],
        )
        x = np.array([[0.02, 0.28, 0.3, 0.4], [0.1, 0.2, 0.3, 0.4]])
        pen, _ = gradient_penalty(params, x, PenaltyConfig(7.0, 0.01, 1.0))
        z = x @ (scale * w)
        s = 1 / (1 + np.exp(-z))
        norms = s * (1 - s) * np.linalg.norm(scale * w)
        expected = 7 * np.mean(np.maximum(0, norms - 1) ** 2)
        assert pen == pytest.approx(expected, rel=1e-12, abs=1e-15)
        assert pen <= 7 * (np.linalg.norm(scale * w) * 0.25 - 1) ** 2 + 1e-12


def test_penalty_parameter_gradient_tracks_finite_differences():
    rng = np.random.default_rng(6)
    params = small_random(rng, scale=1.0)
    x = rng.normal(size=(5, 4)) * 0.3
    cfg = PenaltyConfig(7.0, 1e-4, 0.05)
    pen, grads = gradient_penalty(params, x, cfg)
    assert pen > 0
    vec = params.to_vector()
    sizes = params.layer_sizes
    fd = np.zeros_like(vec)
    for r in range(len(vec)):
        up, down = vec.copy(), vec.copy()
        up[r] += 1e-6
        down[r] -= 1e-6
        fd[r] = (
            gradient_penalty(MlpParams.from_vector(up, sizes), x, cfg)[0]
            - gradient_penalty(MlpParams.from_vector(down, sizes), x, cfg)[0]
        ) / 2e-6
    # the mixed derivative is itself a difference quotient with step k
    np.testing.assert_allclose(grads.to_vector(), fd, atol=1e-4 * np.abs(fd).max())


def test_penalty_lambda_zero():
    params = small_random(np.random.default_rng(7), scale=3.0)
    pen, grads = gradient_penalty(params, np.ones((2, 4)), PenaltyConfig(0.0, 0.01, 0.0))
    assert pen == 0 and not np.any(grads.to_vector())


def test_penalty_empty_batch():
    with pytest.raises(DomainError):
        gradient_penalty(init_mlp(np.random.default_rng(0)), np.zeros((0, 4)), PenaltyConfig())


def test_penalty_config_validation():
    with pytest.raises(DomainError):
        PenaltyConfig(-1.0, 0.01, 1.0)
    with pytest.raises(DomainError):
        PenaltyConfig(7.0, 0.01, -1.0)


def test_checkpoint_round_trip(tmp_path):
    params = init_mlp(np.random.default_rng(8))
    path = tmp_path / "disc.txt"
    save_checkpoint(params, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# dualpqc-mlp v1" and lines[1] == "layers 4 256 128 1"
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.to_vector(), params.to_vector())


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("hello\n")
    with pytest.raises(DatasetParseError):
        load_checkpoint(path)


def test_forward_is_deterministic():
    params = init_mlp(np.random.default_rng(9))
    x = np.random.default_rng(1).dirichlet(np.ones(4), size=10)
    a, _ = forward_batch(params, x)
    b, _ = forward_batch(params, x)
    assert np.array_equal(a, b)


@settings(max_examples=500, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_scores_strictly_inside_unit_interval(seed):
    rng = np.random.default_rng(seed)
    params = init_mlp(rng)
    x = rng.dirichlet(np.ones(4), size=8)
    scores, _ = forward_batch(params, x)
    assert np.all((scores > 0) & (scores < 1))


@settings(max_examples=500, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_input_gradient_property(seed):
    rng = np.random.default_rng(seed)
    params = small_random(rng, scale=0.7)
    x = rng.normal(size=4)
    _, dx = input_gradients(params, x[None, :])
    fd = np.array([(disc_forward(params, x + e) - disc_forward(params, x - e)) / 2e-5 for e in np.eye(4) * 1e-5])
    # a kink of LeakyReLU within h of x spoils the difference quotient; skip those draws
    _, (_, pre) = forward_batch(params, x)
    if min(np.abs(p).min() for p in pre[:-1]) < 1e-3:
        return
    rel_close(dx[0], fd)
