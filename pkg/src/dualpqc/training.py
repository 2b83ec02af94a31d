"""Alternating adversarial training of the dual-circuit generator.

Per mini-batch of real profiles:

1. discriminator step: ascend ``L_D - penalty`` (one AMSGRAD step on the
   negation), with ``L_D = mean_b log D(x_b) + sum_i p_g^i log(1 - D(I_i))``;
2. PQC1 step and PQC2 step on ``L_G = -sum_i p_g^i log D(I_i)``, both
   gradients taken at the same generator state and scored by the freshly
   updated discriminator.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .ansatz import param_count
from .data import kl_matrix, kmeans, relative_entropy
from .discriminator import MlpParams, PenaltyConfig, backward_batch, forward_batch, gradient_penalty, init_mlp, input_gradients
from .errors import ConfigError, TrainingDiverged
from .generator import SCORE_FLOOR, DualPqcConfig, GeneratorOutput, GeneratorParams, generate, grad_phi1, grad_phi2, mean_image

log = logging.getLogger(__name__)

NORM_CHECK = 1e-10


@dataclass(frozen=True)
class TrainConfig:
    n: int = 2
    n1: int = 4
    n2: int = 4
    d_g1: int = 2
    d_g2: int = 16
    pqc1_measured: tuple = None
    pqc2_output: tuple = None
    pqc2_input_slots: tuple = None
    epochs: int = 200
    batch_size: int = 500
    # discriminator updates per generator update, all on the same mini-batch
    disc_steps: int = 1
    lr_phi1: float = 1e-4
    lr_phi2: float = 1e-3
    lr_disc: float = 1e-4
    init_delta: float = 0.1
    penalty_lambda: float = 7.0
    penalty_k: float = 0.01
    penalty_c: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    amsgrad_eps: float = 1e-8
    seed_params: int = 0
    seed_data: int = 0
    seed_shuffle: int = 0
    # 0 means exact probabilities
    shots: int = 0
    n_samples: int = 20000
    checkpoint_every: int = 50

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}", key="epochs")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}", key="batch_size")
        if self.disc_steps < 1:
            raise ConfigError(f"disc_steps must be >= 1, got {self.disc_steps}", key="disc_steps")
        for key in ("lr_phi1", "lr_phi2", "lr_disc"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0", key=key)
        if self.init_delta < 0:
            raise ConfigError("init_delta must be >= 0", key="init_delta")
        if self.shots < 0:
            raise ConfigError("shots must be >= 0", key="shots")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1", key="n_samples")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0", key="checkpoint_every")
        try:
            self.circuit
            self.penalty
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def circuit(self) -> DualPqcConfig:
        return DualPqcConfig(
            self.n, self.n1, self.n2, self.d_g1, self.d_g2, self.pqc1_measured, self.pqc2_output, self.pqc2_input_slots
        )

    @property
    def penalty(self) -> PenaltyConfig:
        return PenaltyConfig(self.penalty_lambda, self.penalty_k, self.penalty_c)


_TUPLE_KEYS = ("pqc1_measured", "pqc2_output", "pqc2_input_slots")


def parse_config(text: str, base: TrainConfig = None) -> TrainConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) over ``base``."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    defaults = asdict(base or TrainConfig())
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}", key=key)
        try:
            if key in _TUPLE_KEYS:
                values[key] = None if value in ("", "default") else tuple(int(v) for v in value.split(","))
            elif types[key] in ("int", int):
                values[key] = int(value)
            else:
                values[key] = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key!r}", key=key) from None
    defaults.update(values)
    return TrainConfig(**defaults)


def format_config(config: TrainConfig) -> str:
    lines = []
    for f in fields(TrainConfig):
        value = getattr(config, f.name)
        if f.name in _TUPLE_KEYS:
            value = ",".join(str(q) for q in getattr(config.circuit, f.name))
        lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


@dataclass
class AmsgradState:
    m: np.ndarray
    v: np.ndarray
    v_max: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(np.zeros(size), np.zeros(size), np.zeros(size), 0, beta1, beta2, eps)


def amsgrad_step(state: AmsgradState, params, grad, lr: float) -> np.ndarray:
    """One AMSGRAD update; mutates ``state`` and returns the new parameters."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or grad.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad**2
    state.v_max = np.maximum(state.v_max, state.v)
    bias1 = 1 - state.beta1**state.step
    bias2 = 1 - state.beta2**state.step
    denom = np.sqrt(state.v_max) / np.sqrt(bias2) + state.eps
    return params - (lr / bias1) * state.m / denom


def loss_generator(p_g, disc_scores) -> float:
    scores = np.clip(np.asarray(disc_scores, dtype=float), SCORE_FLOOR, 1 - SCORE_FLOOR)
    return float(-np.dot(p_g, np.log(scores)))


def loss_discriminator(real_scores, p_g, fake_scores) -> float:
    real = np.clip(np.asarray(real_scores, dtype=float), SCORE_FLOOR, 1 - SCORE_FLOOR)
    fake = np.clip(np.asarray(fake_scores, dtype=float), SCORE_FLOOR, 1 - SCORE_FLOOR)
    return float(np.mean(np.log(real)) + np.dot(p_g, np.log(1 - fake)))


def init_params(config: DualPqcConfig, seed: int, delta: float = 0.1) -> GeneratorParams:
    rng = np.random.default_rng(seed)
    phi1 = rng.uniform(-delta, delta, param_count(config.spec1))
    phi2 = rng.uniform(-delta, delta, param_count(config.spec2))
    return GeneratorParams(phi1, phi2)


def init_discriminator(seed: int) -> MlpParams:
    return init_mlp(np.random.default_rng([seed, 1]))


def discriminator_gradient(disc: MlpParams, real, out: GeneratorOutput, penalty_cfg: PenaltyConfig):
    """``(L_D, penalty, gradient of -(L_D - penalty) as a flat vector)``."""
    real_scores, real_cache = forward_batch(disc, real)
    fake_scores, fake_cache = forward_batch(disc, out.images)
    loss_d = loss_discriminator(real_scores, out.p_g, fake_scores)
    # d log s / d logit = 1 - s,  d log(1 - s) / d logit = -s
    g_real, _ = backward_batch(disc, real_cache, -(1 - real_scores) / len(real))
    g_fake, _ = backward_batch(disc, fake_cache, out.p_g * fake_scores)
    pen, g_pen = gradient_penalty(disc, real, penalty_cfg)
    return loss_d, pen, g_real.to_vector() + g_fake.to_vector() + g_pen.to_vector()


def generator_gradients(circuit: DualPqcConfig, gen: GeneratorParams, out: GeneratorOutput, disc: MlpParams, shots=0, rng=None):
    """``(L_G, dL_G/dphi1, dL_G/dphi2)`` with ``disc`` scoring the images in ``out``."""
    scores, dD = input_gradients(disc, out.images)
    scores = np.clip(scores, SCORE_FLOOR, 1 - SCORE_FLOOR)
    loss_g = loss_generator(out.p_g, scores)
    g1 = grad_phi1(circuit, gen, scores, shots, rng)
    g2 = grad_phi2(circuit, gen, scores, dD, shots, rng, p_g=out.p_g)
    return loss_g, g1, g2


@dataclass
class MetricsRecord:
    epoch: int
    loss_g: float
    loss_d: float
    penalty: float
    kl_mean: float  # KL(real mean || generated mean)
    kl_mean_reverse: float
    p_g: np.ndarray
    # [set, image]: KL(cluster mean s || generated image i)
    image_kl: np.ndarray
    disc_updates: int
    gen_updates: int
    mean_image: np.ndarray = field(default=None, repr=False)
    images: np.ndarray = field(default=None, repr=False)


@dataclass
class EvalReference:
    real_mean: np.ndarray
    cluster_means: np.ndarray


def eval_reference(config: TrainConfig, dataset) -> EvalReference:
    clusters = kmeans(dataset, 2**config.n, seed=config.seed_data)
    return EvalReference(real_mean=np.asarray(dataset).mean(axis=0), cluster_means=clusters.means)


def _check_output(out, epoch):
    bad = abs(out.p_g.sum() - 1) > NORM_CHECK or np.any(np.abs(out.images.sum(axis=1) - 1) > NORM_CHECK)
    if bad or np.any(out.p_g < 0) or np.any(out.images < 0):
        raise TrainingDiverged(f"generator output left the probability simplex at epoch {epoch}")


def _dump(epoch, batch, gen, disc, losses):
    return {
        "epoch": epoch,
        "batch": batch,
        "losses": losses,
        "phi1": gen.phi1.tolist(),
        "phi2": gen.phi2.tolist(),
        "disc": disc.to_vector().tolist(),
    }


def train(config: TrainConfig, dataset, callback=None, reference: EvalReference = None):
    """Run the full adversarial schedule.

    Returns ``(generator params, discriminator params, list of MetricsRecord)``.
    ``callback(record, gen, disc)`` is invoked after every epoch.
    """
    data = np.asarray(dataset, dtype=float)
    circuit = config.circuit
    if data.ndim != 2 or data.shape[1] != 2**config.n:
        raise ConfigError(f"dataset rows must have {2**config.n} pixels, got shape {data.shape}")
    if reference is None:
        reference = eval_reference(config, data)
    penalty_cfg = config.penalty

    gen = init_params(circuit, config.seed_params, config.init_delta)
    disc = init_discriminator(config.seed_params)
    layer_sizes = disc.layer_sizes
    disc_vec = disc.to_vector()
    opt = {
        name: AmsgradState.zeros(size, config.beta1, config.beta2, config.amsgrad_eps)
        for name, size in (("phi1", len(gen.phi1)), ("phi2", len(gen.phi2)), ("disc", len(disc_vec)))
    }
    shuffle_rng = np.random.default_rng(config.seed_shuffle)
    shot_rng = np.random.default_rng([config.seed_shuffle, 2]) if config.shots else None
    shots = config.shots

    history = []
    disc_updates = gen_updates = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(data))
        sums = np.zeros(3)
        batches = 0
        for batch_no, start in enumerate(range(0, len(data), config.batch_size)):
            real = data[order[start : start + config.batch_size]]
            out = generate(circuit, gen, shots, shot_rng)

            for _ in range(config.disc_steps):
                loss_d, pen, grad = discriminator_gradient(disc, real, out, penalty_cfg)
                disc_vec = amsgrad_step(opt["disc"], disc_vec, grad, config.lr_disc)
                disc = MlpParams.from_vector(disc_vec, layer_sizes)
                disc_updates += 1

            loss_g, g1, g2 = generator_gradients(circuit, gen, out, disc, shots, shot_rng)
            if not np.isfinite([loss_d, loss_g, pen]).all():
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}",
                    _dump(epoch, batch_no, gen, disc, [loss_g, loss_d, pen]),
                )
            gen = GeneratorParams(
                amsgrad_step(opt["phi1"], gen.phi1, g1, config.lr_phi1),
                amsgrad_step(opt["phi2"], gen.phi2, g2, config.lr_phi2),
            )
            gen_updates += 1
            sums += (loss_g, loss_d, pen)
            batches += 1

        out = generate(circuit, gen)
        _check_output(out, epoch)
        gen_mean = mean_image(out)
        loss_g, loss_d, pen = sums / batches
        record = MetricsRecord(
            epoch=epoch,
            loss_g=float(loss_g),
            loss_d=float(loss_d),
            penalty=float(pen),
            kl_mean=relative_entropy(reference.real_mean, gen_mean),
            kl_mean_reverse=relative_entropy(gen_mean, reference.real_mean),
            p_g=out.p_g,
            image_kl=kl_matrix(reference.cluster_means, out.images),
            disc_updates=disc_updates,
            gen_updates=gen_updates,
            mean_image=gen_mean,
            images=out.images,
        )
        history.append(record)
        log.info("epoch %d  L_G %.6f  L_D %.6f  KL(mean) %.3e", epoch, record.loss_g, record.loss_d, record.kl_mean)
        if callback is not None:
            callback(record, gen, disc)
    return gen, disc, history


def with_overrides(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, **changes)
