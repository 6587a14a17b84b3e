"""Bidirectional training: encoder-guided and sampled-latent passes.

Each step runs (a) a discriminator update on real targets versus the
encoder-guided synthesis with the generator frozen, then (b) a joint
generator+encoder update covering both directions: the encoded-latent pass
carries the adversarial, pixel, perceptual, and code-regularization terms;
the sampled-latent pass carries the adversarial term plus the
code-regularization of the re-encoded synthesis.  All stochastic draws are
derived statelessly from (seed, label, step), which is what makes
checkpoint resume bit-exact.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses as L
from .container import load_container, save_container
from .dataset import DatasetManifest
from .nets import (
    Discriminator,
    DiscriminatorConfig,
    Encoder,
    EncoderConfig,
    Generator,
    GeneratorConfig,
    reparameterize,
    init_params,
)
from .seeds import derive_seed, torch_seed
from .volume import Volume

__all__ = [
    "OptimizerConfig",
    "TrainConfig",
    "TrainSetup",
    "TrainState",
    "StepLog",
    "TrainResult",
    "NonFiniteLossError",
    "ABLATIONS",
    "resolve_ablation",
    "create_state",
    "train_step",
    "train",
    "synthesize",
    "save_checkpoint",
    "load_checkpoint",
    "load_split_tensors",
    "volumes_to_slices",
    "slices_to_volume",
]

ABLATIONS = (
    "full",
    "no_discriminator",
    "no_l1",
    "no_perceptual",
    "variant_unet",
    "variant_resunet",
    "mode_2d",
)

CHECKPOINT_SCHEMA = 1


class NonFiniteLossError(RuntimeError):
    """A loss term became non-finite; carries the offending term name."""

    def __init__(self, term: str, value: float, step: int):
        super().__init__(f"non-finite loss term {term!r} ({value}) at step {step}")
        self.term = term
        self.step = step


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0 < b < 1:
                raise ValueError(f"{name} must be in (0, 1), got {b}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 2
    optimizer: OptimizerConfig = OptimizerConfig()
    loss_weights: L.LossWeights = L.LossWeights()
    seed: int = 0
    ablation: str = "full"
    checkpoint_every: int = 200

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.checkpoint_every < 1:
            raise ValueError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}, expected one of {ABLATIONS}")


@dataclass(frozen=True)
class TrainSetup:
    """The network configs and training config for one run."""

    generator: GeneratorConfig = GeneratorConfig()
    discriminator: DiscriminatorConfig = DiscriminatorConfig()
    encoder: EncoderConfig = EncoderConfig()
    train: TrainConfig = TrainConfig()
    feature_seed: int = L.DEFAULT_FEATURE_SEED
    feature_channels: tuple[int, int] = (8, 16)

    def __post_init__(self):
        if self.generator.latent_dim != self.encoder.latent_dim:
            raise ValueError(
                f"generator latent_dim {self.generator.latent_dim} != encoder latent_dim {self.encoder.latent_dim}"
            )


def resolve_ablation(setup: TrainSetup) -> tuple[TrainSetup, L.LossWeights, bool]:
    """Apply the ablation preset: returns (resolved setup, weights, use_discriminator)."""
    ab = setup.train.ablation
    weights = setup.train.loss_weights
    gen, disc, enc = setup.generator, setup.discriminator, setup.encoder
    use_d = ab != "no_discriminator"
    if ab == "no_l1":
        weights = dataclasses.replace(weights, lambda1=0.0)
    elif ab == "no_perceptual":
        weights = dataclasses.replace(weights, lambda2=0.0)
    elif ab == "variant_unet":
        gen = dataclasses.replace(gen, variant="plain")
    elif ab == "variant_resunet":
        gen = dataclasses.replace(gen, variant="residual")
    elif ab == "mode_2d":
        gen = dataclasses.replace(gen, dims=2)
        disc = dataclasses.replace(disc, dims=2)
        enc = dataclasses.replace(enc, dims=2)
    resolved = dataclasses.replace(setup, generator=gen, discriminator=disc, encoder=enc)
    return resolved, weights, use_d


@dataclass
class StepLog:
    step: int
    d_loss: float
    g_adv: float
    l1: float
    perceptual: float
    kl_forward: float
    kl_backward: float
    g_total: float
    objective: float
    wall_time: float

    FIELDS = (
        "d_loss",
        "g_adv",
        "l1",
        "perceptual",
        "kl_forward",
        "kl_backward",
        "g_total",
        "objective",
    )


@dataclass
class TrainState:
    """The checkpointable unit: networks, optimizers, step, loss history."""

    generator: Generator
    discriminator: Discriminator
    encoder: Encoder
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    opt_e: torch.optim.Adam
    extractor: L.FeatureExtractor
    seed: int
    step: int = 0
    history: list[StepLog] = field(default_factory=list)
    val_history: list[dict] = field(default_factory=list)


def setup_to_dict(setup: TrainSetup) -> dict:
    return dataclasses.asdict(setup)


def setup_from_dict(doc: dict) -> TrainSetup:
    doc = dict(doc)
    gen = GeneratorConfig(**{**doc["generator"], "dims": doc["generator"].get("dims", 3)})
    disc_doc = dict(doc["discriminator"])
    disc_doc["channel_schedule"] = tuple(disc_doc["channel_schedule"])
    disc = DiscriminatorConfig(**disc_doc)
    enc_doc = dict(doc["encoder"])
    enc_doc["block_schedule"] = tuple(enc_doc["block_schedule"])
    enc = EncoderConfig(**enc_doc)
    train_doc = dict(doc["train"])
    train_doc["optimizer"] = OptimizerConfig(**train_doc["optimizer"])
    train_doc["loss_weights"] = L.LossWeights(**train_doc["loss_weights"])
    return TrainSetup(
        generator=gen,
        discriminator=disc,
        encoder=enc,
        train=TrainConfig(**train_doc),
        feature_seed=doc.get("feature_seed", L.DEFAULT_FEATURE_SEED),
        feature_channels=tuple(doc.get("feature_channels", (8, 16))),
    )


def setup_hash(setup: TrainSetup) -> str:
    canonical = json.dumps(setup_to_dict(setup), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _make_adam(params, opt_cfg: OptimizerConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        params, lr=opt_cfg.learning_rate, betas=(opt_cfg.beta1, opt_cfg.beta2)
    )


def create_state(setup: TrainSetup) -> TrainState:
    """Build and deterministically initialize networks and optimizers."""
    resolved, _, _ = resolve_ablation(setup)
    seed = resolved.train.seed
    gen = init_params(Generator(resolved.generator), derive_seed(seed, "init-g"))
    disc = init_params(Discriminator(resolved.discriminator), derive_seed(seed, "init-d"))
    enc = init_params(Encoder(resolved.encoder), derive_seed(seed, "init-e"))
    opt_cfg = resolved.train.optimizer
    return TrainState(
        generator=gen,
        discriminator=disc,
        encoder=enc,
        opt_g=_make_adam(gen.parameters(), opt_cfg),
        opt_d=_make_adam(disc.parameters(), opt_cfg),
        opt_e=_make_adam(enc.parameters(), opt_cfg),
        extractor=L.FeatureExtractor(resolved.feature_channels, resolved.feature_seed),
        seed=seed,
    )


def _term_value(t) -> float:
    return float(t.item()) if torch.is_tensor(t) else float(t)


def _check_state_finite(state: TrainState) -> None:
    for name, module in (
        ("generator", state.generator),
        ("discriminator", state.discriminator),
        ("encoder", state.encoder),
    ):
        for pname, p in module.named_parameters():
            if not torch.isfinite(p).all():
                raise NonFiniteLossError(f"{name}.{pname}", math.nan, state.step)


def _discriminator_phase(state: TrainState, y: torch.Tensor, fake: torch.Tensor) -> float:
    """Update only the discriminator on real targets vs a detached fake."""
    scores_real = state.discriminator(y)
    scores_fake = state.discriminator(fake.detach())
    loss_d = L.d_loss(scores_real, scores_fake)
    state.opt_d.zero_grad()
    loss_d.backward()
    state.opt_d.step()
    return _term_value(loss_d)


def _generator_encoder_phase(
    state: TrainState,
    x: torch.Tensor,
    y: torch.Tensor,
    fake_enc: torch.Tensor,
    mu: torch.Tensor,
    logvar: torch.Tensor,
    weights: L.LossWeights,
    use_d: bool,
) -> dict:
    """Joint generator+encoder update over both mapping directions."""
    z_smp = torch.randn(
        (x.shape[0], state.generator.cfg.latent_dim),
        generator=torch_seed(state.seed, "z", state.step),
    )
    fake_smp = state.generator(x, z_smp)
    mu_b, logvar_b = state.encoder(fake_smp)

    l1 = L.l1_loss(y, fake_enc)
    perc = (
        L.perceptual_loss(y, fake_enc, state.extractor)
        if weights.lambda2 > 0
        else torch.zeros(())
    )
    kl_f = L.kl_standard_normal(mu, logvar)
    kl_b = L.kl_standard_normal(mu_b, logvar_b)
    if use_d:
        adv = 0.5 * (
            L.g_adv_loss(state.discriminator(fake_enc))
            + L.g_adv_loss(state.discriminator(fake_smp))
        )
    else:
        adv = torch.zeros(())

    g_total = L.g_total_loss(adv, l1, perc, weights)
    objective = g_total + weights.kl_weight * (kl_f + kl_b)
    latent_recovery = 0.0
    if weights.latent_recovery_weight > 0:
        recovery = torch.mean(torch.abs(mu_b - z_smp))
        objective = objective + weights.latent_recovery_weight * recovery
        latent_recovery = _term_value(recovery)

    state.opt_g.zero_grad()
    state.opt_e.zero_grad()
    objective.backward()
    state.opt_g.step()
    state.opt_e.step()

    # Log the aggregate as the float64 recombination of the logged terms so
    # the bookkeeping identity holds to full logged precision.
    terms = {
        "g_adv": _term_value(adv),
        "l1": _term_value(l1),
        "perceptual": _term_value(perc),
        "kl_forward": _term_value(kl_f),
        "kl_backward": _term_value(kl_b),
    }
    terms["g_total"] = (
        terms["g_adv"] + weights.lambda1 * terms["l1"] + weights.lambda2 * terms["perceptual"]
    )
    terms["objective"] = (
        terms["g_total"]
        + weights.kl_weight * (terms["kl_forward"] + terms["kl_backward"])
        + weights.latent_recovery_weight * latent_recovery
    )
    return terms


def train_step(
    state: TrainState, x: torch.Tensor, y: torch.Tensor, setup: TrainSetup
) -> StepLog:
    """One full iteration; mutates ``state`` in place and returns the log."""
    t0 = time.perf_counter()
    _, weights, use_d = resolve_ablation(setup)
    step = state.step

    # Encoder-guided pass: encode the real target and synthesize with its
    # code.  The synthesis is shared by both phases (the discriminator sees
    # it detached).
    mu, logvar = state.encoder(y)
    z_enc = reparameterize(mu, logvar, torch_seed(state.seed, "eps", step))
    fake_enc = state.generator(x, z_enc)

    d_value = _discriminator_phase(state, y, fake_enc) if use_d else 0.0
    terms = _generator_encoder_phase(state, x, y, fake_enc, mu, logvar, weights, use_d)

    log = StepLog(
        step=step,
        d_loss=d_value,
        wall_time=time.perf_counter() - t0,
        **terms,
    )
    for term in StepLog.FIELDS:
        if not math.isfinite(getattr(log, term)):
            raise NonFiniteLossError(term, getattr(log, term), step)
    state.step += 1
    _check_state_finite(state)
    state.history.append(log)
    return log


def load_split_tensors(
    manifest: DatasetManifest, split: str
) -> tuple[torch.Tensor, torch.Tensor, list[int]]:
    """Stack a split's source/target volumes into (N, 1, D, H, W) tensors."""
    indices = manifest.indices(split)
    if not indices:
        raise ValueError(f"split {split!r} is empty")
    sources, targets = [], []
    for i in indices:
        src, tgt = manifest.load_pair(i)
        sources.append(torch.from_numpy(src.data))
        targets.append(torch.from_numpy(tgt.data))
    return torch.stack(sources)[:, None], torch.stack(targets)[:, None], indices


def volumes_to_slices(batch: torch.Tensor) -> torch.Tensor:
    """(N, 1, D, H, W) -> (N*D, 1, H, W): axial slices as independent samples."""
    n, c, d, h, w = batch.shape
    return batch.permute(0, 2, 1, 3, 4).reshape(n * d, c, h, w)


def slices_to_volume(slices: torch.Tensor) -> torch.Tensor:
    """(D, 1, H, W) -> (1, 1, D, H, W): reassemble one volume from its slices."""
    d, c, h, w = slices.shape
    return slices.permute(1, 0, 2, 3).reshape(1, c, d, h, w)


def synthesize(
    generator: Generator,
    x: Volume | np.ndarray | torch.Tensor,
    z_mode: str = "zero",
    z_seed: int | None = None,
    z: torch.Tensor | None = None,
) -> Volume:
    """One deterministic generator pass over a single source volume.

    ``z_mode`` is one of ``zero``, ``sample`` (requires ``z_seed``), or
    ``provided`` (requires ``z``).  A 2D generator is applied slice-wise
    with the same latent vector for every axial slice.
    """
    data = x.data if isinstance(x, Volume) else x
    spacing = x.spacing if isinstance(x, Volume) else (1.0, 1.0, 1.0)
    t = torch.as_tensor(np.asarray(data, dtype=np.float32))
    if t.ndim != 3:
        raise ValueError(f"expected a rank-3 volume, got shape {tuple(t.shape)}")
    latent_dim = generator.cfg.latent_dim

    if z_mode == "zero":
        z_row = torch.zeros((1, latent_dim))
    elif z_mode == "sample":
        if z_seed is None:
            raise ValueError("z_mode='sample' requires z_seed")
        z_row = torch.randn((1, latent_dim), generator=torch_seed(z_seed, "synth-z"))
    elif z_mode == "provided":
        if z is None:
            raise ValueError("z_mode='provided' requires z")
        z_row = torch.as_tensor(z, dtype=torch.float32).reshape(1, latent_dim)
    else:
        raise ValueError(f"unknown z_mode {z_mode!r}")

    generator.eval()
    with torch.no_grad():
        if generator.cfg.dims == 3:
            out = generator(t[None, None], z_row)[0, 0]
        else:
            slices = t[:, None]  # (D, 1, H, W)
            zs = z_row.expand(slices.shape[0], latent_dim)
            out = generator(slices, zs)[:, 0]
    return Volume(out.numpy(), spacing)


# ---------------------------------------------------------------------------
# Checkpointing


def _optimizer_arrays(prefix: str, opt: torch.optim.Adam) -> dict[str, np.ndarray]:
    arrays = {}
    sd = opt.state_dict()
    for idx, st in sd["state"].items():
        step = st["step"]
        step_val = float(step.item()) if torch.is_tensor(step) else float(step)
        arrays[f"{prefix}/{idx}/step"] = np.asarray([step_val], dtype=np.float64)
        arrays[f"{prefix}/{idx}/exp_avg"] = st["exp_avg"].numpy()
        arrays[f"{prefix}/{idx}/exp_avg_sq"] = st["exp_avg_sq"].numpy()
    return arrays


def _restore_optimizer(prefix: str, opt: torch.optim.Adam, arrays: dict[str, np.ndarray]) -> None:
    sd = opt.state_dict()
    state = {}
    indices = sorted(
        {int(k.split("/")[1]) for k in arrays if k.startswith(prefix + "/")}
    )
    for idx in indices:
        state[idx] = {
            "step": torch.tensor(float(arrays[f"{prefix}/{idx}/step"][0])),
            "exp_avg": torch.from_numpy(arrays[f"{prefix}/{idx}/exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(arrays[f"{prefix}/{idx}/exp_avg_sq"].copy()),
        }
    sd["state"] = state
    opt.load_state_dict(sd)


def save_checkpoint(path, state: TrainState, setup: TrainSetup) -> None:
    arrays: dict[str, np.ndarray] = {}
    for prefix, module in (
        ("g", state.generator),
        ("d", state.discriminator),
        ("e", state.encoder),
    ):
        for name, tensor in module.state_dict().items():
            arrays[f"{prefix}/{name}"] = tensor.detach().numpy()
    arrays.update(_optimizer_arrays("opt_g", state.opt_g))
    arrays.update(_optimizer_arrays("opt_d", state.opt_d))
    arrays.update(_optimizer_arrays("opt_e", state.opt_e))
    meta = {
        "schema": CHECKPOINT_SCHEMA,
        "step": state.step,
        "seed": state.seed,
        "config": setup_to_dict(setup),
        "config_hash": setup_hash(setup),
        "history": [dataclasses.asdict(log) for log in state.history],
        "val_history": state.val_history,
    }
    try:
        save_container(path, meta, arrays)
    except OSError as exc:
        raise OSError(f"failed to write checkpoint {path} (state may be partial): {exc}") from exc


def load_checkpoint(path) -> tuple[TrainState, TrainSetup]:
    meta, arrays = load_container(path)
    if meta.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {meta.get('schema')!r}")
    setup = setup_from_dict(meta["config"])
    state = create_state(setup)
    for prefix, module in (
        ("g", state.generator),
        ("d", state.discriminator),
        ("e", state.encoder),
    ):
        sd = {
            name[len(prefix) + 1 :]: torch.from_numpy(arr.copy())
            for name, arr in arrays.items()
            if name.startswith(prefix + "/") and not name.startswith("opt_")
        }
        module.load_state_dict(sd)
    _restore_optimizer("opt_g", state.opt_g, arrays)
    _restore_optimizer("opt_d", state.opt_d, arrays)
    _restore_optimizer("opt_e", state.opt_e, arrays)
    state.step = int(meta["step"])
    state.history = [StepLog(**doc) for doc in meta["history"]]
    state.val_history = list(meta["val_history"])
    return state, setup


# ---------------------------------------------------------------------------
# The epoch loop


@dataclass
class TrainResult:
    state: TrainState
    setup: TrainSetup
    checkpoint_path: Path | None


def _validation_metrics(state: TrainState, x_val, y_val) -> dict:
    """Deterministic (zero-latent) validation snapshot of MAE/PSNR/MS-SSIM."""
    from . import metrics as M

    maes, psnrs, msssims = [], [], []
    for i in range(x_val.shape[0]):
        synth = synthesize(state.generator, x_val[i, 0], z_mode="zero")
        real = y_val[i, 0].numpy()
        maes.append(M.mae(real, synth.data))
        psnrs.append(M.psnr(real, synth.data))
        msssims.append(M.ms_ssim(real, synth.data))
    return {
        "step": state.step,
        "mae": float(np.mean(maes)),
        "psnr": float(np.mean(psnrs)),
        "ms_ssim": float(np.mean(msssims)),
    }


def train(
    manifest: DatasetManifest,
    setup: TrainSetup,
    out_dir: str | Path | None = None,
    resume: bool = False,
    validate: bool = True,
    progress=None,
) -> TrainResult:
    """Run the epoch loop over the train split; checkpoint and validate
    every ``checkpoint_every`` steps.  With ``resume``, continue bit-exactly
    from the latest checkpoint in ``out_dir``."""
    resolved, _, _ = resolve_ablation(setup)
    cfg = resolved.train
    mode_2d = resolved.generator.dims == 2

    x_train, y_train, _ = load_split_tensors(manifest, "train")
    if mode_2d:
        x_train, y_train = volumes_to_slices(x_train), volumes_to_slices(y_train)
    x_val = y_val = None
    if validate and manifest.indices("val"):
        x_val, y_val, _ = load_split_tensors(manifest, "val")

    ckpt_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = out_dir / "checkpoint.ckpt"

    if resume:
        if ckpt_path is None or not ckpt_path.exists():
            raise FileNotFoundError("resume requested but no checkpoint found")
        state, saved_setup = load_checkpoint(ckpt_path)
        # Epoch count may grow between runs; everything else must match for
        # the continued trajectory to be meaningful.
        def _identity(s: TrainSetup) -> str:
            return setup_hash(
                dataclasses.replace(s, train=dataclasses.replace(s.train, epochs=1))
            )

        if _identity(saved_setup) != _identity(setup):
            raise ValueError("checkpoint was written with a different configuration")
    else:
        state = create_state(setup)

    n = x_train.shape[0]
    batch = cfg.batch_size
    steps_per_epoch = math.ceil(n / batch)
    total_steps = cfg.epochs * steps_per_epoch

    def checkpoint():
        if x_val is not None:
            state.val_history.append(_validation_metrics(state, x_val, y_val))
        if ckpt_path is not None:
            save_checkpoint(ckpt_path, state, setup)

    while state.step < total_steps:
        epoch = state.step // steps_per_epoch
        perm = np.random.default_rng(derive_seed(cfg.seed, "shuffle", epoch)).permutation(n)
        start_batch = state.step % steps_per_epoch
        for b in range(start_batch, steps_per_epoch):
            idx = perm[b * batch : (b + 1) * batch]
            log = train_step(state, x_train[idx], y_train[idx], setup)
            if progress is not None:
                progress(log)
            if state.step % cfg.checkpoint_every == 0 or state.step == total_steps:
                checkpoint()
            if state.step >= total_steps:
                break

    if state.step % cfg.checkpoint_every != 0:
        checkpoint()
    return TrainResult(state=state, setup=setup, checkpoint_path=ckpt_path)
