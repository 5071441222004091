"""Two-stage training: graph autoencoder with straight-through quantization,
then a frozen-encoder bridge drift model regressed on closed-form targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import bridges, fsq, nn
from .errors import PreconditionError, TrainingDiverged
from .features import FeatureSpec, augment, batch_graphs
from .fsq import LatentSet, QuantizationSpec
from .graphs import AttributedGraph

TIME_MARGIN_STEPS = 1  # t is sampled in [eps, T - eps] with eps = T / steps


@dataclass
class TrainConfig:
    seed: int = 0
    ae_lr: float = 5e-4
    ae_batch_size: int = 32
    ae_epochs: int = 3000
    bridge_lr_min: float = 1e-4
    bridge_lr_max: float = 5e-4
    bridge_batch_size: int = 64
    bridge_epochs: int = 5000
    loss_variant: str = "squared_error"
    x_acc_target: float | None = None
    e_acc_target: float | None = None
    log_every: int = 1

    def __post_init__(self):
        if self.ae_lr <= 0 or self.bridge_lr_min <= 0 or self.bridge_lr_max <= 0:
            raise PreconditionError("learning rates must be positive")
        if self.ae_epochs < 1 or self.bridge_epochs < 1:
            raise PreconditionError("epochs must be >= 1")
        if self.loss_variant not in ("squared_error", "cross_entropy"):
            raise PreconditionError(f"unknown loss variant '{self.loss_variant}'")


@dataclass
class NodeCountHistogram:
    """Empirical distribution of node counts over a training set."""

    probs: dict

    @classmethod
    def from_graphs(cls, graphs) -> "NodeCountHistogram":
        counts = {}
        for g in graphs:
            counts[g.n] = counts.get(g.n, 0) + 1
        total = sum(counts.values())
        return cls({n: c / total for n, c in sorted(counts.items())})

    def sample(self, rng) -> int:
        ns = np.array(sorted(self.probs))
        p = np.array([self.probs[int(n)] for n in ns])
        return int(rng.choice(ns, p=p))

    def total(self) -> float:
        return float(sum(self.probs.values()))


@dataclass
class StageResult:
    stores: dict
    metrics: list = field(default_factory=list)


def _one_hot_targets(batch):
    # the batch features already are one-hot targets for X and E
    return batch.x, batch.e


def _masked_fraction_correct(logits, targets, mask):
    pred = np.argmax(logits, axis=-1)
    true = np.argmax(targets, axis=-1)
    hits = (pred == true) & (mask > 0)
    denom = max(mask.sum(), 1.0)
    return float(hits.sum() / denom)


def _reconstruction_loss(x_logits, e_logits, batch, variant):
    node_mask = ad.constant(batch.mask.astype(np.float64)[:, :, None])
    pair_mask = ad.constant(batch.pair_mask()[:, :, :, None])
    n_nodes = max(batch.mask.sum(), 1)
    n_pairs = max(batch.pair_mask().sum(), 1)
    xt = ad.constant(batch.x)
    et = ad.constant(batch.e)
    if variant == "squared_error":
        dx_ = x_logits - xt
        de_ = e_logits - et
        lx = ad.tsum(dx_ * dx_ * node_mask) * (1.0 / (n_nodes * batch.x.shape[-1]))
        le = ad.tsum(de_ * de_ * pair_mask) * (1.0 / (n_pairs * batch.e.shape[-1]))
    else:
        lpx = ad.log_softmax(x_logits, axis=-1)
        lpe = ad.log_softmax(e_logits, axis=-1)
        lx = ad.tsum(lpx * xt * node_mask) * (-1.0 / n_nodes)
        le = ad.tsum(lpe * et * pair_mask) * (-1.0 / n_pairs)
    return lx + le


def _ae_forward(enc_tensors, dec_tensors, enc_cfg, dec_cfg, batch, qspec,
                quantized=True):
    z_raw = nn.encoder_forward(enc_tensors, enc_cfg, batch)
    if quantized:
        z_q = fsq.quantize(z_raw.value, qspec)
        z_in = fsq.ste_combine(z_raw, z_q)
    else:
        z_in = z_raw
    x_logits, e_logits = nn.decoder_forward(dec_tensors, dec_cfg, z_in, batch.mask)
    return z_raw, x_logits, e_logits


def _batches(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def train_autoencoder(graphs, fspec: FeatureSpec, enc_cfg, dec_cfg,
                      qspec: QuantizationSpec, config: TrainConfig,
                      quantized: bool = True) -> StageResult:
    """Stage 1: fit encoder and decoder jointly under reconstruction loss.

    With `quantized` False the latent bottleneck is the identity (no
    rounding, no straight-through), which is the unquantized ablation.
    """
    if not graphs:
        raise PreconditionError("training set is empty")
    augmented = [augment(g, fspec) for g in graphs]
    rng = np.random.default_rng(config.seed)
    enc = nn.init_encoder_params(enc_cfg, seed=int(rng.integers(2**31)))
    dec = nn.init_decoder_params(dec_cfg, seed=int(rng.integers(2**31)))
    metrics = []
    last_good = None
    for epoch in range(config.ae_epochs):
        order = rng.permutation(len(augmented))
        epoch_loss = 0.0
        x_hits = e_hits = x_total = e_total = 0.0
        for idx in _batches(order, config.ae_batch_size):
            batch = batch_graphs([augmented[i] for i in idx])
            enc_t = enc.tensors()
            dec_t = dec.tensors()
            _, x_logits, e_logits = _ae_forward(
                enc_t, dec_t, enc_cfg, dec_cfg, batch, qspec, quantized=quantized)
            loss = _reconstruction_loss(x_logits, e_logits, batch,
                                        config.loss_variant)
            if not np.isfinite(loss.value):
                raise TrainingDiverged(
                    f"autoencoder loss non-finite at epoch {epoch}",
                    last_good=last_good)
            loss.backward()
            enc.collect_grads(enc_t)
            dec.collect_grads(dec_t)
            enc.adam_step(config.ae_lr)
            dec.adam_step(config.ae_lr)
            epoch_loss += float(loss.value) * len(idx)

            node_mask = batch.mask.astype(np.float64)
            pair_mask = batch.pair_mask()
            x_hits += _masked_fraction_correct(
                x_logits.value, batch.x, node_mask) * node_mask.sum()
            x_total += node_mask.sum()
            e_hits += _masked_fraction_correct(
                e_logits.value, batch.e, pair_mask) * pair_mask.sum()
            e_total += pair_mask.sum()
        record = {
            "epoch": epoch,
            "loss": epoch_loss / len(augmented),
            "x_acc": x_hits / max(x_total, 1.0),
            "e_acc": e_hits / max(e_total, 1.0),
        }
        metrics.append(record)
        last_good = {"encoder": enc.copy(), "decoder": dec.copy()}
        if (config.x_acc_target is not None and config.e_acc_target is not None
                and record["x_acc"] >= config.x_acc_target
                and record["e_acc"] >= config.e_acc_target):
            break
    return StageResult(stores={"encoder": enc, "decoder": dec}, metrics=metrics)


def encode_dataset(enc_store, enc_cfg, graphs, fspec: FeatureSpec,
                   qspec: QuantizationSpec):
    """Quantized latents per graph (trimmed to true node count) + size histogram."""
    tensors = enc_store.tensors()
    latents = []
    for g in graphs:
        batch = batch_graphs([augment(g, fspec)])
        z_raw = nn.encoder_forward(tensors, enc_cfg, batch)
        z_q = fsq.quantize(z_raw.value[0, :g.n], qspec)
        ls = LatentSet(z_q, quantized=True)
        if not ls.on_lattice(qspec):
            raise PreconditionError("encoded latent left the lattice")
        latents.append(ls)
    return latents, NodeCountHistogram.from_graphs(graphs)


def encode_dataset_raw(enc_store, enc_cfg, graphs, fspec: FeatureSpec):
    """Unquantized latents per graph, for the continuous-domain ablation."""
    tensors = enc_store.tensors()
    latents = []
    for g in graphs:
        batch = batch_graphs([augment(g, fspec)])
        z_raw = nn.encoder_forward(tensors, enc_cfg, batch)
        latents.append(LatentSet(z_raw.value[0, :g.n], quantized=False))
    return latents, NodeCountHistogram.from_graphs(graphs)


def latent_box(latents, margin: float = 1e-6) -> bridges.ContinuousDomainSpec:
    """Per-dimension min/max over all latent entries, padded by a margin."""
    stacked = np.concatenate([ls.z for ls in latents], axis=0)
    return bridges.ContinuousDomainSpec(
        l_min=tuple(stacked.min(axis=0) - margin),
        l_max=tuple(stacked.max(axis=0) + margin),
    )


def _pad_latents(latent_list):
    ns = [ls.n for ls in latent_list]
    max_n = max(ns)
    f_dim = latent_list[0].f
    z = np.zeros((len(latent_list), max_n, f_dim))
    mask = np.zeros((len(latent_list), max_n), dtype=bool)
    for i, ls in enumerate(latent_list):
        z[i, :ls.n] = ls.z
        mask[i, :ls.n] = True
    return z, mask


def _cosine_lr(lo, hi, epoch, total):
    if total <= 1:
        return hi
    progress = epoch / (total - 1)
    return lo + 0.5 * (hi - lo) * (1.0 + np.cos(np.pi * progress))


def train_bridge(latents, config: TrainConfig, sched: bridges.BridgeSchedule,
                 qspec: QuantizationSpec, drift_cfg, prior=None,
                 mean_form: str = "alg1", box=None) -> StageResult:
    """Stage 2: regress the drift net onto the closed-form bridge target.

    The encoder is frozen by construction (only cached latents enter).
    With `box` set the lattice steering force is replaced by the
    continuous-domain one and states are clipped into the box.
    """
    if not latents:
        raise PreconditionError("no latents to train on")
    prior = prior or bridges.PriorSpec()
    rng = np.random.default_rng(config.seed + 1)
    psi = nn.init_drift_params(drift_cfg, seed=int(rng.integers(2**31)))
    eps = sched.T / sched.steps * TIME_MARGIN_STEPS
    metrics = []
    last_good = None
    for epoch in range(config.bridge_epochs):
        lr = _cosine_lr(config.bridge_lr_min, config.bridge_lr_max,
                        epoch, config.bridge_epochs)
        order = rng.permutation(len(latents))
        epoch_loss = 0.0
        for idx in _batches(order, config.bridge_batch_size):
            z_G, mask = _pad_latents([latents[i] for i in idx])
            b = z_G.shape[0]
            t = rng.uniform(eps, sched.T - eps, size=b)
            z_0 = prior.sample(z_G.shape, rng)
            z_t = bridges.sample_bridge_state(z_G, z_0, t, sched, rng,
                                              mean_form=mean_form)
            if box is not None:
                z_t = box.clip(z_t)
                steer = bridges.drift_box(z_t, t, sched, box)
            else:
                steer = bridges.drift_lattice(z_t, t, sched, qspec)
            endpoint = bridges.drift_endpoint(z_G, z_t, t, sched)
            inv_sigma = 1.0 / bridges.sigma(t, sched)
            target = inv_sigma[:, None, None] * (endpoint - steer)

            tensors = psi.tensors()
            psi_out = nn.drift_forward(tensors, drift_cfg, z_t, t, mask,
                                       horizon=sched.T)
            node_mask = ad.constant(mask.astype(np.float64)[:, :, None])
            diff = (psi_out - ad.constant(target)) * node_mask
            denom = max(mask.sum(), 1) * drift_cfg.latent_f
            loss = ad.tsum(diff * diff) * (1.0 / denom)
            if not np.isfinite(loss.value):
                raise TrainingDiverged(
                    f"bridge loss non-finite at epoch {epoch}", last_good=last_good)
            loss.backward()
            psi.collect_grads(tensors)
            psi.adam_step(lr)
            epoch_loss += float(loss.value) * b
        metrics.append({"epoch": epoch, "loss": epoch_loss / len(latents),
                        "lr": lr})
        last_good = {"drift": psi.copy()}
    return StageResult(stores={"drift": psi}, metrics=metrics)


def reconstruction_report(enc_store, dec_store, enc_cfg, dec_cfg, graphs,
                          fspec: FeatureSpec, qspec: QuantizationSpec,
                          quantized: bool = True) -> dict:
    """Argmax reconstruction accuracies plus majority-class baselines."""
    if not graphs:
        raise PreconditionError("empty evaluation set")
    augmented = [augment(g, fspec) for g in graphs]
    batch = batch_graphs(augmented)
    enc_t = enc_store.tensors()
    dec_t = dec_store.tensors()
    _, x_logits, e_logits = _ae_forward(enc_t, dec_t, enc_cfg, dec_cfg, batch,
                                        qspec, quantized=quantized)
    node_mask = batch.mask.astype(np.float64)
    pair_mask = batch.pair_mask()
    x_acc = _masked_fraction_correct(x_logits.value, batch.x, node_mask)
    e_acc = _masked_fraction_correct(e_logits.value, batch.e, pair_mask)

    x_labels = np.argmax(batch.x, axis=-1)[batch.mask]
    e_true = np.argmax(batch.e, axis=-1)[pair_mask > 0]
    x_major = float(np.bincount(x_labels).max() / max(x_labels.size, 1))
    e_major = float(np.bincount(e_true).max() / max(e_true.size, 1))
    return {
        "x_accuracy": x_acc,
        "e_accuracy": e_acc,
        "x_majority_baseline": x_major,
        "e_majority_baseline": e_major,
        "n_graphs": len(graphs),
    }


def train_unquantized_variant(graphs, fspec: FeatureSpec, enc_cfg, dec_cfg,
                              config: TrainConfig):
    """Ablation pipeline: identity bottleneck; returns the latent box too."""
    result = train_autoencoder(graphs, fspec, enc_cfg, dec_cfg,
                               QuantizationSpec((3,) * enc_cfg.latent_f),
                               config, quantized=False)
    latents, hist = encode_dataset_raw(result.stores["encoder"], enc_cfg,
                                       graphs, fspec)
    box = latent_box(latents)
    return result, latents, hist, box


def sample_graph_latents(psi_store, drift_cfg, node_counts, sched, qspec,
                         prior, seed, snap: bool = True, box=None):
    """Integrate the learned bridge for a batch of graphs at once.

    Returns one latent array per requested node count. Trajectories share
    a padded batch; masked rows are discarded at the end.
    """
    if not node_counts:
        return []
    rng = np.random.default_rng(seed)
    b = len(node_counts)
    max_n = max(node_counts)
    mask = np.zeros((b, max_n), dtype=bool)
    for i, n in enumerate(node_counts):
        mask[i, :n] = True
    tensors = psi_store.tensors()

    def drift(z, t):
        psi_val = nn.drift_forward(tensors, drift_cfg, z, t, mask,
                                   horizon=sched.T).value
        if box is not None:
            steer = bridges.drift_box(z, t, sched, box)
        else:
            steer = bridges.drift_lattice(z, t, sched, qspec)
        return bridges.sigma(t, sched) * psi_val + steer

    f_dim = drift_cfg.latent_f
    z0 = prior.sample((b, max_n, f_dim), rng)
    if box is not None:
        z0 = box.clip(z0)
    z = bridges.em_integrate(drift, z0, sched, rng,
                             clip_box=box if box is not None else None)
    if snap and box is None:
        z = fsq.nearest_lattice(z, qspec)
    return [z[i, :n].copy() for i, n in enumerate(node_counts)]


def decode_latents(dec_store, dec_cfg, latents, node_counts=None):
    """Argmax-decode latent node sets into attributed graphs."""
    if node_counts is None:
        node_counts = [z.shape[0] for z in latents]
    b = len(latents)
    max_n = max(node_counts)
    f_dim = dec_cfg.latent_f
    z = np.zeros((b, max_n, f_dim))
    mask = np.zeros((b, max_n), dtype=bool)
    for i, (zi, n) in enumerate(zip(latents, node_counts)):
        z[i, :n] = zi[:n]
        mask[i, :n] = True
    tensors = dec_store.tensors()
    x_logits, e_logits = nn.decoder_forward(tensors, dec_cfg, z, mask)
    graphs = []
    for i, n in enumerate(node_counts):
        nodes = np.argmax(x_logits.value[i, :n], axis=-1)
        edges = np.argmax(e_logits.value[i, :n, :n], axis=-1)
        edges = np.triu(edges, k=1)
        edges = edges + edges.T
        graphs.append(AttributedGraph(nodes, edges, dx=dec_cfg.dx, de=dec_cfg.de))
    return graphs
