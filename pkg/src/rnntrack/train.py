"""Training loops for the motion and association networks.

Both trainers draw fresh synthetic scenes as they go, optimise with RMSprop
under a step-decay learning rate, and return the trained network together
with a list of per-iteration log rows.
"""

import csv
import logging

import numpy as np

from . import nn
from .association import AssocNet, assoc_instances, batch_instances
from .datagen import SceneConfig, TrajectoryModel, sample_sequence
from .motion import LossWeights, MotionBatch, MotionNet, motion_episodes

log = logging.getLogger(__name__)


def learning_rate(k, base=3e-4, decay=0.95, every=20000):
    """``base * decay ** floor(k / every)``."""
    return base * decay ** (k // every)


def scene_config(cfg, **overrides):
    values = dict(
        seq_length=cfg.seq_length, min_targets=cfg.min_targets, max_targets=cfg.max_targets,
        max_detections=cfg.max_detections, detection_prob=cfg.detection_prob,
        clutter_rate=cfg.clutter_rate, detection_noise=cfg.detection_noise, seed=cfg.seed,
    )
    values.update(overrides)
    return SceneConfig(**values)


def loss_weights(cfg):
    return LossWeights(cfg.loss_prediction, cfg.loss_update, cfg.loss_existence,
                       cfg.loss_smoothness)


class _Pool:
    """Endless stream of training items cut from freshly sampled scenes."""

    def __init__(self, make_items, rng):
        self.make_items = make_items
        self.rng = rng
        self.buffer = []

    def take(self, n):
        while len(self.buffer) < n:
            items = self.make_items(self.rng)
            self.buffer.extend(items[i] for i in self.rng.permutation(len(items)))
        out, self.buffer = self.buffer[:n], self.buffer[n:]
        return out


def _optimise(params, k, cfg):
    nn.clip_gradients(params, cfg.max_grad_norm)
    lr = learning_rate(k, cfg.learning_rate, cfg.lr_decay, cfg.lr_decay_every)
    for p in params:
        nn.rmsprop_update(p, lr, cfg.rmsprop_decay, cfg.rmsprop_eps)
    return lr


def train_motion(cfg, model=None, net=None, callback=None):
    """Train a `MotionNet` for ``cfg.iterations`` minibatches."""
    model = TrajectoryModel() if model is None else model
    scfg = scene_config(cfg)
    init_rng, data_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    if net is None:
        net = MotionNet(cfg.motion_hidden, cfg.update_hidden, init_rng)
    weights = loss_weights(cfg)

    def make_items(rng):
        scene = sample_sequence(model, scfg, rng)
        return motion_episodes(scene, rng, cfg.init_existence, cfg.clutter_episodes)

    pool = _Pool(make_items, data_rng)
    # a refitted prediction head is owned by the least-squares solve
    params = [p for name, p in net.params().items()
              if not (cfg.motion_refit_every and name == "pred.W")]
    if cfg.motion_refit_every:
        net.refit_prediction_head(MotionBatch.stack(pool.take(cfg.motion_refit_batch)),
                                  cfg.motion_refit_ridge)
    history = []
    for k in range(cfg.iterations):
        batch = MotionBatch.stack(pool.take(cfg.batch_size))
        loss, terms = net.loss_and_grads(batch, weights, cfg.motion_detach_existence)
        lr = _optimise(params, k, cfg)
        last = k == cfg.iterations - 1
        if cfg.motion_refit_every and ((k + 1) % cfg.motion_refit_every == 0 or last):
            net.refit_prediction_head(MotionBatch.stack(pool.take(cfg.motion_refit_batch)),
                                      cfg.motion_refit_ridge)
        if k % cfg.log_every == 0 or last:
            row = {"iteration": k, "loss": loss, "lr": lr, **terms}
            history.append(row)
            log.info("motion it=%d loss=%.5f", k, loss)
            if callback is not None:
                callback(net, row)
    net.iteration = cfg.iterations
    return net, history


def train_assoc(cfg, model=None, net=None, callback=None):
    """Train an `AssocNet` on Hungarian (or provenance) labels."""
    model = TrajectoryModel() if model is None else model
    scfg = scene_config(cfg, max_detections=cfg.assoc_max_detections,
                        max_targets=min(cfg.max_targets, cfg.assoc_max_targets),
                        min_targets=min(cfg.min_targets, cfg.assoc_max_targets))
    init_rng, data_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    if net is None:
        net = AssocNet(cfg.assoc_max_targets, cfg.assoc_max_detections, cfg.assoc_hidden,
                       cfg.assoc_layers, cfg.assoc_embed or None, init_rng)

    def make_items(rng):
        scene = sample_sequence(model, scfg, rng)
        return assoc_instances(scene, rng, cfg.assoc_max_targets, cfg.assoc_pred_noise,
                               cfg.assoc_miss_cost, cfg.assoc_labels)

    pool = _Pool(make_items, data_rng)
    params = list(net.params().values())
    history = []
    for k in range(cfg.iterations):
        x, labels, mask = batch_instances(net, pool.take(cfg.batch_size))
        loss = nn.bptt_gradients(net.model, x, labels, "nll", mask)
        lr = _optimise(params, k, cfg)
        if k % cfg.log_every == 0 or k == cfg.iterations - 1:
            row = {"iteration": k, "loss": loss, "lr": lr}
            history.append(row)
            log.info("assoc it=%d loss=%.5f", k, loss)
            if callback is not None:
                callback(net, row)
    net.iteration = cfg.iterations
    return net, history


def write_history(history, path):
    """Training curve as CSV (iteration, loss, lr, per-term breakdown)."""
    if not history:
        return
    keys = list(history[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in history:
            w.writerow([row[k] if isinstance(row[k], int) else f"{row[k]:.10g}" for k in keys])
