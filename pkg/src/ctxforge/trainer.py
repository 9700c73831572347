"""Round/pass orchestration, fitting, evaluation, and checkpoint selection.

One round: B passes over the class list, each pass rendering one object per
class onto a permuted context slot (optionally refining it), then updating
the context pool per the ablation mode; the round ends with a single
optimizer step on all B*N generated samples. Contexts are re-seeded with
fresh noise at the start of every round.

Model selection never sees real data: a frozen synthetic validation set
(same generator, dedicated streams, no refinement) picks the checkpoint.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .context import context_update
from .datasets import TestSet, build_synthetic_testset
from .errors import ConfigError, InputError
from .imageops import AugmentParams, composite, uniform_noise_image
from .nn import AdamState, Network, adam_step, model_spec, save_checkpoint, load_checkpoint
from .objects import sample_object
from .refinement import PgdConfig, pgd_refine_batch
from .rng import substream

ABLATION_MODES = ("baseline", "random-context", "refinement-only", "image-as-context", "full")

METRICS_HEADER = ["epoch", "round", "mode", "synth_val_acc", "test_acc", "mean_loss", "seconds"]


def mode_flags(mode: str):
    """(reuse, chain, pgd) switches for an ablation mode."""
    table = {
        "baseline": (False, False, False),
        "random-context": (True, False, False),
        "refinement-only": (True, False, True),
        "image-as-context": (False, True, False),
        "full": (False, True, True),
    }
    if mode not in table:
        raise ConfigError(f"unknown ablation mode {mode!r}; known: {ABLATION_MODES}")
    return table[mode]


@dataclass
class TrainConfig:
    epochs: int = 300
    rounds_per_epoch: int = 20
    passes_per_round: int = 5  # examples of each class per optimizer batch
    num_classes: int = 10
    lr: float = 1e-4
    weight_decay: float = 1e-4
    resample_prob: float = 0.5
    ablation: str = "full"
    eval_every: int = 5
    seed: int = 0
    val_size: int = 2000
    reuse_passes: int = 2  # context lifetime in the random-context modes
    chain_refined: bool = False  # chain the refined image instead of the raw composite
    precision: str = "float32"

    def validate(self) -> "TrainConfig":
        for name in ("rounds_per_epoch", "passes_per_round", "num_classes", "eval_every", "reuse_passes", "val_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.resample_prob <= 1.0:
            raise ConfigError(f"resample_prob must be in [0, 1], got {self.resample_prob}")
        mode_flags(self.ablation)
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        return self

    @property
    def batch_size(self) -> int:
        return self.passes_per_round * self.num_classes

    @property
    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32


@dataclass
class EvalRecord:
    epoch: int
    round: int
    synth_val_acc: float
    test_acc: float | None
    mean_loss: float
    seconds: float


@dataclass
class RunMetrics:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    best_synth_acc: float = -1.0

    def note(self, rec: EvalRecord) -> bool:
        """Append a record; True when it sets a new synthetic-val best."""
        self.records.append(rec)
        if rec.synth_val_acc > self.best_synth_acc:
            self.best_synth_acc = rec.synth_val_acc
            self.best_epoch = rec.epoch
            return True
        return False


def new_counters() -> dict:
    return {"pgd_slots": 0, "chain_passes": 0, "fresh_passes": 0, "held_passes": 0}


def _fresh_contexts(n, h, w, c, seed, *path):
    return [uniform_noise_image(h, w, c, substream(seed, *path, slot)) for slot in range(n)]


def generate_round(net: Network, contexts: list, exemplars: list, cfg: TrainConfig,
                   pgd: PgdConfig, aug: AugmentParams, round_idx: int, counters: dict | None = None):
    """Produce one round's batch without fitting.

    Returns (contexts, images, labels): B*N composites in generation order
    (pass-major, one per class per pass) and the context pool as left by the
    final pass's update.
    """
    n = len(exemplars)
    if len(contexts) != n:
        raise InputError(f"need one context per class: {len(contexts)} contexts, {n} classes")
    reuse, chain, use_pgd = mode_flags(cfg.ablation)
    h, w, c = contexts[0].height, contexts[0].width, contexts[0].channels
    counters = counters if counters is not None else new_counters()
    images, labels = [], []
    for b in range(cfg.passes_per_round):
        perm = substream(cfg.seed, "perm", round_idx, b).permutation(n)
        rendered = [sample_object(exemplars[k], aug, substream(cfg.seed, "render", round_idx, b, k)) for k in range(n)]
        composites = [composite(rendered[k].image, contexts[perm[k]]) for k in range(n)]
        if use_pgd:
            rngs = [substream(cfg.seed, "pgd", round_idx, b, k) for k in range(n)]
            out = pgd_refine_batch(net, composites, np.arange(n), [r.mask for r in rendered], pgd, rngs)
            counters["pgd_slots"] += n
        else:
            out = composites
        images.extend(out)
        labels.extend(range(n))
        if chain:
            src = out if cfg.chain_refined else composites
            contexts = context_update(contexts, src, cfg.resample_prob, substream(cfg.seed, "ctx-update", round_idx, b))
            counters["chain_passes"] += 1
        elif reuse:
            if (b + 1) % cfg.reuse_passes == 0:
                contexts = _fresh_contexts(n, h, w, c, cfg.seed, "ctx-refresh", round_idx, b)
                counters["fresh_passes"] += 1
            else:
                counters["held_passes"] += 1
        else:
            # baseline: a fresh background for every training point
            contexts = context_update(contexts, composites, 0.0, substream(cfg.seed, "ctx-update", round_idx, b))
            counters["fresh_passes"] += 1
    return contexts, images, labels


def images_to_nchw(images: list) -> np.ndarray:
    return np.stack([img.pixels.transpose(2, 0, 1) for img in images])


def fit(net: Network, images, labels, adam: AdamState) -> float:
    """Exactly one train-mode forward/backward and one Adam update."""
    if len(images) == 0:
        raise InputError("fit requires a nonempty batch")
    batch = images_to_nchw(images) if isinstance(images, list) else images
    grads, _, loss = net.backward(batch, np.asarray(labels), mode="train", need_input_grad=False)
    adam_step(net.params, grads, adam)
    return loss


def train_round(net: Network, adam: AdamState, contexts: list, exemplars: list, cfg: TrainConfig,
                pgd: PgdConfig, aug: AugmentParams, round_idx: int, counters: dict | None = None):
    """One full round: generate B*N samples, then one Fit step on them."""
    contexts, images, labels = generate_round(net, contexts, exemplars, cfg, pgd, aug, round_idx, counters)
    loss = fit(net, images, labels, adam)
    return contexts, images, labels, loss


def evaluate(net: Network, test_set, batch_size: int = 256):
    """(accuracy, mean NLL) over a TestSet or an (images_nchw, labels) pair."""
    if isinstance(test_set, TestSet):
        images, labels = test_set.to_nchw(), test_set.labels
    else:
        images, labels = test_set
        images = np.asarray(images)
        labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise InputError("evaluate requires a nonempty test set")
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        chunk = images[start : start + batch_size]
        lab = labels[start : start + batch_size]
        logp = net.forward(chunk, mode="eval").array
        correct += int((np.argmax(logp, axis=1) == lab).sum())
        loss_sum += float(-logp[np.arange(len(lab)), lab].sum())
    return correct / n, loss_sum / n


@dataclass
class RunResult:
    net: Network
    adam: AdamState
    metrics: RunMetrics
    counters: dict
    best_params: np.ndarray | None = None
    best_stats: np.ndarray | None = None

    def best_network(self) -> Network:
        if self.best_params is None:
            return self.net
        out = Network(self.net.spec, dtype=self.net.dtype)
        out.params[...] = self.best_params
        out.set_running_stats(self.best_stats)
        return out


def _format_row(rec: EvalRecord, mode: str) -> list:
    return [
        str(rec.epoch),
        str(rec.round),
        mode,
        f"{rec.synth_val_acc:.6f}",
        "" if rec.test_acc is None else f"{rec.test_acc:.6f}",
        f"{rec.mean_loss:.8f}",
        f"{rec.seconds:.3f}",
    ]


def run_training(cfg: TrainConfig, exemplars: list, *, architecture: str = "mnist-2conv",
                 pgd: PgdConfig | None = None, aug: AugmentParams | None = None,
                 test_set: TestSet | None = None, out_dir=None, resume: bool = False,
                 log=None) -> RunResult:
    """Run the full schedule and keep the synthetic-val-best checkpoint.

    With `out_dir`, appends metrics.csv rows at every evaluation and writes
    best.ckpt / last.ckpt; `resume=True` continues from last.ckpt. In
    float64 precision the seconds column reports 0 so repeated runs are
    byte-identical.
    """
    cfg.validate()
    pgd = (pgd or PgdConfig()).validate()
    aug = (aug or AugmentParams()).validate()
    spec = model_spec(architecture)
    if spec.num_classes != cfg.num_classes:
        raise ConfigError(f"{architecture} has {spec.num_classes} classes, config says {cfg.num_classes}")
    if len(exemplars) != cfg.num_classes:
        raise ConfigError(f"need {cfg.num_classes} exemplars, got {len(exemplars)}")
    net = Network(spec, dtype=cfg.dtype, init_seed=cfg.seed)
    adam = AdamState(spec.param_count, lr=cfg.lr, weight_decay=cfg.weight_decay, dtype=cfg.dtype)
    metrics = RunMetrics()
    counters = new_counters()
    val_set = build_synthetic_testset(exemplars, aug, cfg.val_size, cfg.seed)
    ex0 = exemplars[0].canonical
    h, w, c = ex0.height, ex0.width, ex0.channels

    start_epoch = 0
    csv_path = best_path = last_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "metrics.csv")
        best_path = os.path.join(out_dir, "best.ckpt")
        last_path = os.path.join(out_dir, "last.ckpt")
        if resume and os.path.exists(csv_path) and os.path.exists(last_path):
            with open(csv_path, newline="") as f:
                for row in csv.DictReader(f):
                    rec = EvalRecord(
                        int(row["epoch"]), int(row["round"]),
                        float(row["synth_val_acc"]),
                        float(row["test_acc"]) if row["test_acc"] else None,
                        float(row["mean_loss"]), float(row["seconds"]),
                    )
                    metrics.note(rec)
            start_epoch = metrics.records[-1].epoch if metrics.records else 0
            net, adam = load_checkpoint(last_path, dtype=cfg.dtype)
        elif not os.path.exists(csv_path):
            with open(csv_path, "w", newline="") as f:
                csv.writer(f).writerow(METRICS_HEADER)

    best_params = best_stats = None
    if resume and metrics.best_synth_acc >= 0 and best_path and os.path.exists(best_path):
        best_net, _ = load_checkpoint(best_path, dtype=cfg.dtype)
        best_params, best_stats = best_net.params.copy(), best_net.running_stats().copy()

    deterministic = cfg.precision == "float64"
    t0 = time.monotonic()
    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        for r in range(cfg.rounds_per_epoch):
            round_idx = (epoch - 1) * cfg.rounds_per_epoch + r
            contexts = _fresh_contexts(cfg.num_classes, h, w, c, cfg.seed, "ctx-init", round_idx)
            train_round(net, adam, contexts, exemplars, cfg, pgd, aug, round_idx, counters)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            val_acc, val_loss = evaluate(net, val_set)
            test_acc = None
            if test_set is not None:
                test_acc, _ = evaluate(net, test_set)
            rec = EvalRecord(
                epoch, epoch * cfg.rounds_per_epoch, val_acc, test_acc, val_loss,
                0.0 if deterministic else time.monotonic() - t0,
            )
            improved = metrics.note(rec)
            if improved:
                best_params = net.params.copy()
                best_stats = net.running_stats().copy()
            if csv_path:
                with open(csv_path, "a", newline="") as f:
                    csv.writer(f).writerow(_format_row(rec, cfg.ablation))
                save_checkpoint(last_path, net, adam)
                if improved:
                    save_checkpoint(best_path, net, adam)
            if log:
                log(
                    f"epoch {epoch}/{cfg.epochs} synth_val={val_acc:.4f}"
                    + (f" test={test_acc:.4f}" if test_acc is not None else "")
                    + f" loss={val_loss:.4f}"
                )
    return RunResult(net, adam, metrics, counters, best_params, best_stats)
