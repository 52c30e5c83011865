"""Full-batch training loop, early stopping, evaluation, seeded aggregation."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as mdl
from .diagnostics import SyncReport, sync_report
from .dynamics import DynamicsSpec
from .graphs import Graph, SplitSpec, make_split
from .solvers import IntegrationError


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    max_epochs: int = 300
    lr: float = 0.01
    weight_decay: float = 5e-4
    optimizer: str = "adam"  # adam | sgd_momentum
    momentum: float = 0.9
    patience: int = 100
    seed: int = 0
    dropout: float = 0.4
    # model hyperparameters
    strength: float = 1.0
    t_end: float = 1.0
    dt: float = 0.1
    hidden_dim: int = 64
    heads: int = 4
    d_k: int = 16
    dynamics: str = "kuramoto"
    scale_power: float = 1.0
    omega_mode: str = "tied"
    beta0: float = 1.0
    learn_beta: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class RunResult:
    best_val_acc: float
    test_acc_at_best_val: float
    epochs_run: int
    wall_time: float
    final_sync: SyncReport | None = None


class _Adam:
    def __init__(self, arrays, lr, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.wd = lr, weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, arr in arrays.items():
            g = grads[name] + self.wd * arr
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            update = self.lr * (self.m[name] / b1c) / (np.sqrt(self.v[name] / b2c) + self.eps)
            arr[...] = arr - update


class _SGDMomentum:
    def __init__(self, arrays, lr, weight_decay, momentum=0.9):
        self.lr, self.wd, self.momentum = lr, weight_decay, momentum
        self.buf = {k: np.zeros_like(v) for k, v in arrays.items()}

    def step(self, arrays, grads):
        for name, arr in arrays.items():
            g = grads[name] + self.wd * arr
            self.buf[name] = self.momentum * self.buf[name] + g
            arr[...] = arr - self.lr * self.buf[name]


def make_optimizer(cfg: TrainConfig, arrays):
    if cfg.optimizer == "adam":
        return _Adam(arrays, cfg.lr, cfg.weight_decay)
    return _SGDMomentum(arrays, cfg.lr, cfg.weight_decay, cfg.momentum)


def evaluate_accuracy(p: mdl.ModelParams, g: Graph, mask) -> float:
    """Fraction of masked nodes whose argmax logit matches the label.

    np.argmax breaks ties toward the lowest class index.
    """
    if not np.any(mask):
        raise ValueError("empty mask")
    logits, _ = mdl.forward(g, p)
    pred = logits.argmax(axis=1)
    return float((pred[mask] == g.labels[mask]).mean())


def train_node_classifier(g: Graph, split: SplitSpec, cfg: TrainConfig,
                          log_path=None):
    """Full-batch gradient descent on the train-mask cross-entropy.

    Checkpoints the parameters at the best validation accuracy (ties broken
    by lower validation loss) and stops after cfg.patience epochs without
    improvement. Deterministic for a fixed seed. Raises
    TrainingDivergedError (with the epoch index) if the loss goes non-finite.
    """
    t_start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    params = mdl.init_params(
        g, cfg.hidden_dim, heads=cfg.heads, d_k=cfg.d_k, strength=cfg.strength,
        t_end=cfg.t_end, dt=cfg.dt, dynamics=cfg.dynamics, seed=cfg.seed,
        scale_power=cfg.scale_power, omega_mode=cfg.omega_mode,
        beta0=cfg.beta0, learn_beta=cfg.learn_beta,
    )
    arrays = params.trainable()
    opt = make_optimizer(cfg, arrays)

    best = (-1.0, -np.inf)  # (val_acc, -val_loss)
    best_params = params.clone()
    best_epoch = 0
    stale = 0
    log_fh = open(log_path, "w") if log_path else None
    epoch = 0
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            if cfg.dropout > 0:
                keep = 1.0 - cfg.dropout
                mask_shape = (g.n, cfg.hidden_dim)
                drop = (rng.random(mask_shape) < keep) / keep
            else:
                drop = None
            try:
                logits, tape = mdl.forward(g, params, dropout_mask=drop)
                loss, dlogits = mdl.cross_entropy_grad(logits, g.labels, split.train_mask)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"loss diverged at epoch {epoch}", epoch=epoch)
                grads = mdl.backward(tape, dlogits)
                opt.step(arrays, grads)
                val_logits, _ = mdl.forward(g, params)
            except IntegrationError as exc:
                raise TrainingDivergedError(
                    f"state diverged at epoch {epoch}: {exc}", epoch=epoch) from exc
            val_loss = mdl.cross_entropy(val_logits, g.labels, split.val_mask)
            val_pred = val_logits.argmax(axis=1)
            val_acc = float((val_pred[split.val_mask] == g.labels[split.val_mask]).mean())

            if log_fh:
                log_fh.write(json.dumps(
                    {"epoch": epoch, "train_loss": loss, "val_acc": val_acc}) + "\n")

            score = (val_acc, -val_loss)
            if score > best:
                best = score
                best_params = params.clone()
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

        test_acc = evaluate_accuracy(best_params, g, split.test_mask)
        final_logits, final_tape = mdl.forward(g, best_params)
        spec = _diag_spec(best_params, final_tape)
        sync = sync_report(final_tape.states[-1], spec=spec)
        if log_fh:
            log_fh.write(json.dumps({"test_acc": test_acc, "nfe_if_adaptive": None}) + "\n")
    finally:
        if log_fh:
            log_fh.close()

    result = RunResult(
        best_val_acc=best[0],
        test_acc_at_best_val=test_acc,
        epochs_run=epoch,
        wall_time=time.perf_counter() - t_start,
        final_sync=sync,
    )
    return best_params, result


def _diag_spec(params: mdl.ModelParams, tape: mdl.UnrollTape) -> DynamicsSpec:
    if params.dynamics == "kuramoto":
        return DynamicsSpec(kind="kuramoto", coupling=tape.coupling,
                            strength=params.strength, omega=tape.omega)
    if params.dynamics == "grand_linear":
        return DynamicsSpec(kind="grand_linear", coupling=tape.coupling)
    return DynamicsSpec(kind="grand_modified", coupling=tape.coupling,
                        alpha=float(params.alpha), beta=float(params.beta),
                        x0=tape.x0)


def _one_run(args):
    g, cfg, split_seed, run_seed, per_class, val_count = args
    split = make_split(g, per_class, val_count, seed=split_seed)
    run_cfg = replace(cfg, seed=run_seed)
    try:
        _, result = train_node_classifier(g, split, run_cfg)
        return result.test_acc_at_best_val
    except TrainingDivergedError:
        return None


@dataclass
class SeededSummary:
    mean_acc: float
    std_acc: float
    accuracies: list = field(default_factory=list)
    diverged: int = 0


def run_seeded(g: Graph, cfg: TrainConfig, n_splits, n_seeds,
               per_class=20, val_count=500, workers=1) -> SeededSummary:
    """Train over n_splits fresh splits x n_seeds parameter seeds.

    Split s uses seed cfg.seed + s; run (s, r) trains with seed
    cfg.seed + 1000 * s + r. Divergent runs are excluded and counted. The
    sample standard deviation is reported (0 for a single run).
    """
    if n_splits < 1 or n_seeds < 1:
        raise ValueError("need at least one split and one seed")
    jobs = [
        (g, cfg, cfg.seed + s, cfg.seed + 1000 * s + r, per_class, val_count)
        for s in range(n_splits)
        for r in range(n_seeds)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one_run, jobs))
    else:
        outcomes = [_one_run(job) for job in jobs]
    accs = [a for a in outcomes if a is not None]
    diverged = sum(1 for a in outcomes if a is None)
    if not accs:
        return SeededSummary(mean_acc=float("nan"), std_acc=float("nan"),
                             accuracies=[], diverged=diverged)
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return SeededSummary(mean_acc=mean, std_acc=std, accuracies=accs, diverged=diverged)
