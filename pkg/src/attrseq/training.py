"""Per-triplet SGD with validation-based early stopping and checkpointing.

The loop follows the contrastive objective: for every triplet it runs both
encoder passes, backpropagates the pair loss, and immediately applies
theta <- theta - lr * (grad + l2 * theta) to weight tensors (biases skip the
decay term). Early stopping watches the mean validation loss per epoch, and
the parameters returned are those of the best validation epoch.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetMeta
from .encoder import ModelConfig, ModelParams, omega_forward
from .gradients import DISTANCE_KINDS, GRAD_MODES, backward_pair, distance, pair_loss
from .kernel import Rng

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; names the epoch and triplet."""


class CheckpointError(ValueError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


class ShapeMismatchError(ValueError):
    """Checkpoint and dataset disagree on a structural dimension."""


@dataclass
class TrainConfig:
    lr: float = 0.01
    max_epochs: int = 100
    converge_eps: float = 1e-4
    margin: float = 1.0
    l2: float = 1e-4
    val_fraction: float = 0.2
    patience: int = 5
    distance: str = "euclidean"
    grad_mode: str = "exact"
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.converge_eps < 0:
            raise ValueError(f"converge_eps must be >= 0, got {self.converge_eps}")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if not 0 < self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.distance not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"unknown grad mode {self.grad_mode!r}")


@dataclass
class TrainReport:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""
    wall_time: float = 0.0
    n_train: int = 0
    n_val: int = 0
    zero_distance_dissimilar: int = 0  # skipped undefined-direction updates


def _is_bias(name: str) -> bool:
    return name.startswith("b_") or name.endswith("_b")


def train(params: ModelParams, cfg: ModelConfig, triplets, train_cfg: TrainConfig):
    """Train on encoded triplets; returns (best params, report).

    The input params are not mutated. Validation triplets are held out by
    val_fraction (at least one stays in training); with a single triplet
    the validation loss falls back to the training loss so the convergence
    test still applies.
    """
    if not triplets:
        raise ValueError("no triplets to train on")
    rng = Rng(train_cfg.seed)
    n = len(triplets)
    n_val = min(n - 1, max(1, round(train_cfg.val_fraction * n))) if n >= 2 else 0
    perm = rng.child("val_split").gen.permutation(n)
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]

    params = params.copy()
    tensors = params.tensors()
    report = TrainReport(n_train=len(train_idx), n_val=n_val)
    best_val = np.inf
    best_params = params.copy()
    stall = 0
    started = time.perf_counter()

    for epoch in range(1, train_cfg.max_epochs + 1):
        order = rng.child(f"epoch{epoch}").gen.permutation(len(train_idx))
        epoch_losses = np.empty(len(order))
        for pos, o in enumerate(order):
            t = triplets[train_idx[o]]
            emb_i, trace_i = omega_forward(params, cfg, t.a)
            emb_j, trace_j = omega_forward(params, cfg, t.b)
            if not (np.isfinite(emb_i).all() and np.isfinite(emb_j).all()):
                raise TrainingDiverged(
                    f"non-finite embedding at epoch {epoch}, triplet {pos}"
                )
            loss, grads = backward_pair(
                params, cfg, trace_i, trace_j, t.ell, train_cfg.margin,
                train_cfg.distance, train_cfg.grad_mode,
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch}, triplet {pos}"
                )
            if t.ell == 1 and distance(train_cfg.distance, emb_i, emb_j) == 0.0:
                report.zero_distance_dissimilar += 1
            if train_cfg.lr != 0.0:
                for name, tensor in tensors.items():
                    g = grads[name]
                    if train_cfg.l2 != 0.0 and not _is_bias(name):
                        tensor -= train_cfg.lr * (g + train_cfg.l2 * tensor)
                    else:
                        tensor -= train_cfg.lr * g
            epoch_losses[pos] = loss
        train_loss = float(epoch_losses.mean())
        if n_val:
            val_loss = float(
                np.mean([
                    pair_loss(params, cfg, triplets[i].a, triplets[i].b,
                              triplets[i].ell, train_cfg.margin, train_cfg.distance)
                    for i in val_idx
                ])
            )
        else:
            val_loss = train_loss
        report.train_losses.append(train_loss)
        report.val_losses.append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            report.best_epoch = epoch
            best_params = params.copy()
            stall = 0
        else:
            stall += 1

        if epoch >= 2 and abs(val_loss - report.val_losses[-2]) < train_cfg.converge_eps:
            report.stop_reason = "converged"
            break
        if stall >= train_cfg.patience:
            report.stop_reason = "patience"
            break
    else:
        report.stop_reason = "max_epochs"

    report.wall_time = time.perf_counter() - started
    return best_params, report


def write_metrics(report: TrainReport, path):
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for e, (tl, vl) in enumerate(zip(report.train_losses, report.val_losses), start=1):
            fh.write(f"{e},{tl!r},{vl!r}\n")


def _expected_shapes(cfg: ModelConfig, meta: DatasetMeta) -> dict:
    shapes = {}
    d_in = meta.u
    for k in range(cfg.m):
        shapes[f"fc{k}_w"] = (cfg.n_m, d_in)
        shapes[f"fc{k}_b"] = (cfg.n_m,)
        d_in = cfg.n_m
    for g in "ifoc":
        shapes[f"w_{g}"] = (cfg.n_l, meta.r)
    for g in "ifoc":
        shapes[f"u_{g}"] = (cfg.n_l, cfg.n_l)
    for g in "ifoc":
        shapes[f"b_{g}"] = (cfg.n_l,)
    shapes["w_p"] = (cfg.n, cfg.n_m + cfg.n_l)
    shapes["b_p"] = (cfg.n,)
    return shapes


def save_checkpoint(params: ModelParams, cfg: ModelConfig, meta: DatasetMeta, path, train_info=None):
    """Self-describing JSON checkpoint; tensor round-trips are bitwise exact."""
    envelope = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "m": cfg.m, "n_m": cfg.n_m, "n_l": cfg.n_l, "n": cfg.n,
            "activation": cfg.activation, "branch_mode": cfg.branch_mode,
        },
        "meta": {
            "u": meta.u, "r": meta.r, "t_max": meta.t_max,
            "class_ids": sorted(meta.class_ids),
        },
        "train": train_info or {},
        "tensors": {
            name: {"shape": list(t.shape), "data": [float(x) for x in t.reshape(-1)]}
            for name, t in params.tensors().items()
        },
    }
    with open(path, "w") as fh:
        json.dump(envelope, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path):
    """Returns (params, cfg, meta, train_info); raises CheckpointError on
    version or shape problems."""
    try:
        with open(path) as fh:
            envelope = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None
    if not isinstance(envelope, dict) or "version" not in envelope:
        raise CheckpointError(f"corrupt checkpoint {path}: missing envelope fields")
    if envelope["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {envelope['version']} (expected {CHECKPOINT_VERSION})"
        )
    try:
        c = envelope["config"]
        cfg = ModelConfig(m=c["m"], n_m=c["n_m"], n_l=c["n_l"], n=c["n"],
                          activation=c["activation"], branch_mode=c["branch_mode"])
        mt = envelope["meta"]
        meta = DatasetMeta(u=mt["u"], r=mt["r"], t_max=mt["t_max"],
                           class_ids=frozenset(mt["class_ids"]))
        stored = envelope["tensors"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None

    shapes = _expected_shapes(cfg, meta)
    arrays = {}
    for name, shape in shapes.items():
        if name not in stored:
            raise CheckpointError(f"corrupt checkpoint {path}: missing tensor {name}")
        entry = stored[name]
        if tuple(entry.get("shape", ())) != shape:
            raise CheckpointError(
                f"corrupt checkpoint {path}: tensor {name} has shape "
                f"{entry.get('shape')}, expected {list(shape)}"
            )
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise CheckpointError(
                f"corrupt checkpoint {path}: tensor {name} carries {data.size} "
                f"values for shape {list(shape)}"
            )
        arrays[name] = data.reshape(shape)
    params = ModelParams(
        [arrays[f"fc{k}_w"] for k in range(cfg.m)],
        [arrays[f"fc{k}_b"] for k in range(cfg.m)],
        *(arrays[f"{kind}_{gate}"] for kind in ("w", "u", "b") for gate in "ifoc"),
        arrays["w_p"],
        arrays["b_p"],
    )
    return params, cfg, meta, envelope.get("train", {})


def check_meta_compatible(ckpt_meta: DatasetMeta, data_meta: DatasetMeta):
    """Dataset must fit the checkpoint: equal u, and capacity within r/t_max."""
    if data_meta.u != ckpt_meta.u:
        raise ShapeMismatchError(
            f"dataset has u={data_meta.u} attributes but checkpoint expects u={ckpt_meta.u}"
        )
    if data_meta.r > ckpt_meta.r:
        raise ShapeMismatchError(
            f"dataset uses {data_meta.r} items but checkpoint supports r={ckpt_meta.r}"
        )
    if data_meta.t_max > ckpt_meta.t_max:
        raise ShapeMismatchError(
            f"dataset sequences reach length {data_meta.t_max} but checkpoint "
            f"supports t_max={ckpt_meta.t_max}"
        )
