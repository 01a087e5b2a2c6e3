"""The attributed-sequence encoder.

Maps (attribute vector, one-hot item sequence) to an n-dimensional embedding:
an m-layer fully connected stack reads the attributes, an LSTM reads the
sequence up to its true length (padding rows are never processed), the last
hidden state is concatenated with the final attribute activation, and one
fused fully connected layer produces the embedding. The forward pass records
every intermediate value the backward pass needs.
"""

from dataclasses import dataclass

import numpy as np

from .data import DatasetMeta, EncodedInstance
from .kernel import Rng, activation, glorot_bound, orthogonal_init, sigmoid, uniform_init

BRANCH_MODES = ("both", "attributes_only", "sequence_only")


@dataclass
class ModelConfig:
    m: int = 3  # fully connected depth
    n_m: int = 50  # fully connected width
    n_l: int = 50  # LSTM width
    n: int = 50  # embedding dimension
    activation: str = "tanh"
    branch_mode: str = "both"

    def __post_init__(self):
        if min(self.m, self.n_m, self.n_l, self.n) < 1:
            raise ValueError(f"all model dimensions must be >= 1, got {self}")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.branch_mode not in BRANCH_MODES:
            raise ValueError(f"branch_mode must be one of {BRANCH_MODES}, got {self.branch_mode!r}")


def branch_gates(mode: str):
    """(attribute gate, sequence gate) multipliers for the fusion input."""
    return {"both": (1.0, 1.0), "attributes_only": (1.0, 0.0), "sequence_only": (0.0, 1.0)}[mode]


@dataclass
class ModelParams:
    """All trainable tensors. Gradient containers mirror `tensors()` keys."""

    fc_w: list  # m matrices, layer k maps dim_{k-1} -> n_m
    fc_b: list  # m vectors
    w_i: np.ndarray  # LSTM kernels, (n_l, r)
    w_f: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    u_i: np.ndarray  # LSTM recurrent weights, (n_l, n_l)
    u_f: np.ndarray
    u_o: np.ndarray
    u_c: np.ndarray
    b_i: np.ndarray  # LSTM biases, (n_l,)
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray
    w_p: np.ndarray  # fusion weights, (n, n_m + n_l)
    b_p: np.ndarray  # fusion bias, (n,)

    def tensors(self):
        """Name -> live array, in a fixed order. Mutations write through."""
        out = {}
        for k, (w, b) in enumerate(zip(self.fc_w, self.fc_b)):
            out[f"fc{k}_w"] = w
            out[f"fc{k}_b"] = b
        for gate in "ifoc":
            out[f"w_{gate}"] = getattr(self, f"w_{gate}")
        for gate in "ifoc":
            out[f"u_{gate}"] = getattr(self, f"u_{gate}")
        for gate in "ifoc":
            out[f"b_{gate}"] = getattr(self, f"b_{gate}")
        out["w_p"] = self.w_p
        out["b_p"] = self.b_p
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.fc_w],
            [b.copy() for b in self.fc_b],
            *(getattr(self, f"{kind}_{gate}").copy() for kind in ("w", "u", "b") for gate in "ifoc"),
            self.w_p.copy(),
            self.b_p.copy(),
        )


@dataclass
class LstmTrace:
    x: np.ndarray  # (T, r) consumed one-hot rows
    i: np.ndarray  # gate values, each (T, n_l)
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray  # cell states, (T, n_l)
    tanh_c: np.ndarray
    h: np.ndarray  # hidden states, (T, n_l)


@dataclass
class ForwardTrace:
    alphas: list  # fully connected activations [input, a_1, .., a_m]
    lstm: LstmTrace
    concat: np.ndarray  # gated (a_m ++ h_last), length n_m + n_l
    fused_pre: np.ndarray  # fusion pre-activation, (n,)
    embedding: np.ndarray  # (n,)


def init_params(cfg: ModelConfig, meta: DatasetMeta, rng: Rng) -> ModelParams:
    """Fresh parameters: uniform fan-scaled kernels, orthogonal recurrent
    matrices, zero biases. Each tensor draws from its own labeled stream."""
    fc_w, fc_b = [], []
    d_in = meta.u
    for k in range(cfg.m):
        bound = glorot_bound(d_in, cfg.n_m)
        fc_w.append(uniform_init(rng.child(f"fc{k}_w"), cfg.n_m, d_in, bound))
        fc_b.append(np.zeros(cfg.n_m))
        d_in = cfg.n_m
    kernel_bound = float(np.sqrt(6.0 / cfg.n_l))
    kernels = [uniform_init(rng.child(f"w_{g}"), cfg.n_l, meta.r, kernel_bound) for g in "ifoc"]
    recurrents = [orthogonal_init(rng.child(f"u_{g}"), cfg.n_l) for g in "ifoc"]
    biases = [np.zeros(cfg.n_l) for _ in "ifoc"]
    w_p = uniform_init(rng.child("w_p"), cfg.n, cfg.n_m + cfg.n_l, glorot_bound(cfg.n_m + cfg.n_l, cfg.n))
    b_p = np.zeros(cfg.n)
    return ModelParams(fc_w, fc_b, *kernels, *recurrents, *biases, w_p, b_p)


def fc_forward(params: ModelParams, v: np.ndarray, act_name: str = "tanh"):
    """Run the attribute branch; returns (final activation, all activations)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.fc_w[0].shape[1],):
        raise ValueError(
            f"attribute vector shape {v.shape} does not match layer-1 input "
            f"dimension {params.fc_w[0].shape[1]}"
        )
    act = activation(act_name)
    alphas = [v]
    for w, b in zip(params.fc_w, params.fc_b):
        alphas.append(act(w @ alphas[-1] + b))
    return alphas[-1], alphas


def lstm_forward(params: ModelParams, seq: np.ndarray, true_len: int):
    """Run the sequence branch over rows 1..true_len; padding is skipped.

    Returns (h at true_len, trace). States start at zero.
    """
    if true_len < 1:
        raise ValueError(f"true_len must be >= 1, got {true_len}")
    if seq.shape[1] != params.w_i.shape[1]:
        raise ValueError(
            f"sequence row width {seq.shape[1]} does not match kernel input "
            f"dimension {params.w_i.shape[1]}"
        )
    T = int(true_len)
    x = seq[:T]
    n_l = params.b_i.shape[0]
    # input-side projections for all timesteps at once
    zi = x @ params.w_i.T + params.b_i
    zf = x @ params.w_f.T + params.b_f
    zo = x @ params.w_o.T + params.b_o
    zg = x @ params.w_c.T + params.b_c

    i = np.empty((T, n_l))
    f = np.empty((T, n_l))
    o = np.empty((T, n_l))
    g = np.empty((T, n_l))
    c = np.empty((T, n_l))
    tanh_c = np.empty((T, n_l))
    h = np.empty((T, n_l))
    h_prev = np.zeros(n_l)
    c_prev = np.zeros(n_l)
    for t in range(T):
        i[t] = sigmoid(zi[t] + params.u_i @ h_prev)
        f[t] = sigmoid(zf[t] + params.u_f @ h_prev)
        o[t] = sigmoid(zo[t] + params.u_o @ h_prev)
        g[t] = np.tanh(zg[t] + params.u_c @ h_prev)
        c[t] = f[t] * c_prev + i[t] * g[t]
        tanh_c[t] = np.tanh(c[t])
        h[t] = o[t] * tanh_c[t]
        h_prev = h[t]
        c_prev = c[t]
    return h[-1], LstmTrace(x, i, f, o, g, c, tanh_c, h)


def omega_forward(params: ModelParams, cfg: ModelConfig, inst: EncodedInstance):
    """Full encoder pass; returns (embedding, trace).

    Disabled branches (branch_mode) are zeroed in the fusion input so the
    embedding shape never changes across ablation modes.
    """
    a_m, alphas = fc_forward(params, inst.attributes, cfg.activation)
    h_last, lstm = lstm_forward(params, inst.seq, inst.true_len)
    ga, gs = branch_gates(cfg.branch_mode)
    concat = np.concatenate([ga * a_m, gs * h_last])
    fused_pre = params.w_p @ concat + params.b_p
    embedding = activation(cfg.activation)(fused_pre)
    return embedding, ForwardTrace(alphas, lstm, concat, fused_pre, embedding)
