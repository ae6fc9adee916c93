"""Adapted linear layers.

AdapterState is the low-dimensional adapter: a frozen residual main path,
a frozen down-projection `a`, a trainable r x r core `s`, and a row-wise
freezable up-projection `b`, so `y = x @ w_res + alpha * ((x @ a) @ s) @ b`.
LoraState is the plain LoRA baseline.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import svd as _svd
from .errors import ConfigError
from .tensor import Tensor, add, matmul, scale

INIT_MODES = ("spectral_top", "spectral_tail", "kaiming")
FREEZE_MODES = ("lda_only", "gradual")


@dataclass
class AdapterConfig:
    rank: int
    shape: tuple  # (d_in, d_out)
    alpha: float = 1.0  # 1.0 keeps spectral init an exact reconstruction
    init_mode: str = "spectral_top"
    freeze_mode: str = "gradual"

    def validate(self):
        d_in, d_out = self.shape
        if not 1 <= self.rank <= min(d_in, d_out):
            raise ConfigError(f"rank {self.rank} out of range for shape {self.shape}")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(f"init_mode must be one of {INIT_MODES}")
        if self.freeze_mode not in FREEZE_MODES:
            raise ConfigError(f"freeze_mode must be one of {FREEZE_MODES}")


@dataclass
class AdapterState:
    w_res: Tensor  # frozen residual main path, d_in x d_out
    a: Tensor  # frozen down projection, d_in x r
    s: Tensor  # trainable core, r x r
    b: Tensor  # up projection, r x d_out; rows >= trainable_rows are frozen
    trainable_rows: int
    config: AdapterConfig

    def forward(self, x):
        """y = x @ w_res + alpha * ((x @ a) @ s) @ b.

        The association order matters: the only adapter-path intermediates
        the tape retains are (x @ a) and ((x @ a) @ s), both of width r.
        """
        main = matmul(x, self.w_res)
        path = matmul(matmul(matmul(x, self.a), self.s), self.b)
        if self.config.alpha != 1.0:
            path = scale(path, self.config.alpha)
        return add(main, path)

    def trainable_parameter_names(self):
        names = {"s"}
        names.update(f"b.row{i}" for i in range(self.trainable_rows))
        return names

    def set_trainable_rows(self, rows):
        if not 0 <= rows <= self.config.rank:
            raise ConfigError(f"trainable_rows {rows} out of [0, {self.config.rank}]")
        self.trainable_rows = rows
        self.b.requires_grad = rows > 0

    def merged_weight(self):
        """Dense equivalent w_res + alpha * a @ s @ b (reference/reporting only)."""
        return self.w_res.data + self.config.alpha * (self.a.data @ self.s.data @ self.b.data)


@dataclass
class LoraState:
    w: Tensor  # frozen
    a: Tensor  # trainable, kaiming-normal init
    b: Tensor  # trainable, zero init => exact identity at construction
    alpha: float = 1.0
    rank: int = field(default=0)

    def forward(self, x):
        main = matmul(x, self.w)
        path = matmul(matmul(x, self.a), self.b)
        if self.alpha != 1.0:
            path = scale(path, self.alpha)
        return add(main, path)

    def trainable_parameter_names(self):
        return {"a", "b"}


def kaiming_normal(rng, fan_in, shape):
    """He-normal for rectified units: std = sqrt(2 / fan_in), seeded."""
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


def build_adapter(w, cfg, seed=0):
    """Construct an AdapterState from a pre-trained weight matrix."""
    cfg.validate()
    w = np.asarray(w)
    if w.shape != tuple(cfg.shape):
        raise ConfigError(f"weight shape {w.shape} != configured {cfg.shape}")
    r = cfg.rank

    if cfg.init_mode == "kaiming":
        rng = np.random.default_rng(seed)
        a = kaiming_normal(rng, w.shape[0], (w.shape[0], r))
        b = kaiming_normal(rng, r, (r, w.shape[1]))
        s = np.zeros((r, r))  # zero core kills the adapter path at init
        w_res = w
    else:
        dec = _svd.svd(w)
        split = (
            _svd.split_spectrum(dec, r)
            if cfg.init_mode == "spectral_top"
            else _svd.split_spectrum_tail(dec, r)
        )
        a, b, w_res = split.a, split.b, split.w_res
        s = np.eye(r)

    rows = r if cfg.freeze_mode == "gradual" else 0
    st = AdapterState(
        w_res=Tensor(w_res, name="w_res"),
        a=Tensor(a, name="a"),
        s=Tensor(s, requires_grad=True, name="s"),
        b=Tensor(b, requires_grad=rows > 0, name="b"),
        trainable_rows=rows,
        config=cfg,
    )
    return st


def build_lora(w, rank, alpha=1.0, seed=0):
    w = np.asarray(w)
    if not 1 <= rank <= min(w.shape):
        raise ConfigError(f"rank {rank} out of range for shape {w.shape}")
    rng = np.random.default_rng(seed)
    a = kaiming_normal(rng, w.shape[0], (w.shape[0], rank))
    return LoraState(
        w=Tensor(w, name="w"),
        a=Tensor(a, requires_grad=True, name="a"),
        b=Tensor(np.zeros((rank, w.shape[1])), requires_grad=True, name="b"),
        alpha=alpha,
        rank=rank,
    )
