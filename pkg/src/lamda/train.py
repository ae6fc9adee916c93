"""Adam trainer wiring the adapters, the freezing schedule, and the
per-step instrumentation (live trainable parameters, retained adapter
activations) together.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import allocator as _alloc
from . import freezing as _freeze
from .adapter import AdapterConfig, build_adapter, build_lora
from .errors import ConfigError, NumericalError
from .model import ToyTransformer, ToyTransformerConfig
from .tasks import make_task
from .tensor import Tape, get_float_mode

METHODS = ("full", "lora", "lamda", "lamda++")


@dataclass
class TrainRunConfig:
    method: str = "lamda"
    task: str = "copy"
    rank: int = 8
    budget_ranks: tuple = ()  # lamda++ candidate ranks
    budget_target: int = 0
    rank_plan: dict = field(default_factory=dict)  # explicit module -> rank
    reverse_allocation: bool = False
    alpha: float = 1.0
    init_mode: str = "spectral_top"
    ti_fraction: float = 0.3
    literal_schedule: bool = False
    total_steps: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    seed: int = 0
    adapted_kinds: tuple = ("q", "k", "v", "ffn1", "ffn2")
    model: ToyTransformerConfig = field(default_factory=ToyTransformerConfig)

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not 0.0 <= self.ti_fraction <= 1.0:
            raise ConfigError(f"ti_fraction {self.ti_fraction} outside [0, 1]")
        if self.method == "lamda++" and not (self.budget_ranks or self.rank_plan):
            raise ConfigError("lamda++ needs budget_ranks/budget_target or rank_plan")

    def digest(self):
        doc = asdict(self)
        doc["float_mode"] = get_float_mode()
        blob = json.dumps(doc, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Adam:
    """Adam with optional row masking: only rows < live receive updates and
    keep moment buffers, so frozen rows stay bitwise untouched."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.slots = {}

    def add_param(self, name, tensor, live_rows=None):
        self.slots[name] = {
            "tensor": tensor,
            "live": live_rows,
            "m": np.zeros_like(tensor.data),
            "v": np.zeros_like(tensor.data),
        }

    def set_live_rows(self, name, rows):
        slot = self.slots[name]
        slot["live"] = rows
        slot["m"][rows:] = 0.0  # dropped moments for frozen rows
        slot["v"][rows:] = 0.0
        slot["tensor"].requires_grad = rows > 0

    def live_scalars(self):
        total = 0
        for slot in self.slots.values():
            data = slot["tensor"].data
            rows = data.shape[0] if slot["live"] is None else slot["live"]
            total += rows * (data.size // data.shape[0]) if data.ndim else data.size
        return total

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for slot in self.slots.values():
            tensor = slot["tensor"]
            g = tensor.grad
            if g is None:
                continue
            live = slot["live"]
            if live is not None:
                if live == 0:
                    continue
                g = g[:live]
                m, v = slot["m"][:live], slot["v"][:live]
            else:
                m, v = slot["m"], slot["v"]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            upd = (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(
                tensor.data.dtype
            )
            if live is not None:
                tensor.data[:live] -= upd
            else:
                tensor.data -= upd

    def zero_grad(self):
        for slot in self.slots.values():
            slot["tensor"].grad = None


def count_retained_activations(tape, param_ids):
    """Floats the backward pass must retain to update trainable parameters:
    the non-parameter operand of every matmul whose other operand is a
    trainable parameter. Each intermediate counts once."""
    retained = {}
    for node in tape.nodes:
        if node._op != "matmul":
            continue
        p, q = node._parents
        for param, other in ((q, p), (p, q)):
            if param.requires_grad and id(param) in param_ids and id(other) not in param_ids:
                retained[id(other)] = other.data.size
    return int(sum(retained.values()))


def resolve_ranks(cfg, backbone_weights, module_ids):
    """Per-module adapter ranks for the configured method."""
    if cfg.method in ("full",):
        return {}
    if cfg.method in ("lora", "lamda"):
        return {m: cfg.rank for m in module_ids}
    if cfg.rank_plan:
        missing = [m for m in module_ids if m not in cfg.rank_plan]
        if missing:
            raise ConfigError(f"rank_plan misses modules: {missing}")
        return {m: int(cfg.rank_plan[m]) for m in module_ids}
    budget = _alloc.RankBudget(ranks=tuple(cfg.budget_ranks), target=cfg.budget_target)
    scores = _alloc.score_modules(
        {m: backbone_weights[m] for m in module_ids}, budget
    )
    plan = _alloc.allocate(scores, budget, reverse=cfg.reverse_allocation)
    return plan.ranks


@dataclass
class TrainResult:
    config: TrainRunConfig
    metrics: list  # rows: (step, loss, live_params, retained_floats)
    model: ToyTransformer
    optimizer: Adam
    schedules: dict
    final_step: int

    def loss_series(self):
        return [row[1] for row in self.metrics]


def attach_adapters(model, cfg, ranks):
    """Build and install adapters on the (frozen) backbone; returns schedules."""
    schedules = {}
    freeze_mode = "gradual" if cfg.ti_fraction > 0 else "lda_only"
    ti = int(round(cfg.ti_fraction * cfg.total_steps))
    for i, module in enumerate(sorted(ranks)):
        w = model.params[module].data
        r = ranks[module]
        if cfg.method == "lora":
            model.adapters[module] = build_lora(
                w, r, alpha=cfg.alpha, seed=cfg.seed * 7919 + i
            )
        else:
            acfg = AdapterConfig(
                rank=r, shape=w.shape, alpha=cfg.alpha,
                init_mode=cfg.init_mode, freeze_mode=freeze_mode,
            )
            model.adapters[module] = build_adapter(w, acfg, seed=cfg.seed * 7919 + i)
            schedules[module] = _freeze.FreezeSchedule(
                rank=r, freeze_iters=ti, total_iters=cfg.total_steps,
                literal_formula=cfg.literal_schedule,
            )
    return schedules


def _build_optimizer(model, cfg):
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    if cfg.method == "full":
        for name, t in model.params.items():
            t.requires_grad = True
            opt.add_param(name, t)
        return opt
    for module, st in sorted(model.adapters.items()):
        if cfg.method == "lora":
            opt.add_param(f"{module}.a", st.a)
            opt.add_param(f"{module}.b", st.b)
        else:
            opt.add_param(f"{module}.s", st.s)
            opt.add_param(f"{module}.b", st.b, live_rows=st.trainable_rows)
    return opt


def _param_ids(model):
    ids = {id(t) for t in model.params.values()}
    for st in model.adapters.values():
        for attr in ("w_res", "a", "s", "b", "w"):
            t = getattr(st, attr, None)
            if t is not None:
                ids.add(id(t))
    return ids


def build_run(cfg, backbone_weights=None):
    """Model + adapters + optimizer + schedules for a run config."""
    cfg.validate()
    model = ToyTransformer(cfg.model, weights=backbone_weights, seed=cfg.seed)
    model.set_backbone_trainable(False)
    module_ids = model.linear_module_ids(cfg.adapted_kinds)
    ranks = resolve_ranks(cfg, {m: model.params[m].data for m in module_ids}, module_ids)
    schedules = attach_adapters(model, cfg, ranks)
    opt = _build_optimizer(model, cfg)
    return model, opt, schedules


def eval_loss(model, task_id, cfg, batches=4, seed=10_000):
    """Mean loss on freshly drawn eval batches; no graph is recorded."""
    task = make_task(task_id, cfg.model.vocab, cfg.model.context, seed=seed)
    losses = []
    for _ in range(batches):
        inputs, targets = task.batch(cfg.batch_size)
        losses.append(float(model.loss(inputs, targets).data))
    return float(np.mean(losses))


def train(cfg, backbone_weights=None, metrics_hook=None):
    """Run fine-tuning (or full training); returns per-step metrics and state.

    Metrics rows are (step, loss, live_trainable_params, retained_floats).
    Aborts with a diagnostic if the loss goes non-finite.
    """
    model, opt, schedules = build_run(cfg, backbone_weights)
    task = make_task(cfg.task, cfg.model.vocab, cfg.model.context, seed=cfg.seed + 1)
    param_ids = _param_ids(model)
    metrics = []

    for t in range(cfg.total_steps):
        for module, sched in schedules.items():
            rows = _freeze.trainable_rows(sched, t)
            st = model.adapters[module]
            if rows != st.trainable_rows:
                st.set_trainable_rows(rows)
                opt.set_live_rows(f"{module}.b", rows)

        inputs, targets = task.batch(cfg.batch_size)
        with Tape() as tape:
            loss = model.loss(inputs, targets)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise NumericalError(
                    f"loss diverged at step {t} (method={cfg.method}, "
                    f"task={cfg.task}, lr={cfg.lr})"
                )
            tape.backward(loss)
        retained = count_retained_activations(tape, param_ids)
        opt.step()
        opt.zero_grad()
        row = (t, loss_val, opt.live_scalars(), retained)
        metrics.append(row)
        if metrics_hook is not None:
            metrics_hook(row)

    return TrainResult(
        config=cfg, metrics=metrics, model=model, optimizer=opt,
        schedules=schedules, final_step=cfg.total_steps,
    )


def pretrain_backbone(model_cfg, task_id="copy", steps=1500, lr=3e-3,
                      batch_size=16, seed=0):
    """Seeded full-parameter pre-training run; returns the backbone weights."""
    cfg = TrainRunConfig(
        method="full", task=task_id, total_steps=steps, lr=lr,
        batch_size=batch_size, seed=seed, model=model_cfg,
    )
    result = train(cfg)
    return result.model.weights()
