"""Monotone neural network ensemble modelling the decision maker's utility.

Each member is a small feedforward network whose weights pass through an
exponential transform, making them strictly positive so the output is
non-decreasing in every input. Members train on pairwise comparisons with
a hinge loss (plus an absolute-difference term for ties) whose margin
scale is itself learned. Because comparisons carry no absolute scale,
member outputs are normalized against the compared outputs before
aggregation into a Gaussian belief (ensemble mean and spread).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
from scipy.special import expit

from bope.errors import ConfigError, InputError, TrainingError
from bope.gp import GaussianBelief

ENSEMBLE_FORMAT_VERSION = 1

DEFAULT_HIDDEN = (100, 10)
DEFAULT_ENSEMBLE_SIZE = 8

_ACTIVATIONS = ("swish", "sigmoid", "leaky-relu")
_LEAKY_SLOPE = 0.25


# ---------------------------------------------------------------------------
# Comparison data
# ---------------------------------------------------------------------------


class ComparisonSet:
    """Pairs of output vectors plus preference labels in {+1, -1, 0}."""

    def __init__(self, num_objectives: int):
        self.num_objectives = num_objectives
        self._y1: list[np.ndarray] = []
        self._y2: list[np.ndarray] = []
        self._labels: list[int] = []

    @classmethod
    def from_arrays(cls, Y1, Y2, labels) -> "ComparisonSet":
        Y1, Y2 = np.atleast_2d(np.asarray(Y1, float)), np.atleast_2d(np.asarray(Y2, float))
        cs = cls(Y1.shape[1])
        for y1, y2, p in zip(Y1, Y2, labels):
            cs.append(y1, y2, int(p))
        return cs

    def append(self, y1: np.ndarray, y2: np.ndarray, label: int) -> None:
        y1 = np.asarray(y1, dtype=float).reshape(-1)
        y2 = np.asarray(y2, dtype=float).reshape(-1)
        k = self.num_objectives
        if y1.shape != (k,) or y2.shape != (k,):
            raise InputError(
                f"comparison outputs have shapes {y1.shape}/{y2.shape}, expected ({k},)"
            )
        if label not in (-1, 0, 1):
            raise InputError(f"preference label must be one of -1, 0, +1; got {label}")
        self._y1.append(y1)
        self._y2.append(y2)
        self._labels.append(int(label))

    @property
    def m(self) -> int:
        return len(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    @property
    def Y1(self) -> np.ndarray:
        return np.asarray(self._y1, float).reshape(self.m, self.num_objectives)

    @property
    def Y2(self) -> np.ndarray:
        return np.asarray(self._y2, float).reshape(self.m, self.num_objectives)

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self._labels, dtype=int)

    def compared_outputs(self) -> np.ndarray:
        """All 2m outputs appearing in the pairs (duplicates kept)."""
        return np.concatenate([self.Y1, self.Y2], axis=0)

    def copy(self) -> "ComparisonSet":
        out = ComparisonSet(self.num_objectives)
        out._y1 = [y.copy() for y in self._y1]
        out._y2 = [y.copy() for y in self._y2]
        out._labels = list(self._labels)
        return out

    def to_dict(self) -> dict:
        return {
            "Y1": self.Y1.tolist(),
            "Y2": self.Y2.tolist(),
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonSet":
        return cls.from_arrays(np.asarray(d["Y1"]), np.asarray(d["Y2"]), d["labels"])


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------


def _activation_torch(name: str):
    if name == "swish":
        return torch.nn.functional.silu
    if name == "sigmoid":
        return torch.sigmoid
    if name == "leaky-relu":
        return lambda z: torch.nn.functional.leaky_relu(z, negative_slope=_LEAKY_SLOPE)
    raise ConfigError(f"activation must be one of {_ACTIVATIONS}, got {name!r}")


def _activation_numpy(name: str):
    if name == "swish":
        return lambda z: z * expit(z)
    if name == "sigmoid":
        return expit
    if name == "leaky-relu":
        return lambda z: np.where(z > 0, z, _LEAKY_SLOPE * z)
    raise ConfigError(f"activation must be one of {_ACTIVATIONS}, got {name!r}")


class MonotonicNet(torch.nn.Module):
    """Feedforward utility scorer with positive (exp-transformed) weights.

    ``monotone=False`` disables the exponential transform (ablation), in
    which case raw weights are used directly and initialization falls back
    to the symmetric range (the shifted range only exists to compensate
    for the transform).
    """

    def __init__(
        self,
        in_dim: int,
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
        activation: str = "swish",
        monotone: bool = True,
    ):
        super().__init__()
        self.in_dim = in_dim
        self.hidden = tuple(hidden)
        self.activation = activation
        self.monotone = monotone
        self._act = _activation_torch(activation)
        shapes = list(zip((in_dim, *hidden), (*hidden, 1)))
        self.raw_weights = torch.nn.ParameterList(
            torch.nn.Parameter(torch.zeros(s_in, s_out, dtype=torch.float64))
            for s_in, s_out in shapes
        )
        self.raw_biases = torch.nn.ParameterList(
            torch.nn.Parameter(torch.zeros(s_out, dtype=torch.float64))
            for _, s_out in shapes
        )
        # softplus(hinge_scale_raw) = 1 at init
        self.hinge_scale_raw = torch.nn.Parameter(
            torch.tensor(float(np.log(np.e - 1)), dtype=torch.float64)
        )

    @property
    def hinge_scale(self) -> torch.Tensor:
        return torch.nn.functional.softplus(self.hinge_scale_raw)

    def effective_weights(self) -> list[torch.Tensor]:
        if self.monotone:
            return [torch.exp(w) for w in self.raw_weights]
        return list(self.raw_weights)

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        if y.shape[-1] != self.in_dim:
            raise InputError(
                f"input has {y.shape[-1]} coordinates, expected {self.in_dim}"
            )
        a = y
        weights = self.effective_weights()
        last = len(weights) - 1
        for i, (w, b) in enumerate(zip(weights, self.raw_biases)):
            a = a @ w + b
            if i != last:
                a = self._act(a)
        return a.squeeze(-1)

    def score(self, Y: np.ndarray) -> np.ndarray:
        """Raw utility scores for an (n, k) array, without gradients."""
        with torch.no_grad():
            t = torch.as_tensor(np.atleast_2d(Y), dtype=torch.float64)
            return self.forward(t).numpy()


def init_net(
    in_dim: int,
    seed: int,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    activation: str = "swish",
    monotone: bool = True,
) -> MonotonicNet:
    """Fresh network with fan-in-scaled uniform initialization.

    For fan-in s, raw weights are uniform on [-(1/s)-6, 1/s] (so their
    exponentials cover (~e^-6, e^(1/s))) and biases uniform on [-1/s, 1/s].
    """
    if in_dim < 1:
        raise InputError(f"in_dim must be >= 1, got {in_dim}")
    net = MonotonicNet(in_dim, hidden=hidden, activation=activation, monotone=monotone)
    gen = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
    with torch.no_grad():
        for w, b in zip(net.raw_weights, net.raw_biases):
            s = w.shape[0]
            w_low = -1.0 / s - (6.0 if monotone else 0.0)
            w_high = 1.0 / s
            w.copy_(
                torch.rand(w.shape, generator=gen, dtype=torch.float64)
                * (w_high - w_low)
                + w_low
            )
            b.copy_(
                torch.rand(b.shape, generator=gen, dtype=torch.float64) * (2.0 / s)
                - 1.0 / s
            )
    return net


def hinge_loss(net: MonotonicNet, data: ComparisonSet) -> torch.Tensor:
    """Margin loss over all comparisons; ties contribute |score gap|."""
    if data.m < 1:
        raise InputError("comparison set is empty")
    y1 = torch.as_tensor(data.Y1, dtype=torch.float64)
    y2 = torch.as_tensor(data.Y2, dtype=torch.float64)
    p = torch.as_tensor(data.labels, dtype=torch.float64)
    gap = net(y1) - net(y2)
    alpha = net.hinge_scale
    tied = p == 0
    hinge = torch.clamp(1 - alpha * gap * p, min=0.0)
    per_pair = torch.where(tied, torch.abs(gap), hinge)
    return per_pair.sum()


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1600
    lr: float = 0.01
    lr_floor: float = 1e-4
    lr_period: int | None = None  # cosine annealing period, defaults to epochs
    early_stop_loss: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if not self.lr_floor < self.lr:
            raise ConfigError(
                f"train.lr_floor must be < train.lr ({self.lr_floor} vs {self.lr})"
            )

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "lr": self.lr,
            "lr_floor": self.lr_floor,
            "lr_period": self.lr_period,
            "early_stop_loss": self.early_stop_loss,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainResult:
    net: MonotonicNet
    initial_loss: float
    final_loss: float
    epochs_run: int


def train_member(net: MonotonicNet, data: ComparisonSet, cfg: TrainConfig) -> TrainResult:
    """Full-batch Adam with cosine-annealed learning rate; keeps the best
    iterate, so the returned loss never exceeds the initial one."""
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=cfg.lr_period or cfg.epochs, eta_min=cfg.lr_floor
    )
    best_loss = np.inf
    best_state = None
    initial = None
    epochs_run = 0
    for epoch in range(cfg.epochs):
        loss = hinge_loss(net, data)
        value = float(loss.item())
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        if initial is None:
            initial = value
        epochs_run = epoch + 1
        if value < best_loss:
            best_loss = value
            best_state = copy.deepcopy(net.state_dict())
        if value <= cfg.early_stop_loss:
            break
        opt.zero_grad()
        loss.backward()
        for name, p in net.named_parameters():
            if p.grad is not None and not torch.all(torch.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient for {name} at epoch {epoch}")
        opt.step()
        sched.step()
    net.load_state_dict(best_state)
    return TrainResult(
        net=net, initial_loss=initial, final_loss=best_loss, epochs_run=epochs_run
    )


# ---------------------------------------------------------------------------
# Ensemble
# ---------------------------------------------------------------------------


@dataclass
class NormStats:
    g_max: float
    mu: float
    sigma: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "g_max": self.g_max,
            "mu": self.mu,
            "sigma": self.sigma,
            "degenerate": self.degenerate,
        }


def normalize(member: MonotonicNet, data: ComparisonSet) -> NormStats:
    """Per-member scaling statistics over the 2m compared outputs.

    The spread uses the number of pairs m in the denominator (not 2m), so
    for a single pair with scores {1, 3} it equals sqrt(2). A zero spread
    (all scores identical) falls back to 1 and is flagged.
    """
    scores = member.score(data.compared_outputs())
    g_max = float(scores.max())
    mu = float(scores.mean())
    sigma = float(np.sqrt(np.sum((scores - mu) ** 2) / data.m))
    if sigma <= 0.0:
        return NormStats(g_max=g_max, mu=mu, sigma=1.0, degenerate=True)
    return NormStats(g_max=g_max, mu=mu, sigma=sigma)


class MonotonicEnsemble:
    """Independently trained members plus their normalization statistics."""

    def __init__(
        self,
        members: list[MonotonicNet],
        norm_stats: list[NormStats],
        train_config: TrainConfig,
        train_losses: list[float] | None = None,
    ):
        if len(members) < 1:
            raise InputError("ensemble needs at least one member")
        if len(members) != len(norm_stats):
            raise InputError("one NormStats per member required")
        self.members = members
        self.norm_stats = norm_stats
        self.train_config = train_config
        self.train_losses = train_losses or []
        self._np_layers = [self._extract_numpy(m) for m in members]
        self._np_act = _activation_numpy(members[0].activation)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def num_objectives(self) -> int:
        return self.members[0].in_dim

    @staticmethod
    def _extract_numpy(net: MonotonicNet):
        with torch.no_grad():
            return [
                (w.numpy().copy(), b.detach().numpy().copy())
                for w, b in zip(net.effective_weights(), net.raw_biases)
            ]

    def _np_forward(self, idx: int, Y: np.ndarray) -> np.ndarray:
        a = Y
        layers = self._np_layers[idx]
        for i, (w, b) in enumerate(layers):
            a = a @ w + b
            if i != len(layers) - 1:
                a = self._np_act(a)
        return a[:, 0]

    def member_scores_raw(self, Y: np.ndarray) -> np.ndarray:
        """(M, n) raw member scores for an (n, k) output array."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.num_objectives:
            raise InputError(
                f"outputs have {Y.shape[1]} coordinates, expected {self.num_objectives}"
            )
        return np.stack([self._np_forward(i, Y) for i in range(self.size)])

    def member_scores(self, Y: np.ndarray) -> np.ndarray:
        """(M, n) normalized member scores: (g - g_max) / sigma."""
        raw = self.member_scores_raw(Y)
        g_max = np.array([s.g_max for s in self.norm_stats])[:, None]
        sigma = np.array([s.sigma for s in self.norm_stats])[:, None]
        return (raw - g_max) / sigma

    def belief_batch(self, Y: np.ndarray):
        """Ensemble mean and population variance per row of Y."""
        scores = self.member_scores(Y)
        return scores.mean(axis=0), scores.var(axis=0)

    def predict_belief(self, y: np.ndarray) -> GaussianBelief:
        mean, var = self.belief_batch(np.atleast_2d(y))
        return GaussianBelief(float(mean[0]), float(var[0]))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        members = []
        for net in self.members:
            with torch.no_grad():
                members.append(
                    {
                        "raw_weights": [w.numpy().tolist() for w in net.raw_weights],
                        "raw_biases": [b.numpy().tolist() for b in net.raw_biases],
                        "hinge_scale_raw": float(net.hinge_scale_raw.item()),
                    }
                )
        first = self.members[0]
        return {
            "version": ENSEMBLE_FORMAT_VERSION,
            "in_dim": first.in_dim,
            "hidden": list(first.hidden),
            "activation": first.activation,
            "monotone": first.monotone,
            "members": members,
            "norm_stats": [s.to_dict() for s in self.norm_stats],
            "train_config": self.train_config.to_dict(),
            "train_losses": self.train_losses,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonotonicEnsemble":
        if d.get("version") != ENSEMBLE_FORMAT_VERSION:
            raise InputError(
                f"ensemble format version {d.get('version')} != {ENSEMBLE_FORMAT_VERSION}"
            )
        members = []
        for spec in d["members"]:
            net = MonotonicNet(
                d["in_dim"],
                hidden=tuple(d["hidden"]),
                activation=d["activation"],
                monotone=d["monotone"],
            )
            with torch.no_grad():
                for w, raw in zip(net.raw_weights, spec["raw_weights"]):
                    w.copy_(torch.tensor(raw, dtype=torch.float64))
                for b, raw in zip(net.raw_biases, spec["raw_biases"]):
                    b.copy_(torch.tensor(raw, dtype=torch.float64))
                net.hinge_scale_raw.copy_(
                    torch.tensor(spec["hinge_scale_raw"], dtype=torch.float64)
                )
            members.append(net)
        norm = [NormStats(**s) for s in d["norm_stats"]]
        return cls(
            members,
            norm,
            TrainConfig.from_dict(d["train_config"]),
            train_losses=d.get("train_losses"),
        )


def train_ensemble(
    data: ComparisonSet,
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE,
    cfg: TrainConfig | None = None,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    activation: str = "swish",
    monotone: bool = True,
) -> MonotonicEnsemble:
    """Train ``ensemble_size`` members from independent initializations."""
    if data.m < 1:
        raise InputError("comparison set is empty")
    if ensemble_size < 1:
        raise InputError(f"ensemble_size must be >= 1, got {ensemble_size}")
    cfg = cfg or TrainConfig()
    member_seeds = np.random.SeedSequence(cfg.seed).generate_state(ensemble_size)
    members, stats, losses = [], [], []
    for idx, member_seed in enumerate(member_seeds):
        net = init_net(
            data.num_objectives,
            seed=int(member_seed),
            hidden=hidden,
            activation=activation,
            monotone=monotone,
        )
        try:
            result = train_member(net, data, cfg)
        except TrainingError as exc:
            raise TrainingError(f"member {idx}: {exc}") from exc
        members.append(result.net)
        stats.append(normalize(result.net, data))
        losses.append(result.final_loss)
    return MonotonicEnsemble(members, stats, cfg, train_losses=losses)
