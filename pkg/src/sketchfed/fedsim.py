"""Round-based federated simulation of sketched adaptive (SAFL) and sketched
clipped (SACFL) training, plus uncompressed baselines.

Each round the server and all clients build the same sketch operator from
``round_seed(master, t)``. Clients uplink ``sk(x_start - x_end)`` (and, for
SACFL, the update norm); the server averages, steps, and downlinks the averaged
sketches. Every client then recomputes the desketched step on its own mirror
state, so after each round all mirrors equal the server bit for bit.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import optim
from .config import ExperimentConfig, problem_dim, validate
from .errors import ConfigError, DivergenceError
from .problems import NoiseModel, SpectrumSpec, make_logistic, make_mlp, make_quadratic, split_clients
from .sketch import SketchKind, make_operator, round_seed

FLOAT_BYTES = 8
SEED_BYTES = 8
CSV_COLUMNS = ("round", "loss", "grad_norm_sq", "clip_active", "uplink_bytes", "cum_uplink_bytes")


@dataclass
class ServerState:
    x: np.ndarray
    opt: optim.AmsGradState | None = None


@dataclass
class ClientState:
    cid: int
    x: np.ndarray
    objective: object
    opt: optim.AmsGradState | None = None
    x_start: np.ndarray | None = None  # synchronized iterate at the start of the round


@dataclass(frozen=True)
class RoundPayload:
    sketched_update: np.ndarray
    update_norm: float | None = None


@dataclass(frozen=True)
class Downlink:
    """Server -> client message: averaged sketch(es) plus the round seed."""

    mbar: np.ndarray
    vbar: np.ndarray | float | None
    seed: int


@dataclass(frozen=True)
class CommLedger:
    uplink_bytes: int
    downlink_bytes: int
    baseline_uplink_bytes: int
    baseline_downlink_bytes: int

    def totals(self, rounds):
        return {k: v * rounds for k, v in dataclasses.asdict(self).items()}


@dataclass(frozen=True)
class MetricsRecord:
    round: int
    loss: float
    grad_norm_sq: float
    clip_active: bool
    uplink_bytes: int
    cum_uplink_bytes: int


@dataclass
class RunResult:
    config: dict
    records: list = field(default_factory=list)
    initial_loss: float = math.nan
    initial_grad_norm_sq: float = math.nan
    x_final: np.ndarray | None = None
    ledger: CommLedger | None = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# sketchfed metrics\n")
        buf.write("# config=" + json.dumps(self.config, sort_keys=True, default=_json_default) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([r.round, repr(r.loss), repr(r.grad_norm_sq), int(r.clip_active),
                        r.uplink_bytes, r.cum_uplink_bytes])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "seed": self.config.get("seed"),
            "initial_loss": self.initial_loss,
            "initial_grad_norm_sq": self.initial_grad_norm_sq,
            "ledger_per_round": dataclasses.asdict(self.ledger) if self.ledger else None,
            "ledger_totals": self.ledger.totals(len(self.records)) if self.ledger else None,
            "metrics": [dataclasses.asdict(r) for r in self.records],
        }
        return json.dumps(doc, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(repr(o))


def client_rng(master: int, t: int, c: int) -> np.random.Generator:
    """Minibatch-noise stream of client ``c`` in round ``t``; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master, spawn_key=(t, c)))


def client_local_steps(client: ClientState, eta: float, K: int, rng, t=None):
    """K local SGD steps from the client's synchronized iterate.

    Returns ``(delta, norm)`` with ``delta = x_start - x_end``; ``client.x`` is
    left at ``x_end`` and ``client.x_start`` keeps the starting point.
    """
    if K < 1:
        raise ValueError(f"local steps must be >= 1, got {K}")
    x0 = client.x
    client.x_start = x0
    x = x0.copy()
    for k in range(K):
        g = client.objective.stochastic_grad(x, rng)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"divergence: non-finite gradient at round {t}, client {client.cid}, step {k}")
        x = x - eta * g
    client.x = x
    delta = x0 - x
    norm = float(np.linalg.norm(delta))
    if not math.isfinite(norm):
        raise DivergenceError(f"divergence: non-finite update at round {t}, client {client.cid}")
    return delta, norm


@dataclass(frozen=True)
class RoundSpec:
    """Per-run constants the round functions need (resolved from ExperimentConfig)."""

    master_seed: int
    d: int
    K: int
    sketch_kind: SketchKind
    b: int
    lr: optim.LrSchedule
    optimizer: str = "amsgrad"
    bias_correction: bool = False
    clip: optim.ClipConfig | None = None
    kappa: float = 1.0
    batched: bool = True


def _round_operator(spec, t):
    return make_operator(spec.sketch_kind, spec.d, spec.b, round_seed(spec.master_seed, t))


def _desk_pair(op, mbar, vbar):
    both = op.desk_many(np.stack([mbar, vbar], axis=1))
    return both[:, 0].copy(), both[:, 1].copy()


def _ada_opt(spec, state, x, dm, dv, t):
    if spec.optimizer == "adam":
        return optim.adam_step(state, x, dm, dv, t=t, bias_correction=spec.bias_correction)
    return optim.amsgrad_step(state, x, dm, dv)


def _apply_safl_downlink(spec, state, x, msg: Downlink, t):
    op = make_operator(spec.sketch_kind, spec.d, spec.b, msg.seed)
    dm, dv = _desk_pair(op, msg.mbar, msg.vbar)
    return _ada_opt(spec, state, x, dm, dv, t)


def client_local_steps_batch(clients, eta: float, K: int, rngs, t=None):
    """:func:`client_local_steps` for all clients at once.

    Gradients of clients sharing one base problem are evaluated as a single
    matrix product; each client still draws noise from its own stream, so the
    result matches the per-client loop up to summation order.
    """
    objectives = [c.objective for c in clients]
    bases = {id(getattr(o, "base", o)) for o in objectives}
    base = getattr(objectives[0], "base", objectives[0])
    shifts = np.stack([getattr(o, "shift", np.zeros(o.d)) for o in objectives])
    X0 = np.stack([c.x for c in clients])
    X = X0.copy()
    for k in range(K):
        if len(bases) == 1:
            G = base.grad_many(X) + shifts
        else:
            G = np.stack([o.grad(x) for o, x in zip(objectives, X)])
        for i, o in enumerate(objectives):
            G[i] += o.noise.sample(o.d, rngs[i])
        if not np.all(np.isfinite(G)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(G), axis=1))[0])
            raise DivergenceError(f"divergence: non-finite gradient at round {t}, client {clients[bad].cid}, step {k}")
        X = X - eta * G
    D = X0 - X
    norms = np.linalg.norm(D, axis=1)
    if not np.all(np.isfinite(norms)):
        raise DivergenceError(f"divergence: non-finite update at round {t}")
    for i, c in enumerate(clients):
        c.x_start = c.x
        c.x = X[i]
    return list(D), [float(n) for n in norms]


def _local_phase(spec, clients, eta, t):
    rngs = [client_rng(spec.master_seed, t, c.cid) for c in clients]
    if spec.batched:
        return client_local_steps_batch(clients, eta, spec.K, rngs, t)
    deltas, norms = [], []
    for client, rng in zip(clients, rngs):
        delta, norm = client_local_steps(client, eta, spec.K, rng, t)
        deltas.append(delta)
        norms.append(norm)
    return deltas, norms


def safl_round(server: ServerState, clients, t: int, spec: RoundSpec):
    """One SAFL round. Mutates ``server`` and ``clients``; returns the downlink message."""
    op = _round_operator(spec, t)
    eta = optim.schedule_eta(t, spec.lr)
    deltas, _ = _local_phase(spec, clients, eta, t)
    payloads = [RoundPayload(op.sk(delta)) for delta in deltas]

    sk_stack = np.stack([p.sketched_update for p in payloads])
    mbar = sk_stack.mean(axis=0)
    vbar = (sk_stack * sk_stack).mean(axis=0)
    msg = Downlink(mbar, vbar, op.seed)

    server.x, server.opt = _apply_safl_downlink(spec, server.opt, server.x, msg, t)
    for client in clients:
        # the mirror step starts from the synchronized iterate, not the local-SGD result
        client.x, client.opt = _apply_safl_downlink(spec, client.opt, client.x_start, msg, t)
    return msg


def sacfl_round(server: ServerState, clients, t: int, spec: RoundSpec):
    """One SACFL round; returns ``(downlink, clip_active)``."""
    op = _round_operator(spec, t)
    deltas, norms = _local_phase(spec, clients, spec.clip.eta, t)
    payloads = [RoundPayload(op.sk(delta), norm) for delta, norm in zip(deltas, norms)]
    mbar = np.stack([p.sketched_update for p in payloads]).mean(axis=0)
    vbar = float(np.mean([p.update_norm for p in payloads]))
    msg = Downlink(mbar, vbar, op.seed)

    server.x = _apply_sacfl_downlink(spec, server.x, msg)
    for client in clients:
        client.x = _apply_sacfl_downlink(spec, client.x_start, msg)
    return msg, vbar > spec.clip.tau


def _apply_sacfl_downlink(spec, x, msg):
    op = make_operator(spec.sketch_kind, spec.d, spec.b, msg.seed)
    return optim.sacfl_server_step(x, op.desk(msg.mbar), msg.vbar, spec.clip)


def fedavg_round(server: ServerState, clients, t: int, spec: RoundSpec):
    """Uncompressed FedAvg with server learning rate kappa."""
    eta = optim.schedule_eta(t, spec.lr)
    deltas, _ = _local_phase(spec, clients, eta, t)
    mean = np.stack(deltas).mean(axis=0)
    server.x = server.x - spec.kappa * mean
    for client in clients:
        client.x = client.x_start - spec.kappa * mean
    return Downlink(mean, None, 0)


def comm_bytes(algorithm: str, C: int, b: int, d: int) -> CommLedger:
    """Exact per-round traffic with 8-byte floats and an 8-byte round seed."""
    base_up = C * d * FLOAT_BYTES
    base_down = C * d * FLOAT_BYTES
    if algorithm == "safl" or algorithm == "uncompressed_amsgrad_baseline":
        up = C * b * FLOAT_BYTES
        down = C * (2 * b * FLOAT_BYTES + SEED_BYTES)
    elif algorithm == "sacfl":
        up = C * (b + 1) * FLOAT_BYTES
        down = C * ((b + 1) * FLOAT_BYTES + SEED_BYTES)
    elif algorithm == "fedavg_baseline":
        up, down = base_up, base_down
    else:
        raise ConfigError("algorithm", f"unknown algorithm {algorithm!r}")
    return CommLedger(up, down, base_up, base_down)


def build_problem(cfg: ExperimentConfig):
    p = cfg.problem
    noise = NoiseModel(**dataclasses.asdict(cfg.noise))
    if p.kind == "quadratic":
        if p.spectrum == "explicit":
            spec = SpectrumSpec(np.asarray(p.eigenvalues, dtype=np.float64))
        else:
            spec = SpectrumSpec.power_law(p.d, p.exponent, p.scale)
        return make_quadratic(spec, seed=p.seed, noise=noise, x0_scale=p.x0_scale, rotate=p.rotate)
    if p.kind == "logistic":
        return make_logistic(p.n_samples, p.d, p.separation, seed=p.seed, noise=noise, data_weight=p.data_weight)
    return make_mlp(tuple(p.layers), p.n_samples, seed=p.seed, noise=noise)


def round_spec(cfg: ExperimentConfig) -> RoundSpec:
    d = problem_dim(cfg.problem)
    f, o = cfg.federation, cfg.optimizer
    kind, b = SketchKind(cfg.sketch.kind), cfg.sketch.b
    if cfg.algorithm in ("uncompressed_amsgrad_baseline", "fedavg_baseline"):
        kind, b = SketchKind.IDENTITY, d
    lr = optim.LrSchedule(cfg.lr.schedule, cfg.lr.eta, f.local_steps, o.beta1)
    clip = None
    if cfg.algorithm == "sacfl":
        c = cfg.clip
        if c.schedule == "theory":
            clip = optim.sacfl_schedule(f.local_steps, max(f.rounds, 1), c.alpha)
        else:
            clip = optim.ClipConfig(tau=c.tau, kappa=o.kappa, eta=cfg.lr.eta, alpha=c.alpha)
        if not c.enabled:
            clip = optim.ClipConfig(tau=math.inf, kappa=clip.kappa, eta=clip.eta, alpha=clip.alpha)
    return RoundSpec(cfg.seed, d, f.local_steps, kind, b, lr, o.name, o.bias_correction, clip, o.kappa)


def init_states(cfg: ExperimentConfig, problem, spec: RoundSpec):
    objectives = split_clients(problem, cfg.federation.clients, cfg.problem.heterogeneity, seed=cfg.problem.seed + 1)
    o = cfg.optimizer
    opt = None
    if cfg.algorithm in ("safl", "uncompressed_amsgrad_baseline"):
        opt = optim.AmsGradState.zeros(spec.d, beta1=o.beta1, beta2=o.beta2, kappa=o.kappa, eps=o.eps)
    server = ServerState(problem.x0.copy(), opt.copy() if opt else None)
    clients = [ClientState(c, problem.x0.copy(), objectives[c], opt.copy() if opt else None)
               for c in range(cfg.federation.clients)]
    return server, clients


def run_experiment(cfg: ExperimentConfig, problem=None, on_round=None) -> RunResult:
    """Run ``cfg.federation.rounds`` rounds. Deterministic given the config.

    ``on_round(t, server, clients)`` is called after every round (used by the
    synchronization checks).
    """
    validate(cfg)
    problem = problem if problem is not None else build_problem(cfg)
    spec = round_spec(cfg)
    server, clients = init_states(cfg, problem, spec)
    ledger = comm_bytes(cfg.algorithm, cfg.federation.clients, spec.b, spec.d)
    result = RunResult(config=cfg.to_dict(), ledger=ledger)
    result.initial_loss = float(problem.loss(server.x))
    g0 = problem.grad(server.x)
    result.initial_grad_norm_sq = float(np.dot(g0, g0))

    step = {"safl": safl_round, "uncompressed_amsgrad_baseline": safl_round,
            "sacfl": sacfl_round, "fedavg_baseline": fedavg_round}[cfg.algorithm]
    cum = 0
    for t in range(1, cfg.federation.rounds + 1):
        try:
            out = step(server, clients, t, spec)
        except DivergenceError as exc:
            raise DivergenceError(f"round {t}: {exc}") from exc
        clip_active = bool(out[1]) if cfg.algorithm == "sacfl" else False
        if not np.all(np.isfinite(server.x)):
            raise DivergenceError(f"round {t}: divergence, non-finite iterate")
        g = problem.grad(server.x)
        cum += ledger.uplink_bytes
        result.records.append(MetricsRecord(t, float(problem.loss(server.x)), float(np.dot(g, g)),
                                            clip_active, ledger.uplink_bytes, cum))
        if on_round is not None:
            on_round(t, server, clients)
    result.x_final = server.x.copy()
    return result
