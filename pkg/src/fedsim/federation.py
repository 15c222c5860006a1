"""The simulated federated loop: broadcast, local training, aggregation, evaluation.

One process plays every role. The privacy boundary is the ClientState
interface: shard rows never leave a client object, only flat parameter
vectors and scalar local accuracies cross into the server loop. The server
additionally owns the global holdout split, which was never issued to any
client.

All randomness derives from (master_seed + repeat index); each client gets an
independent per-round stream, so training clients in parallel is bit-identical
to training them sequentially.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .aggregation import AggregationStrategy, PriorityIndex, dw_fedavg, fedavg, update_priority_index
from .data import ClientShard, Dataset, SplitSpec, holdout_split, partition_clients
from .metrics import MetricSet, evaluate_scores
from .nn import DenseNetwork, TrainConfig, init_network, predict_labels, sgd_epoch

DEFAULT_HIDDEN_DIMS = (200, 100, 50)

# spawn-key domains for deriving independent RNG streams from one run seed
_DOMAIN_HOLDOUT = 0
_DOMAIN_PARTITION = 1
_DOMAIN_INIT = 2
_DOMAIN_CLIENT = 3


def derive_seed(base_seed: int, *key: int) -> int:
    """Collision-free 64-bit child seed for a (base, key...) combination."""
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


def _client_rng(run_seed: int, round_num: int, client_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(run_seed, spawn_key=(_DOMAIN_CLIENT, round_num, client_id))
    return np.random.default_rng(ss)


@dataclass
class ClientState:
    """A participant: its private shard, current local model and last accuracy."""

    client_id: int
    shard: ClientShard
    model: DenseNetwork
    last_local_acc: float = 0.0

    def receive_global(self, global_params: np.ndarray) -> None:
        """Replace the local model's parameters with the broadcast global ones."""
        self.model.set_vector(global_params)

    def local_update(self, cfg: TrainConfig, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """Train for cfg.local_epochs, measure accuracy on the local test split.

        Returns only what may cross the privacy boundary: the updated flat
        parameter vector and the scalar local test accuracy.
        """
        net = self.model
        for _ in range(cfg.local_epochs):
            net, _ = sgd_epoch(net, self.shard.train.features, self.shard.train.labels, cfg, rng)
        self.model = net
        pred = predict_labels(net, self.shard.local_test.features)
        self.last_local_acc = float(np.mean(pred == self.shard.local_test.labels))
        return net.to_vector(), self.last_local_acc


@dataclass
class ExperimentConfig:
    """Everything that determines one experiment (all repeats included)."""

    dataset: str
    n_clients: int = 5
    n_rounds: int = 10
    strategy: AggregationStrategy = AggregationStrategy.DW_FEDAVG
    alpha: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)  # seed is overridden per repeat
    local_test_fraction: float = 0.20
    repeats: int = 5
    master_seed: int = 42
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN_DIMS

    def __post_init__(self) -> None:
        if self.n_clients < 2:
            raise ValueError(f"n_clients must be >= 2, got {self.n_clients}")
        if self.n_rounds < 1:
            raise ValueError(f"n_rounds must be >= 1, got {self.n_rounds}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if isinstance(self.strategy, str):
            self.strategy = AggregationStrategy.parse(self.strategy)


@dataclass
class RoundReport:
    """Per-round outcome: global metrics plus the per-client view."""

    round: int
    global_metrics: MetricSet
    client_local_acc: np.ndarray
    betas_after_update: np.ndarray
    wall_time: float


@dataclass
class RepeatResult:
    repeat: int
    run_seed: int
    rounds: list[RoundReport]

    @property
    def final_metrics(self) -> MetricSet:
        return self.rounds[-1].global_metrics


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    repeats: list[RepeatResult]

    def summary(self) -> dict[str, tuple[float, float]]:
        """metric name -> (mean, population std) of final-round global metrics."""
        out: dict[str, tuple[float, float]] = {}
        finals = [r.final_metrics.as_dict() for r in self.repeats]
        for name in ("accuracy", "f1", "auc", "fpr"):
            vals = np.array([f[name] for f in finals])
            out[name] = (float(vals.mean()), float(vals.std()))
        return out


def run_round(
    server_params: np.ndarray,
    clients: list[ClientState],
    idx: PriorityIndex,
    cfg: ExperimentConfig,
    *,
    holdout: Dataset,
    run_seed: int,
    round_num: int,
    parallel: bool = False,
) -> tuple[np.ndarray, PriorityIndex, RoundReport]:
    """One full federated round.

    Order of events: broadcast the global parameters, train every client
    locally, collect (parameters, local accuracy) pairs, update the priority
    index (DW strategy only), aggregate, then evaluate the new global model on
    the holdout. ``round_num`` is 1-based.
    """
    t0 = time.perf_counter()
    for client in clients:
        client.receive_global(server_params)

    def _update(client: ClientState) -> tuple[np.ndarray, float]:
        rng = _client_rng(run_seed, round_num, client.client_id)
        return client.local_update(cfg.train, rng)

    if parallel and len(clients) > 1:
        with ThreadPoolExecutor(max_workers=len(clients)) as pool:
            results = list(pool.map(_update, clients))
    else:
        results = [_update(c) for c in clients]
    local_params = [vec for vec, _ in results]
    local_acc = np.array([acc for _, acc in results])

    if cfg.strategy is AggregationStrategy.DW_FEDAVG:
        idx = update_priority_index(idx, local_acc)
        new_params = dw_fedavg(local_params, idx)
    else:
        new_params = fedavg(local_params)

    net = DenseNetwork.from_vector(clients[0].model.layer_dims, new_params)
    metrics = evaluate_scores(net.forward(holdout.features), holdout.labels)
    report = RoundReport(
        round=round_num,
        global_metrics=metrics,
        client_local_acc=local_acc,
        betas_after_update=idx.betas.copy(),
        wall_time=time.perf_counter() - t0,
    )
    return new_params, idx, report


def setup_repeat(
    cfg: ExperimentConfig, dataset: Dataset, run_seed: int
) -> tuple[Dataset, list[ClientState], np.ndarray, PriorityIndex]:
    """Split, shard and initialize one repeat; returns (holdout, clients, params, index)."""
    split = replace(cfg.split, seed=derive_seed(run_seed, _DOMAIN_HOLDOUT))
    train, holdout = holdout_split(dataset, split)
    shards = partition_clients(
        train, cfg.n_clients, cfg.local_test_fraction, seed=derive_seed(run_seed, _DOMAIN_PARTITION)
    )
    global_net = init_network(dataset.features.shape[1], list(cfg.hidden_dims),
                              seed=derive_seed(run_seed, _DOMAIN_INIT))
    clients = [ClientState(s.client_id, s, global_net.copy()) for s in shards]
    return holdout, clients, global_net.to_vector(), PriorityIndex.uniform(cfg.n_clients, cfg.alpha)


def run_experiment(
    cfg: ExperimentConfig,
    dataset: Dataset,
    *,
    parallel_clients: bool = False,
    on_round=None,
) -> ExperimentResult:
    """Execute all repeats of an experiment on an already-loaded dataset.

    Repeat r runs with seed ``master_seed + r``, which drives the holdout
    split, the client partition, the common initial model and every client's
    training streams. ``on_round(repeat, report)`` is invoked after each round
    when given.
    """
    repeats: list[RepeatResult] = []
    for r in range(cfg.repeats):
        run_seed = cfg.master_seed + r
        holdout, clients, params, idx = setup_repeat(cfg, dataset, run_seed)
        reports: list[RoundReport] = []
        for round_num in range(1, cfg.n_rounds + 1):
            params, idx, report = run_round(
                params, clients, idx, cfg,
                holdout=holdout, run_seed=run_seed, round_num=round_num,
                parallel=parallel_clients,
            )
            reports.append(report)
            if on_round is not None:
                on_round(r, report)
        repeats.append(RepeatResult(repeat=r, run_seed=run_seed, rounds=reports))
    return ExperimentResult(config=cfg, repeats=repeats)
