"""Discrete-event simulation of the similarity consensus and a
proof-of-work baseline.

The engine runs fixed-length rounds (mining, voting, result waiting)
for the similarity protocol and exponential block arrivals for the
baseline, over one shared workload per seed so throughput comparisons
pair replicate by replicate. Bulk transaction traffic is held in
columnar arrays; the event heap carries the protocol-level events
(deadlines, proposals, arrivals of blocks), which keeps million-
transaction runs fast without changing observable behavior.

Simulated miners all watch the same mempool, so their user vectors
agree and honest comparisons always approve shared entries. That
collapses the voting tally to budget arithmetic (who computed the
longest verified prefix of the pair sequence), which the tests
cross-check against the full record-level tally on small instances.
Cryptographic cost is accounted from the real circuit sizes and
transcript formats even when the mock comparison backend is active.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from hashlib import sha256
from typing import Iterator, Optional

import numpy as np

from . import garbled
from .committee import (
    CommitteeConfig,
    RoundTimers,
    agree,
    select_committee,
)
from .errors import ConfigurationError
from .packing import PriorityWeights, kmeans
from .similarity import DEFAULT_CLASSES

EVENT_KINDS = (
    "TxCreate", "TxArrive", "MiningDeadline", "VoteExchange", "VoteSubmit",
    "CountDeadline", "BlockProposed", "BlockArrive", "RoundAbort",
)

# sha256 throughput measured on this class of hardware; only used to
# convert gate counts into simulated seconds in mock mode
_SHA_SECONDS = 4.4e-7
_AVG_ROW_TRIES = 2.5


@dataclass(frozen=True)
class SimConfig:
    """Knobs of one simulation run. Times in seconds, sizes in bytes
    unless suffixed otherwise."""

    n_nodes: int = 30
    sim_time: float = 10000.0
    tx_size: int = 250
    tx_delay_mean: float = 0.5
    block_size_mb: float = 1.0
    block_interval: float = 600.0
    block_delay: float = 0.4
    block_reward: float = 6.25
    link_delay_mean: float = 0.4
    tx_count_mean: float = 30.0
    fee_mean: float = 0.000062
    sigma: float = 1.0
    theta: float = 0.4
    eta: int = 1
    weights: PriorityWeights = field(default_factory=PriorityWeights)
    power_low: float = 0.0
    power_high: float = 100.0
    budget_scale: float = 12.0
    committee_size: int = 4
    rotation_period: int = 5
    honest_fraction: float = 1.0
    k_clusters: int = 3
    bitwidth: int = 16
    crypto_mode: str = "mock"
    tx_epoch: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        positive = {
            "n_nodes": self.n_nodes, "sim_time": self.sim_time,
            "tx_size": self.tx_size, "block_size_mb": self.block_size_mb,
            "block_interval": self.block_interval, "block_delay": self.block_delay,
            "tx_delay_mean": self.tx_delay_mean, "link_delay_mean": self.link_delay_mean,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be nonnegative")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError("theta must sit in [0, 1]")
        if self.eta < 1:
            raise ConfigurationError("eta must be at least 1")
        if not 0.0 <= self.power_low < self.power_high:
            raise ConfigurationError("power range must satisfy 0 <= low < high")
        if self.budget_scale <= 0:
            raise ConfigurationError("budget_scale must be positive")
        if self.committee_size < 4 or self.committee_size > self.n_nodes:
            raise ConfigurationError("committee size must sit in [4, n_nodes]")
        if self.rotation_period < 1:
            raise ConfigurationError("rotation_period must be at least 1")
        if not 0.0 <= self.honest_fraction <= 1.0:
            raise ConfigurationError("honest_fraction outside [0, 1]")
        if self.k_clusters < 1:
            raise ConfigurationError("k_clusters must be at least 1")
        if not 2 <= self.bitwidth <= 32:
            raise ConfigurationError("bitwidth outside 2..32")
        if self.crypto_mode not in ("mock", "real"):
            raise ConfigurationError("crypto_mode must be 'mock' or 'real'")
        if self.tx_epoch is not None and self.tx_epoch <= 0:
            raise ConfigurationError("tx_epoch must be positive when set")

    def capacity(self) -> int:
        """Transactions per block: block size over transaction size."""
        r = int(self.block_size_mb * (1 << 20) // self.tx_size)
        if r < 1:
            raise ConfigurationError("block too small for a single transaction")
        return r


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ConfigurationError(f"unknown event kind {self.kind!r}")


class EventLoop:
    """Min-heap of events, FIFO among equal timestamps."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()

    def push(self, event: Event) -> None:
        heapq.heappush(self._heap, (event.time, next(self._seq), event))

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[2]

    def __len__(self) -> int:
        return len(self._heap)

    def drain(self) -> Iterator[Event]:
        while self._heap:
            yield self.pop()


# ---------------------------------------------------------------------------
# workload


@dataclass
class Workload:
    """Columnar transaction stream, sorted by submit time, ids 1-based."""

    ids: np.ndarray
    source: np.ndarray
    tx_class: np.ndarray
    fee: np.ndarray
    size: np.ndarray
    submit: np.ndarray
    arrival: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def gen_workload(config: SimConfig, rng: np.random.Generator) -> Workload:
    """Sample the transaction stream.

    Per node and per generation epoch (default: the whole run), the
    transaction count is a rounded normal clamped at zero. Fees share
    the clamp; submit times are uniform inside the epoch; mempool
    arrival adds a clamped normal delay of at least one millisecond.
    """
    epoch = config.tx_epoch if config.tx_epoch is not None else config.sim_time
    n_epochs = max(1, math.ceil(config.sim_time / epoch))
    counts = np.rint(
        rng.normal(config.tx_count_mean, config.sigma, size=(n_epochs, config.n_nodes))
    ).astype(int)
    counts = np.maximum(counts, 0)

    total = int(counts.sum())
    if total == 0:
        empty_f = np.empty(0, dtype=float)
        empty_i = np.empty(0, dtype=np.int64)
        return Workload(empty_i, empty_i.copy(), empty_i.copy(), empty_f,
                        empty_i.copy(), empty_f.copy(), empty_f.copy())

    source = np.repeat(
        np.tile(np.arange(1, config.n_nodes + 1), n_epochs), counts.reshape(-1)
    )
    epoch_idx = np.repeat(
        np.repeat(np.arange(n_epochs), config.n_nodes), counts.reshape(-1)
    )
    submit = (epoch_idx + rng.random(total)) * epoch
    fee = np.maximum(rng.normal(config.fee_mean, config.sigma, total), 0.0)
    tx_class = rng.integers(0, len(DEFAULT_CLASSES), total)
    delay = np.maximum(rng.normal(config.tx_delay_mean, config.sigma, total), 0.001)
    arrival = submit + delay

    keep = submit <= config.sim_time
    submit, fee, tx_class, delay, arrival, source = (
        a[keep] for a in (submit, fee, tx_class, delay, arrival, source)
    )
    order = np.argsort(submit, kind="stable")
    return Workload(
        ids=np.arange(1, len(order) + 1, dtype=np.int64),
        source=source[order].astype(np.int64),
        tx_class=tx_class[order].astype(np.int64),
        fee=fee[order],
        size=np.full(len(order), config.tx_size, dtype=np.int64),
        submit=submit[order],
        arrival=arrival[order],
    )


# ---------------------------------------------------------------------------
# metrics


@dataclass
class Metrics:
    protocol: str
    sim_time: float
    seed: int
    total_tx_count: int
    confirmed_tx_count: int
    tps: float
    mean_latency: float
    p50_latency: float
    p90_latency: float
    rounds: int
    blocks_committed: int
    aborts: int
    leaders: tuple
    crypto_time: float
    crypto_bytes: int
    functionality_wins: int
    rounds_with_block: int
    latencies: np.ndarray
    round_log: list

    CSV_FIELDS = (
        "protocol", "seed", "sim_time", "total_tx_count", "confirmed_tx_count",
        "tps", "mean_latency", "p50_latency", "p90_latency", "rounds",
        "blocks_committed", "aborts", "crypto_time", "crypto_bytes",
        "functionality_wins", "rounds_with_block",
    )

    def csv_row(self) -> list:
        return [repr(getattr(self, f)) if isinstance(getattr(self, f), float)
                else getattr(self, f) for f in self.CSV_FIELDS]

    def summary(self) -> dict:
        return {f: getattr(self, f) for f in self.CSV_FIELDS}


def confirmation_latency(metrics: Metrics) -> np.ndarray:
    """Per-transaction commit-minus-submit times of the run."""
    return metrics.latencies.copy()


def _finish_metrics(
    protocol: str,
    config: SimConfig,
    wl: Workload,
    commit_time: np.ndarray,
    rounds: int,
    blocks: int,
    aborts: int,
    leaders: list,
    crypto_time: float,
    crypto_bytes: int,
    wins: int,
    rounds_with_block: int,
    round_log: list,
) -> Metrics:
    committed = commit_time > 0
    latencies = commit_time[committed] - wl.submit[committed]
    count = int(committed.sum())
    return Metrics(
        protocol=protocol,
        sim_time=config.sim_time,
        seed=config.seed,
        total_tx_count=len(wl),
        confirmed_tx_count=count,
        tps=count / config.sim_time,
        mean_latency=float(latencies.mean()) if count else float("nan"),
        p50_latency=float(np.percentile(latencies, 50)) if count else float("nan"),
        p90_latency=float(np.percentile(latencies, 90)) if count else float("nan"),
        rounds=rounds,
        blocks_committed=blocks,
        aborts=aborts,
        leaders=tuple(leaders),
        crypto_time=crypto_time,
        crypto_bytes=crypto_bytes,
        functionality_wins=wins,
        rounds_with_block=rounds_with_block,
        latencies=latencies,
        round_log=round_log,
    )


# ---------------------------------------------------------------------------
# crypto cost accounting


def _circuit_bytes(bitwidth: int) -> int:
    key = ("circuit", bitwidth)
    if key not in _circuit_bytes.cache:
        template = garbled.garble_comparator(bitwidth, 0.5, seed=0)
        _circuit_bytes.cache[key] = len(template.circuit.serialize())
    return _circuit_bytes.cache[key]


_circuit_bytes.cache = {}


def _crypto_round_costs(budgets: np.ndarray, config: SimConfig) -> tuple[int, float, int]:
    """Comparisons, simulated seconds, and transcript bytes per round.

    Every ordered (voter, candidate) pair compares the common prefix of
    their budgeted pair sequences, two matrix slots per user pair.
    Evaluation time comes from gate count times measured hash cost;
    bytes cover generator labels, the transfer transcript per evaluator
    bit, and the per-epoch circuit shipment amortized over the
    rotation period.
    """
    max_b = int(budgets.max()) if len(budgets) else 0
    if max_b == 0:
        return 0, 0.0, 0
    sorted_b = np.sort(budgets)
    ranks = np.arange(1, max_b + 1)
    cnt_ge = len(budgets) - np.searchsorted(sorted_b, ranks, side="left")
    comparisons = int(2 * (cnt_ge * (cnt_ge - 1)).sum())
    gates = 19 * config.bitwidth - 8
    eval_seconds = comparisons * gates * _AVG_ROW_TRIES * _SHA_SECONDS
    ot = garbled.DiffieHellmanOT(garbled.DEFAULT_GROUP)
    per_cmp_bytes = (
        config.bitwidth * garbled.LABEL_BYTES + config.bitwidth * ot.transfer_bytes()
    )
    m = len(budgets)
    circuit_share = _circuit_bytes(config.bitwidth) * m * (m - 1) / config.rotation_period
    total_bytes = int(comparisons * per_cmp_bytes + circuit_share)
    return comparisons, eval_seconds, total_bytes


# ---------------------------------------------------------------------------
# shared run helpers


def _rng_streams(config: SimConfig, protocol: str) -> dict[str, np.random.Generator]:
    """Independent generators per purpose.

    The workload stream depends only on the seed, never the protocol,
    so both protocols consume the identical transaction stream and
    replicate-level comparisons are paired.
    """
    root = np.random.SeedSequence(config.seed)
    wl_seq, proto_seq = root.spawn(2)
    streams = {"workload": np.random.default_rng(wl_seq)}
    material = sha256(f"{protocol}".encode()).digest()
    proto_root = np.random.SeedSequence(
        entropy=proto_seq.entropy,
        spawn_key=proto_seq.spawn_key + (int.from_bytes(material[:4], "big"),),
    )
    for name, seq in zip(("powers", "rounds", "faults"), proto_root.spawn(3)):
        streams[name] = np.random.default_rng(seq)
    return streams


def _user_vector_table(config: SimConfig) -> np.ndarray:
    return np.zeros((config.n_nodes + 1, len(DEFAULT_CLASSES)), dtype=float)


def _accumulate_view(
    table: np.ndarray,
    wl: Workload,
    lo: int,
    hi: int,
) -> None:
    """Fold arrivals [lo, hi) of the arrival-sorted index into per-user
    class counts."""
    np.add.at(table, (wl.source[lo:hi], wl.tx_class[lo:hi]), 1.0)


# ---------------------------------------------------------------------------
# the similarity protocol


def run_pous(config: SimConfig) -> Metrics:
    """Simulate the similarity consensus for config.sim_time seconds."""
    streams = _rng_streams(config, "pous")
    wl = gen_workload(config, streams["workload"])
    capacity = config.capacity()
    interval = config.block_interval
    n = config.n_nodes
    weights = config.weights

    powers = streams["powers"].uniform(config.power_low, config.power_high, n)
    total_pairs = n * (n - 1) // 2
    budgets = np.minimum(
        np.rint(powers * config.budget_scale).astype(int), total_pairs
    )
    # symmetric views: the longest verified prefix wins every tally
    leader = int(np.argmax(budgets)) + 1
    comparisons, round_crypto_time, round_crypto_bytes = _crypto_round_costs(
        budgets, config
    )

    committee_cfg = CommitteeConfig(
        size=config.committee_size,
        selection_seed=config.seed,
        rotation_period=config.rotation_period,
        honest_fraction=config.honest_fraction,
    )
    miners = list(range(1, n + 1))

    arrival_order = np.argsort(wl.arrival, kind="stable")
    arrivals_sorted = wl.arrival[arrival_order]
    commit_time = np.zeros(len(wl))
    committed = np.zeros(len(wl), dtype=bool)
    view = _user_vector_table(config)
    view_ptr = 0

    loop = EventLoop()
    n_rounds = int(config.sim_time // interval)
    for r in range(n_rounds):
        start = r * interval
        timers = RoundTimers.split_interval(start, interval)
        loop.push(Event(timers.mining_deadline, "MiningDeadline", {"round": r}))
        loop.push(Event(timers.voting_deadline, "VoteSubmit", {"round": r}))
        loop.push(Event(timers.result_waiting_deadline, "CountDeadline",
                        {"round": r, "timers": timers}))

    leaders: list[int] = []
    round_log: list[dict] = []
    aborts = 0
    blocks = 0
    wins = 0
    rounds_with_block = 0
    crypto_time = 0.0
    crypto_bytes = 0
    fault_rng = streams["faults"]
    round_rng = streams["rounds"]

    for ev in loop.drain():
        if ev.kind != "CountDeadline":
            continue
        r = ev.payload["round"]
        now = ev.time
        committee = select_committee(miners, committee_cfg, r)
        digest = sha256(f"round{r}|leader{leader}|b{int(budgets[leader - 1])}".encode()).hexdigest()
        submissions = {}
        for member in committee:
            if fault_rng.random() < config.honest_fraction:
                submissions[member] = (leader, digest)
            else:
                submissions[member] = (0, f"garbled-view-{r}-{member}")
        decision = agree(submissions, committee_cfg.size, round_index=r)
        crypto_time += round_crypto_time
        crypto_bytes += round_crypto_bytes

        if decision is None:
            aborts += 1
            round_log.append({"round": r, "aborted": 1, "leader": -1,
                              "packed": 0, "commit_time": -1.0, "sum_latency": 0.0})
            continue
        leaders.append(decision.leader)

        hi = int(np.searchsorted(arrivals_sorted, now, side="right"))
        if hi > view_ptr:
            idx = arrival_order[view_ptr:hi]
            np.add.at(view, (wl.source[idx], wl.tx_class[idx]), 1.0)
            view_ptr = hi
        pending_idx = arrival_order[:hi][~committed[arrival_order[:hi]]]
        if len(pending_idx) == 0:
            round_log.append({"round": r, "aborted": 0, "leader": decision.leader,
                              "packed": 0, "commit_time": -1.0, "sum_latency": 0.0})
            continue

        src = wl.source[pending_idx]
        users = np.unique(src)
        k = min(config.k_clusters, len(users))
        labels, centers = kmeans(
            view[users], k, seed=int(round_rng.integers(2**63))
        )
        dist_user = np.sqrt(((view[users] - centers[labels]) ** 2).sum(axis=1))
        dist_lookup = np.zeros(n + 1)
        dist_lookup[users] = dist_user

        d_tx = dist_lookup[src]
        prio = (
            weights.a * (now - wl.submit[pending_idx])
            + weights.b * wl.fee[pending_idx]
            + weights.c / (1.0 + d_tx)
        )
        order = np.lexsort((wl.ids[pending_idx], wl.submit[pending_idx], -prio))
        chosen = order[:capacity]
        sel_idx = pending_idx[chosen]

        pool_mean = float(d_tx.mean())
        sel_mean = float(d_tx[chosen].mean())
        if sel_mean <= pool_mean + 1e-12:
            wins += 1
        rounds_with_block += 1

        commit_at = now + config.block_delay
        if commit_at <= config.sim_time:
            committed[sel_idx] = True
            commit_time[sel_idx] = commit_at
            blocks += 1
            sum_latency = float((commit_at - wl.submit[sel_idx]).sum())
            round_log.append({"round": r, "aborted": 0, "leader": decision.leader,
                              "packed": int(len(sel_idx)), "commit_time": commit_at,
                              "sum_latency": sum_latency})
        else:
            round_log.append({"round": r, "aborted": 0, "leader": decision.leader,
                              "packed": 0, "commit_time": -1.0, "sum_latency": 0.0})

    return _finish_metrics(
        "pous", config, wl, commit_time, n_rounds, blocks, aborts, leaders,
        crypto_time, crypto_bytes, wins, rounds_with_block, round_log,
    )


# ---------------------------------------------------------------------------
# proof-of-work baseline


def run_pow(config: SimConfig) -> Metrics:
    """Work baseline: exponential block times, power-weighted leader,
    fee-descending packing, identical confirmation accounting."""
    streams = _rng_streams(config, "pow")
    wl = gen_workload(config, streams["workload"])
    capacity = config.capacity()

    powers = streams["powers"].uniform(config.power_low, config.power_high, config.n_nodes)
    pweights = powers / powers.sum()
    rng = streams["rounds"]

    arrival_order = np.argsort(wl.arrival, kind="stable")
    arrivals_sorted = wl.arrival[arrival_order]
    commit_time = np.zeros(len(wl))
    committed = np.zeros(len(wl), dtype=bool)

    loop = EventLoop()
    t = 0.0
    while True:
        t += rng.exponential(config.block_interval)
        if t + config.block_delay > config.sim_time:
            break
        loop.push(Event(t, "BlockProposed", {
            "leader": int(rng.choice(config.n_nodes, p=pweights)) + 1,
        }))

    leaders = []
    round_log = []
    blocks = 0
    r = 0
    for ev in loop.drain():
        now = ev.time
        leader = ev.payload["leader"]
        hi = int(np.searchsorted(arrivals_sorted, now, side="right"))
        pending_idx = arrival_order[:hi][~committed[arrival_order[:hi]]]
        commit_at = now + config.block_delay
        if len(pending_idx) == 0:
            round_log.append({"round": r, "aborted": 0, "leader": leader,
                              "packed": 0, "commit_time": commit_at, "sum_latency": 0.0})
            r += 1
            continue
        order = np.lexsort((
            wl.ids[pending_idx], wl.submit[pending_idx], -wl.fee[pending_idx]
        ))
        sel_idx = pending_idx[order[:capacity]]
        committed[sel_idx] = True
        commit_time[sel_idx] = commit_at
        blocks += 1
        leaders.append(leader)
        round_log.append({"round": r, "aborted": 0, "leader": leader,
                          "packed": int(len(sel_idx)), "commit_time": commit_at,
                          "sum_latency": float((commit_at - wl.submit[sel_idx]).sum())})
        r += 1

    return _finish_metrics(
        "pow", config, wl, commit_time, r, blocks, 0, leaders,
        0.0, 0, 0, blocks, round_log,
    )


# ---------------------------------------------------------------------------
# event trace


def trace_lines(config: SimConfig, protocol: str, metrics: Metrics) -> Iterator[str]:
    """Replayable line-delimited run log: header, rounds, summary."""
    cfg = {k: getattr(config, k) for k in (
        "n_nodes", "sim_time", "tx_size", "tx_delay_mean", "block_size_mb",
        "block_interval", "block_delay", "block_reward", "link_delay_mean",
        "tx_count_mean", "fee_mean", "sigma", "theta", "eta", "power_low",
        "power_high", "budget_scale", "committee_size", "rotation_period",
        "honest_fraction", "k_clusters", "bitwidth", "crypto_mode",
        "tx_epoch", "seed",
    )}
    cfg["weights"] = [config.weights.a, config.weights.b, config.weights.c]
    yield json.dumps({"kind": "header", "protocol": protocol, "config": cfg},
                     sort_keys=True)
    for entry in metrics.round_log:
        yield json.dumps({"kind": "round", **entry}, sort_keys=True)
    yield json.dumps({
        "kind": "summary",
        "confirmed_tx_count": metrics.confirmed_tx_count,
        "tps": metrics.tps,
        "mean_latency": None if math.isnan(metrics.mean_latency) else metrics.mean_latency,
        "blocks_committed": metrics.blocks_committed,
        "aborts": metrics.aborts,
    }, sort_keys=True)


def config_from_trace_header(header: dict) -> tuple[SimConfig, str]:
    cfg = dict(header["config"])
    w = cfg.pop("weights")
    config = SimConfig(weights=PriorityWeights(*w), **cfg)
    return config, header["protocol"]


def replay_trace(lines: list[str]) -> tuple[bool, str]:
    """Re-run a trace's configuration and diff every logged line.

    Returns (ok, message); any divergence names the first offending
    line.
    """
    if not lines:
        return False, "empty trace"
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        return False, "first line is not a trace header"
    config, protocol = config_from_trace_header(header)
    runner = run_pous if protocol == "pous" else run_pow
    metrics = runner(config)
    fresh = list(trace_lines(config, protocol, metrics))
    if len(fresh) != len(lines):
        return False, f"trace length {len(lines)} != replayed {len(fresh)}"
    for i, (old, new) in enumerate(zip(lines, fresh)):
        if old.strip() != new.strip():
            return False, f"line {i + 1} diverged:\n  trace:  {old.strip()}\n  replay: {new.strip()}"
    return True, f"replayed {len(lines)} lines, all identical"
