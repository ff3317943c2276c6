"""Accuracy oracles and synthetic ground-truth stats generation.

Real candidate training and on-device measurement are replaced by two
pluggable accuracy sources (a synthetic utility model and a tabular lookup)
plus a generator of layerwise execution stats with a known linear ground
truth, which doubles as the brute-force oracle for predictor fidelity tests.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import dataset as ds
from .design_space import (ActionCatalog, CandidateNetwork, ContextSpec,
                           apply_action, legal_actions)


def encode_chain(actions) -> str:
    """Canonical key for an action-index chain, e.g. ``0-2-1``."""
    return "-".join(str(a) for a in actions) if len(actions) else "empty"


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Accuracy as cap-saturated sum of per-action utilities.

    The j-th use of the same action contributes ``base * diminishing**j``;
    consecutive pairs can add interaction bonuses. Networks shallower than
    ``min_depth`` score 0, which makes the primary signal sparse.
    Deterministic when ``noise_sigma`` is 0.
    """

    base_utility: tuple[float, ...]  # indexed by catalog action
    diminishing: float = 0.9
    interaction_bonus: tuple = ()  # ((prev, curr, bonus), ...)
    noise_sigma: float = 0.0
    accuracy_cap: float = 1.0
    min_depth: int = 0
    seed: int = 0


class SyntheticOracle:
    def __init__(self, spec: SyntheticTaskSpec):
        self.spec = spec
        self._rng = np.random.default_rng(spec.seed)
        self._bonus = {(p, c): b for p, c, b in spec.interaction_bonus}

    def accuracy(self, net: CandidateNetwork, actions) -> float:
        if len(actions) == 0 or len(actions) < self.spec.min_depth:
            return 0.0
        raw = 0.0
        counts: dict[int, int] = {}
        prev = None
        for a in actions:
            raw += self.spec.base_utility[a] * (
                self.spec.diminishing ** counts.get(a, 0))
            counts[a] = counts.get(a, 0) + 1
            if prev is not None:
                raw += self._bonus.get((prev, a), 0.0)
            prev = a
        if self.spec.noise_sigma > 0:
            raw += float(self._rng.normal(0.0, self.spec.noise_sigma))
        return float(min(self.spec.accuracy_cap, max(0.0, raw)))


class TabularLookupError(KeyError):
    pass


class TabularOracle:
    """Exact accuracy lookup keyed by the encoded action chain.

    File format: CSV with header ``chain,accuracy[,latency_<i>...]``; the
    latency columns (one per context) ride along for benchmark-style use.
    """

    def __init__(self, path):
        self.table = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "chain" not in reader.fieldnames \
                    or "accuracy" not in reader.fieldnames:
                raise ValueError(f"{path}: expected 'chain,accuracy,...' header")
            for row in reader:
                self.table[row["chain"]] = float(row["accuracy"])

    def accuracy(self, net: CandidateNetwork, actions) -> float:
        key = encode_chain(actions)
        if key not in self.table:
            raise TabularLookupError(f"no benchmark row for chain {key!r}")
        return self.table[key]


# ---------------------------------------------------------------------------
# Synthetic layerwise stats with known ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthStatsModel:
    """Linear layerwise cost model with a memory-budget infeasibility rule.

    Per-layer latency (ms) is
    ``(c0 + c1*kernel^2 + c2*channels + c3*output_volume) * multiplier`` and
    memory (MB) is ``(m0 + m1*output_volume) * multiplier`` with one
    multiplier per context. A layer is infeasible on a context when its
    memory estimate exceeds the context's memory budget; rule can be
    disabled.
    """

    latency_coeffs: tuple[float, float, float, float] = (0.5, 0.02, 0.05, 0.001)
    memory_coeffs: tuple[float, float] = (0.1, 0.004)
    context_multipliers: tuple[float, ...] = (1.0,)
    infeasibility_rule: bool = True

    def layer_latency(self, layer, multiplier: float) -> float:
        c0, c1, c2, c3 = self.latency_coeffs
        vol = layer.channels * layer.height * layer.width
        return (c0 + c1 * layer.kernel_size ** 2 + c2 * layer.channels
                + c3 * vol) * multiplier

    def layer_memory(self, layer, multiplier: float) -> float:
        m0, m1 = self.memory_coeffs
        vol = layer.channels * layer.height * layer.width
        return (m0 + m1 * vol) * multiplier

    def layer_feasible(self, layer, ctx: ContextSpec, multiplier: float) -> bool:
        if not self.infeasibility_rule:
            return True
        return self.layer_memory(layer, multiplier) <= ctx.memory_mb


TARGET_NAMES = ["Execution time", "Memory Usage"]


def random_network(catalog: ActionCatalog, input_shape, rng) -> tuple:
    """A random shape-valid chain of random depth; returns (net, actions)."""
    depth = int(rng.integers(1, catalog.max_depth + 1))
    net = CandidateNetwork(input_shape)
    actions = []
    for _ in range(depth):
        legal = legal_actions(net, catalog)
        if not legal:
            break
        a = int(rng.choice(legal))
        net = apply_action(net, catalog.actions[a])
        actions.append(a)
    return net, actions


def gen_synth_stats(catalog: ActionCatalog, contexts, true_model: SynthStatsModel,
                    count: int, seed: int,
                    input_shape=(3, 16, 16)) -> tuple[ds.MetaDataset, list]:
    """Generate ``count`` layerwise stats rows from the linear ground truth.

    Returns the encoded dataset plus the raw rows (ready for write_stats).
    Deterministic given the seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if len(true_model.context_multipliers) != len(contexts):
        raise ValueError("one context multiplier per context required")
    rng = np.random.default_rng(seed)
    task_arity = len(contexts[0].task)
    raw_rows = []
    while len(raw_rows) < count:
        net, _ = random_network(catalog, input_shape, rng)
        ci = int(rng.integers(len(contexts)))
        ctx, mult = contexts[ci], true_model.context_multipliers[ci]
        shape = net.input_shape
        for layer in net.layers:
            if len(raw_rows) >= count:
                break
            feasible = true_model.layer_feasible(layer, ctx, mult)
            row = {
                "Type": layer.block_kind,
                "Kernel Size": layer.kernel_size,
                "Stride": layer.stride,
                "Padding": layer.padding,
                "Expansion Ratio": layer.expansion_ratio,
                "Idskip": int(layer.id_skip),
                "Channels": layer.channels,
                "Height": layer.height,
                "Width": layer.width,
                "Input Volume": shape[0] * shape[1] * shape[2],
                "Output Volume": layer.channels * layer.height * layer.width,
                "Cores": ctx.cores,
                "Compute Units": ctx.compute_units,
                "Memory": ctx.memory_mb,
                "Clock Freq.": ctx.clock_freq_mhz,
                "Memory B/w": ctx.memory_bandwidth,
                "Processor Kind": ctx.processor_kind,
                "feasible": int(feasible),
            }
            for i, v in enumerate(ctx.task):
                row[f"Task {i}"] = v
            if feasible:
                row["Execution time"] = true_model.layer_latency(layer, mult)
                row["Memory Usage"] = true_model.layer_memory(layer, mult)
            else:
                row["Execution time"] = ""
                row["Memory Usage"] = ""
            raw_rows.append(row)
            shape = (layer.channels, layer.height, layer.width)

    import os
    import tempfile
    fd, tmp = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        ds.write_stats(raw_rows, TARGET_NAMES, tmp, has_processor=True,
                       task_arity=task_arity)
        data = ds.ingest_stats(tmp)
    finally:
        os.unlink(tmp)
    return data, raw_rows
