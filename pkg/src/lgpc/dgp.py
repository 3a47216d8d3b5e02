"""Simulated time-series processes for level and power evaluation.

Ten base processes over (X1, X2, X3) with X3_t = X1_{t-1} (or iid noise for
process 1), plus primed and double-primed variants that widen the
conditioning variable to the 2- and 3-lag vectors.  Conditional
independence of X1_t and X2_t given X3_t holds for processes 1-4 (level)
and fails for 5-10 (power).  The benchmark driver runs the bootstrap test
over many replications with reproducible per-replication random streams.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .citest import TestConfig, ci_test
from .errors import InvalidInputError, LgpcError

BURN_IN = 200

_FAMILIES = ("base", "primed", "double_primed")
_PRIMED_IDS = (1, 2, 5, 6, 7, 8, 9, 10)

#: variance recursions are floored here so their square roots stay real
VAR_FLOOR = 0.01


@dataclass(frozen=True)
class DgpSpec:
    """Identifier and parameters of one simulated process."""

    id: int
    family: str = "base"
    n: int = 100
    seed: int = 0
    burn_in: int = BURN_IN

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidInputError(f"unknown family '{self.family}'")
        if self.family == "base":
            if self.id not in range(1, 11):
                raise InvalidInputError(f"unknown process id {self.id}")
        elif self.id not in _PRIMED_IDS:
            raise InvalidInputError(
                f"process {self.id} has no {self.family} variant"
            )
        if self.n < 1:
            raise InvalidInputError("n must be at least 1")
        if self.burn_in < 0:
            raise InvalidInputError("burn_in must be non-negative")

    @property
    def n_lags(self):
        return {"base": 1, "primed": 2, "double_primed": 3}[self.family]

    @property
    def null_true(self):
        return self.id in (1, 2, 3, 4)


def _simulate_paths(spec: DgpSpec, rng):
    """Run the (X1, X2) recursions for burn_in + n + lag steps."""
    total = spec.burn_in + spec.n + spec.n_lags
    e1 = rng.standard_normal(total)
    e2 = rng.standard_normal(total)
    x1 = np.zeros(total)
    x2 = np.zeros(total)
    i = spec.id
    fam = spec.family

    if i == 1:
        return e1, e2

    # X2 recursion: AR(1) everywhere except the volatility recursions below
    if i not in (4, 10):
        for t in range(1, total):
            x2[t] = 0.5 * x2[t - 1] + e2[t]

    if fam == "base":
        if i == 2:
            for t in range(1, total):
                x1[t] = 0.5 * x1[t - 1] + e1[t]
        elif i == 3:
            for t in range(1, total):
                x1[t] = e1[t] * np.sqrt(0.01 + 0.5 * x1[t - 1] ** 2)
        elif i == 4:
            h1 = 0.01 / (1.0 - 0.95)
            h2 = h1
            for t in range(1, total):
                h1 = 0.01 + 0.9 * h1 + 0.05 * x1[t - 1] ** 2
                h2 = 0.01 + 0.9 * h2 + 0.05 * x2[t - 1] ** 2
                x1[t] = e1[t] * np.sqrt(h1)
                x2[t] = e2[t] * np.sqrt(h2)
        elif i == 5:
            for t in range(1, total):
                x1[t] = 0.5 * x1[t - 1] + 0.5 * x2[t] + e1[t]
        elif i == 6:
            for t in range(1, total):
                x1[t] = 0.5 * x1[t - 1] + 0.5 * x2[t] ** 2 + e1[t]
        elif i == 7:
            for t in range(1, total):
                x1[t] = 0.5 * x1[t - 1] * x2[t] + e1[t]
        elif i == 8:
            for t in range(1, total):
                x1[t] = 0.5 * x1[t - 1] + 0.5 * x2[t] * e1[t]
        elif i == 9:
            for t in range(1, total):
                arg = 0.01 + 0.5 * x1[t - 1] ** 2 + 0.25 * x2[t] ** 2
                x1[t] = e1[t] * np.sqrt(max(arg, VAR_FLOOR))
        elif i == 10:
            h1 = 0.01 / (1.0 - 0.5)
            h2 = 0.01 / (1.0 - 0.9)
            x2_prev = 0.0
            for t in range(1, total):
                h2 = 0.01 + 0.9 * h2 + 0.5 * x2_prev ** 2
                x2[t] = e2[t] * np.sqrt(h2)
                h1 = 0.01 + 0.1 * h1 + 0.4 * x1[t - 1] ** 2 + 0.5 * x2[t] ** 2
                x1[t] = e1[t] * np.sqrt(h1)
                x2_prev = x2[t]
        return x1, x2

    # primed / double-primed X1 recursions (X2 kept as in the base process);
    # process 10 keeps its base recursion, only the conditioning lags widen
    if i == 10:
        h1 = 0.01 / (1.0 - 0.5)
        h2 = 0.01 / (1.0 - 0.9)
        x2_prev = 0.0
        for t in range(1, total):
            h2 = 0.01 + 0.9 * h2 + 0.5 * x2_prev ** 2
            x2[t] = e2[t] * np.sqrt(h2)
            h1 = 0.01 + 0.1 * h1 + 0.4 * x1[t - 1] ** 2 + 0.5 * x2[t] ** 2
            x1[t] = e1[t] * np.sqrt(h1)
            x2_prev = x2[t]
        return x1, x2

    dp = fam == "double_primed"
    extra = 0.125 if dp else 0.0
    for t in range(3 if dp else 2, total):
        tail = 0.25 * x1[t - 2] + (extra * x1[t - 3] if dp else 0.0)
        if i == 2:
            x1[t] = 0.5 * x1[t - 1] + tail + e1[t]
        elif i == 5:
            x1[t] = 0.5 * x1[t - 1] + tail + 0.5 * x2[t] + e1[t]
        elif i == 6:
            x1[t] = 0.5 * x1[t - 1] + tail + 0.5 * x2[t] ** 2 + e1[t]
        elif i == 7:
            x1[t] = 0.5 * x1[t - 1] * x2[t] + tail + e1[t]
        elif i == 8:
            x1[t] = 0.5 * x1[t - 1] + tail + 0.5 * x2[t] * e1[t]
        elif i == 9:
            arg = (
                0.01
                + 0.5 * x1[t - 1] ** 2
                + 0.25 * x1[t - 2] ** 2
                + (extra * x1[t - 3] ** 2 if dp else 0.0)
                + 0.25 * x2[t] ** 2
            )
            x1[t] = e1[t] * np.sqrt(arg)
    return x1, x2


def generate(spec: DgpSpec, rng=None):
    """Simulate one sample; columns are (X1_t, X2_t, conditioning lags)."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    q = spec.n_lags
    if spec.id == 1:
        x1 = rng.standard_normal(spec.n)
        x2 = rng.standard_normal(spec.n)
        x3 = rng.standard_normal((spec.n, q))
        return np.column_stack([x1, x2, x3])
    x1, x2 = _simulate_paths(spec, rng)
    start = spec.burn_in + q
    rows = np.arange(start, start + spec.n)
    cols = [x1[rows], x2[rows]]
    for lag in range(1, q + 1):
        cols.append(x1[rows - lag])
    return np.column_stack(cols)


@dataclass
class BenchmarkReport:
    """Rejection rates of the bootstrap test over Monte Carlo replications."""

    entries: list = field(default_factory=list)
    master_seed: int = 0

    def table(self):
        # elapsed time is kept out of the exports so identical runs produce
        # bitwise identical artifacts
        header = "dgp,family,n,c,B,reps,failed,rejection_rate"
        lines = [header]
        for e in self.entries:
            lines.append(
                f"{e['dgp']},{e['family']},{e['n']},{e['c']},{e['B']},"
                f"{e['reps']},{e['failed']},{e['rejection_rate']:.4f}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self):
        entries = [
            {k: v for k, v in e.items() if k != "elapsed_sec"}
            for e in self.entries
        ]
        return json.dumps(
            {"master_seed": self.master_seed, "entries": entries}, indent=2
        )


def _one_replication(args):
    spec_id, family, n, rep_seed_state, config_kwargs = args
    data_seed, test_seed = rep_seed_state
    spec = DgpSpec(id=spec_id, family=family, n=n, seed=0)
    rng = np.random.default_rng(np.random.SeedSequence(data_seed))
    data = generate(spec, rng)
    config = TestConfig(seed=test_seed, **config_kwargs)
    result = ci_test(data, config)
    return result.p_value


def benchmark(dgp_ids, n, reps, c=1.0, B=100, family="base", h_function="square",
              method="auto", seed=0, threads=1, level=0.05):
    """Rejection rate of the test at the given level over reps replications."""
    if reps < 1:
        raise InvalidInputError("reps must be at least 1")
    report = BenchmarkReport(master_seed=seed)
    config_kwargs = {"B": B, "c": c, "h_function": h_function, "method": method}
    for d_idx, dgp_id in enumerate(dgp_ids):
        # stable per-(process, replication) streams regardless of order
        ss = np.random.SeedSequence((seed, d_idx))
        children = ss.spawn(reps)
        tasks = []
        for child in children:
            state = child.generate_state(2)
            tasks.append((dgp_id, family, n, (int(state[0]), int(state[1])),
                          config_kwargs))
        t0 = time.time()
        p_values = []
        failures = []
        if threads > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_one_replication, tasks))
            for r_idx, res in enumerate(results):
                p_values.append(res)
        else:
            for r_idx, task in enumerate(tasks):
                try:
                    p_values.append(_one_replication(task))
                except LgpcError as exc:
                    failures.append({"replication": r_idx, "error": str(exc)})
        elapsed = time.time() - t0
        done = len(p_values)
        rate = float(np.mean([p <= level for p in p_values])) if done else float("nan")
        report.entries.append({
            "dgp": dgp_id,
            "family": family,
            "n": n,
            "c": c,
            "B": B,
            "reps": done,
            "failed": len(failures),
            "failures": failures,
            "rejection_rate": rate,
            "elapsed_sec": elapsed,
            "p_values": [float(p) for p in p_values],
        })
    return report
