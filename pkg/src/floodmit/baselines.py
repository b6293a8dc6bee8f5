"""Reference controllers: the reactive rule policy and a genetic-algorithm
schedule search that optimizes the exact objective the gradient-trained
scheduler optimizes, through the same frozen referee model."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .models.losses import LossWeights, Thresholds, evaluate_levels
from .series import ValidationError
from .sim.topology import NetworkTopology


@dataclass(frozen=True)
class StationRule:
    open_trigger_ft: float
    close_trigger_ft: float
    pump_trigger_ft: float

    def __post_init__(self):
        if not self.close_trigger_ft < self.open_trigger_ft:
            raise ValidationError("close trigger must be below open trigger")


@dataclass(frozen=True)
class RulePolicy:
    """Hysteresis gate rule plus a pump trigger, per station.

    Gates latch open above ``open_trigger`` and latch closed below
    ``close_trigger``; in between they hold their previous setting, which
    prevents chattering.  Pumps are on iff the level exceeds their trigger.
    The default close trigger sits below the wastage threshold on purpose:
    reactive operation drains storage further than necessary after storms,
    which is the documented weakness a forecast-informed scheduler exploits
    (baseline wastage hours outnumber flood hours by an order of magnitude).
    """

    default: StationRule = field(default_factory=lambda: StationRule(3.0, 1.9, 3.3))
    per_station: dict = field(default_factory=dict)

    def rule_for(self, station: str) -> StationRule:
        return self.per_station.get(station, self.default)

    def to_dict(self) -> dict:
        return {
            "default": vars(self.default),
            "per_station": {k: vars(v) for k, v in self.per_station.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RulePolicy":
        return cls(default=StationRule(**d["default"]),
                   per_station={k: StationRule(**v)
                                for k, v in d.get("per_station", {}).items()})


def rule_schedule(policy: RulePolicy, levels: np.ndarray, topology: NetworkTopology,
                  previous: np.ndarray) -> np.ndarray:
    """One step of the rule controller given current cell levels."""
    controls = np.empty(topology.n_structures)
    for j, s in enumerate(topology.structures):
        up, _ = topology.structure_cell_index(s)
        level = float(levels[up]) if up is not None else 0.0
        rule = policy.rule_for(s.upstream)
        if s.kind == "gate":
            if level > rule.open_trigger_ft:
                controls[j] = 1.0
            elif level < rule.close_trigger_ft:
                controls[j] = 0.0
            else:
                controls[j] = previous[j]
        else:
            controls[j] = 1.0 if level > rule.pump_trigger_ft else 0.0
    return controls


class RuleController:
    """Stateful wrapper implementing the simulator controller protocol."""

    def __init__(self, policy: RulePolicy, topology: NetworkTopology):
        self.policy = policy
        self.topology = topology
        self.previous = np.zeros(topology.n_structures)

    def reset(self) -> None:
        self.previous = np.zeros(self.topology.n_structures)

    def __call__(self, state, forecast) -> np.ndarray:
        controls = rule_schedule(self.policy, state.levels, self.topology, self.previous)
        self.previous = controls
        return controls


class NoisyController:
    """Adds clipped uniform exploration noise to another controller's output.

    Without exploration the generated schedules are a deterministic function
    of the levels and a learned surrogate never sees the control-to-level
    causal link, so gradients through it are meaningless.
    """

    def __init__(self, inner, amplitude: float, rng: np.random.Generator):
        self.inner = inner
        self.amplitude = amplitude
        self.rng = rng

    def reset(self) -> None:
        if hasattr(self.inner, "reset"):
            self.inner.reset()

    def __call__(self, state, forecast) -> np.ndarray:
        controls = np.asarray(self.inner(state, forecast), dtype=np.float64)
        if self.amplitude > 0:
            controls = controls + self.rng.uniform(-self.amplitude, self.amplitude,
                                                   controls.shape)
        return np.clip(controls, 0.0, 1.0)


# -- genetic algorithm --------------------------------------------------------


@dataclass(frozen=True)
class GAConfig:
    population: int = 32
    generations: int = 50
    crossover_rate: float = 0.7
    mutation_rate: float = 0.15
    mutation_sigma: float = 0.2
    elitism: int = 2
    tournament: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValidationError("population must be >= 2")
        for name in ("crossover_rate", "mutation_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0,1]")
        if not 0 <= self.elitism < self.population:
            raise ValidationError("elitism must be in [0, population)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "GAConfig":
        return cls(**d)


@dataclass
class GAResult:
    best_schedule: np.ndarray   # [k x S]
    best_fitness: float
    fitness_trace: list         # best-of-generation, non-increasing
    evaluator_calls: int
    elapsed_s: float


def ga_optimize(evaluator, sample, thresholds: Thresholds, weights: LossWeights,
                cfg: GAConfig, warm_start: np.ndarray | None = None) -> GAResult:
    """Search a [k x S] schedule minimizing the same referee loss the
    gradient-trained scheduler minimizes.

    The chromosome is the flattened schedule; fitness for a whole generation
    is computed in one batched referee call.  Tournament selection, uniform
    crossover, Gaussian mutation clipped to [0,1], elitism.  Requires a
    frozen evaluator so the objective cannot drift mid-search.
    """
    from .autodiff import FrozenParamsError

    if not evaluator.is_frozen():
        raise FrozenParamsError("ga_optimize requires a frozen evaluator")

    rng = np.random.default_rng(cfg.seed)
    k, s = sample.future_controls.shape
    genome = k * s

    pop = rng.random((cfg.population, genome))
    if warm_start is not None:
        pop[0] = np.clip(np.asarray(warm_start, dtype=np.float64).reshape(genome), 0, 1)

    calls = 0
    t0 = time.perf_counter()

    def fitness(population: np.ndarray) -> np.ndarray:
        nonlocal calls
        schedules = population.reshape(-1, k, s)
        levels = evaluator.predict_batch(sample.past, sample.future_cov, schedules)
        calls += len(population)
        return np.array([evaluate_levels(lv, thresholds, weights)[2] for lv in levels])

    fit = fitness(pop)
    best_idx = int(np.argmin(fit))
    best = pop[best_idx].copy()
    best_fit = float(fit[best_idx])
    trace = [best_fit]
    for _ in range(cfg.generations):
        order = np.argsort(fit)
        new_pop = [pop[i].copy() for i in order[:cfg.elitism]]
        while len(new_pop) < cfg.population:
            contenders = rng.integers(0, cfg.population, cfg.tournament)
            a = pop[contenders[np.argmin(fit[contenders])]]
            contenders = rng.integers(0, cfg.population, cfg.tournament)
            b = pop[contenders[np.argmin(fit[contenders])]]
            child = a.copy()
            if rng.random() < cfg.crossover_rate:
                mask = rng.random(genome) < 0.5
                child[mask] = b[mask]
            mutate = rng.random(genome) < cfg.mutation_rate
            child[mutate] += rng.normal(0.0, cfg.mutation_sigma, mutate.sum())
            new_pop.append(np.clip(child, 0.0, 1.0))
        pop = np.stack(new_pop)
        fit = fitness(pop)
        gen_best = int(np.argmin(fit))
        if float(fit[gen_best]) < best_fit:
            best_fit = float(fit[gen_best])
            best = pop[gen_best].copy()
        trace.append(best_fit)

    return GAResult(best_schedule=best.reshape(k, s), best_fitness=best_fit,
                    fitness_trace=trace, evaluator_calls=calls,
                    elapsed_s=time.perf_counter() - t0)
