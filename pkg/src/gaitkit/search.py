"""Bi-objective configuration search (maximize F1, minimize energy) with
NSGA-II-style non-dominated sorting, crowding-distance selection, and an
archive from which the final Pareto front is extracted.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

BITWIDTHS = (4, 6, 8)
BATCH_SIZES = (16, 32, 48)
LR_BOUNDS = (1e-5, 1e-3)
VARIABLE_CHOICES = {
    "cnn1d": tuple(range(1, 7)),
    "sepcnn1d": tuple(range(1, 7)),
    "lstm": tuple(range(8, 65, 8)),
    "transformer": (8, 16, 24, 32),
}
# energy assigned to failed evaluations: finite, dominated by everything
FAILED_ENERGY_UJ = 1e12


@dataclass(frozen=True)
class SearchSpace:
    arch: str
    bitwidths: tuple = BITWIDTHS
    batch_sizes: tuple = BATCH_SIZES
    lr_bounds: tuple = LR_BOUNDS
    variables: tuple = None  # num_blocks / h_size / d_model choices

    def __post_init__(self):
        if self.arch not in VARIABLE_CHOICES:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.variables is None:
            object.__setattr__(self, "variables", VARIABLE_CHOICES[self.arch])

    def sample(self, rng):
        return {
            "arch": self.arch,
            "bitwidth": int(rng.choice(self.bitwidths)),
            "bs": int(rng.choice(self.batch_sizes)),
            "variable": int(rng.choice(self.variables)),
            "lr": float(math.exp(rng.uniform(math.log(self.lr_bounds[0]),
                                             math.log(self.lr_bounds[1])))),
        }


@dataclass(frozen=True)
class Trial:
    genes: dict
    f1: float
    energy_uj: float
    deployable: bool
    seed: int
    index: int

    def to_dict(self):
        return {"genes": self.genes, "f1": self.f1, "energy_uj": self.energy_uj,
                "deployable": self.deployable, "seed": self.seed, "index": self.index}


def dominates(a, b):
    """a dominates b: no worse in both objectives, strictly better in one."""
    return (a.f1 >= b.f1 and a.energy_uj <= b.energy_uj
            and (a.f1 > b.f1 or a.energy_uj < b.energy_uj))


def nondominated_sort(trials):
    """Fronts of deployable-and-comparable trials, crowding-ordered within."""
    trials = list(trials)
    if not trials:
        raise ConfigError("nondominated_sort needs at least one trial")
    remaining = list(trials)
    fronts = []
    while remaining:
        front = [t for t in remaining
                 if not any(dominates(o, t) for o in remaining if o is not t)]
        if not front:  # mutually identical trials dominate nothing
            front = remaining[:]
        dist = crowding_distance(front)
        front.sort(key=lambda t: -dist[id(t)])
        fronts.append(front)
        remaining = [t for t in remaining if t not in front]
    return fronts


def crowding_distance(front):
    """Per-trial crowding distance; boundary points are infinite."""
    dist = {id(t): 0.0 for t in front}
    n = len(front)
    if n <= 2:
        return {id(t): math.inf for t in front}
    for key in (lambda t: t.f1, lambda t: t.energy_uj):
        order = sorted(front, key=key)
        lo, hi = key(order[0]), key(order[-1])
        dist[id(order[0])] = math.inf
        dist[id(order[-1])] = math.inf
        span = hi - lo
        if span <= 0:
            continue
        for i in range(1, n - 1):
            if math.isfinite(dist[id(order[i])]):
                dist[id(order[i])] += (key(order[i + 1]) - key(order[i - 1])) / span
    return dist


def pareto_front(trials):
    """Non-dominated subset of the deployable trials."""
    pool = [t for t in trials if t.deployable]
    return [t for t in pool
            if not any(dominates(o, t) for o in pool if o is not t)]


def trial_seed(master_seed, index):
    """Deterministic per-trial seed, independent of evaluation order."""
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1)[0])


def _evaluate(evaluator, genes, master_seed, index):
    seed = trial_seed(master_seed, index)
    try:
        f1, energy_uj, deployable = evaluator(genes, seed)
        f1, energy_uj = float(f1), float(energy_uj)
        if not (math.isfinite(f1) and math.isfinite(energy_uj)):
            raise ValueError("non-finite objective")
    except Exception:
        return Trial(genes, 0.0, FAILED_ENERGY_UJ, False, seed, index)
    return Trial(genes, f1, energy_uj, bool(deployable), seed, index)


def _rank_map(population):
    fronts = nondominated_sort(population)
    rank = {}
    for r, front in enumerate(fronts):
        dist = crowding_distance(front)
        for t in front:
            rank[id(t)] = (r, -dist[id(t)])
    return rank


def _tournament(rng, population, rank, k=2):
    picks = [population[int(i)] for i in rng.integers(0, len(population), size=k)]
    return min(picks, key=lambda t: rank[id(t)])


def _crossover(rng, a, b):
    return {g: (a[g] if rng.random() < 0.5 else b[g]) for g in a}


def _mutate(rng, genes, space, p):
    out = dict(genes)
    if rng.random() < p:
        out["bitwidth"] = int(rng.choice(space.bitwidths))
    if rng.random() < p:
        out["bs"] = int(rng.choice(space.batch_sizes))
    if rng.random() < p:
        out["variable"] = int(rng.choice(space.variables))
    if rng.random() < p:
        lr = out["lr"] * math.exp(rng.normal(0.0, 0.5))
        out["lr"] = float(min(max(lr, space.lr_bounds[0]), space.lr_bounds[1]))
    return out


def run_search(space, budget, evaluator, seed=0, population=20,
               mutation_p=0.2, tournament_k=2):
    """NSGA-II loop; exactly `budget` evaluator calls.

    `evaluator(genes, trial_seed) -> (f1, energy_uj, deployable)`. A
    raising evaluator marks the trial non-deployable and the search
    continues. Returns (archive, front); the front is extracted from the
    whole archive, not the final population.
    """
    if budget < population:
        raise ConfigError(f"budget {budget} must be >= population size {population}")
    rng = np.random.default_rng(seed)
    archive = []

    def spawn(genes):
        t = _evaluate(evaluator, genes, seed, len(archive))
        archive.append(t)
        return t

    pop = [spawn(space.sample(rng)) for _ in range(population)]
    while len(archive) < budget:
        rank = _rank_map(pop)
        offspring = []
        while len(offspring) < population and len(archive) < budget:
            pa = _tournament(rng, pop, rank, tournament_k)
            pb = _tournament(rng, pop, rank, tournament_k)
            child = _mutate(rng, _crossover(rng, pa.genes, pb.genes), space, mutation_p)
            offspring.append(spawn(child))
        merged = pop + offspring
        rank = _rank_map(merged)
        merged.sort(key=lambda t: rank[id(t)])
        pop = merged[:population]
    return archive, pareto_front(archive)
