"""Elitist genetic algorithm: selection, crossover and mutation for one generation."""
from __future__ import annotations

from dataclasses import dataclass

from camforge.optimize.space import Genome, ParamSpace, crossover_uniform, mutate
from camforge.rng import derive_rng


@dataclass(frozen=True)
class GAConfig:
    pop_size: int = 5
    n_elites: int = 2
    n_parents: int = 3
    n_generations: int = 10
    mutate_factor_range: tuple[float, float] = (0.8, 1.2)
    master_seed: int = 0
    frames_per_eval: int = 4
    init_preset: str = "random"

    def __post_init__(self):
        if not 1 <= self.n_parents <= self.pop_size or not 0 <= self.n_elites <= self.pop_size:
            raise ValueError("need 1 <= n_parents <= pop_size and 0 <= n_elites <= pop_size")
        # pure elitism (no offspring) is the only case allowed without n_elites < n_parents
        if self.n_elites >= self.n_parents and self.n_elites != self.pop_size:
            raise ValueError("need n_elites < n_parents unless n_elites == pop_size")
        lo, hi = self.mutate_factor_range
        if not lo <= 1.0 <= hi:
            raise ValueError("mutation factor range must contain 1")
        if self.n_generations < 1 or self.frames_per_eval < 1:
            raise ValueError("need at least one generation and one frame per evaluation")


def ranking(fitness) -> list[int]:
    """Slots by fitness, best first; ties keep the lower slot first."""
    return sorted(range(len(fitness)), key=lambda i: (-fitness[i], i))


def step_generation(population: list[Genome], fitness, space: ParamSpace, config: GAConfig,
                    generation: int) -> tuple[list[Genome], list[int]]:
    """Next population and, per new slot, the old slot it copies (-1 for offspring).

    Elites occupy the first slots, kept in their previous slot order; the
    rest are mutated uniform crossovers of the top ``n_parents``.
    """
    order = ranking(fitness)
    parents = [population[i] for i in order[: config.n_parents]]
    source = sorted(order[: config.n_elites])
    new = [population[i] for i in source]
    for slot in range(config.n_elites, config.pop_size):
        rng = derive_rng(config.master_seed, generation, slot, "offspring")
        child = crossover_uniform(parents, rng) if len(parents) > 1 else parents[0]
        new.append(mutate(child, space, rng, config.mutate_factor_range))
        source.append(-1)
    return new, source
