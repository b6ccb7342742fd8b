"""Neuro-genetic training of a single-hidden-layer sigmoid perceptron.

A real-coded genetic algorithm searches the flattened weight vector of an
l-m-n network, scoring each chromosome with the fixed-weight RMS error
(``fitgen``). The best chromosome is decoded and refined by per-instance
backpropagation with separate learning rates (gain terms) and sigmoid
slopes (speed factors) for the hidden and output layers.

Gene layout, fixed for every network of a given shape::

    [hidden_weights (m x l, row-major) | hidden_biases (m)
     | output_weights (n x m, row-major) | output_biases (n)]
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DimMismatch, EmptyInput, LengthMismatch

log = logging.getLogger(__name__)


@dataclass(frozen=True, kw_only=True)
class MlpConfig:
    input_dim: int
    output_dim: int
    hidden_dim: int = 30
    gain_hidden: float = 0.4
    gain_output: float = 0.4
    speed_hidden: float = 0.15
    speed_output: float = 0.15
    max_epochs: int = 2000
    tolerable_rms: float = 1e-5

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise ConfigError("layer sizes must all be >= 1")
        # zero gains are accepted: they freeze a layer
        if self.gain_hidden < 0 or self.gain_output < 0:
            raise ConfigError("gain terms must be non-negative")
        if self.speed_hidden <= 0 or self.speed_output <= 0:
            raise ConfigError("speed factors must be positive")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if not self.tolerable_rms > 0:
            raise ConfigError("tolerable_rms must be positive")

    @property
    def gene_count(self) -> int:
        l, m, n = self.input_dim, self.hidden_dim, self.output_dim
        return l * m + m + m * n + n

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MlpNetwork:
    config: MlpConfig
    hidden_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    output_biases: np.ndarray

    def __post_init__(self):
        c = self.config
        self.hidden_weights = np.asarray(self.hidden_weights, dtype=np.float64)
        self.hidden_biases = np.asarray(self.hidden_biases, dtype=np.float64)
        self.output_weights = np.asarray(self.output_weights, dtype=np.float64)
        self.output_biases = np.asarray(self.output_biases, dtype=np.float64)
        shapes = {
            "hidden_weights": (c.hidden_dim, c.input_dim),
            "hidden_biases": (c.hidden_dim,),
            "output_weights": (c.output_dim, c.hidden_dim),
            "output_biases": (c.output_dim,),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DimMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} contains non-finite values")

    @classmethod
    def zeros(cls, config: MlpConfig) -> "MlpNetwork":
        return decode_weights(Chromosome(np.zeros(config.gene_count)), config)

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(self.config, self.hidden_weights.copy(), self.hidden_biases.copy(),
                          self.output_weights.copy(), self.output_biases.copy())


@dataclass
class Chromosome:
    genes: np.ndarray
    fitness: float | None = None

    def __post_init__(self):
        self.genes = np.asarray(self.genes, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.genes)):
            raise ConfigError("chromosome genes must be finite")

    def __len__(self):
        return self.genes.size


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    generations: int = 15
    crossover_points: int = 5
    mutation_rate: float = 0.05
    mutation_sigma: float = 0.1
    tournament_size: int = 3
    elite_count: int = 1
    init_range: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        if not 1 <= self.elite_count < self.population_size:
            raise ConfigError("elite_count must be in [1, population_size)")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ConfigError("tournament_size must be in [1, population_size]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError("mutation_rate must be a probability")
        if not self.mutation_sigma > 0 or not self.init_range > 0:
            raise ConfigError("mutation_sigma and init_range must be positive")
        if self.crossover_points < 1:
            raise ConfigError("crossover_points must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        t = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if x.shape[0] < 1 or x.shape[0] != t.shape[0]:
            raise DimMismatch(f"{x.shape[0]} inputs vs {t.shape[0]} targets")
        if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=1) == 1)):
            raise ConfigError("targets must be one-hot rows")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", t)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.targets, axis=1)


# ---------------------------------------------------------------------------
# weight <-> chromosome mapping
# ---------------------------------------------------------------------------

def encode_weights(network: MlpNetwork) -> Chromosome:
    return Chromosome(np.concatenate([
        network.hidden_weights.ravel(), network.hidden_biases,
        network.output_weights.ravel(), network.output_biases,
    ]))


def _split(genes: np.ndarray, config: MlpConfig):
    """Views of the four gene blocks; works on (L,) and (P, L) arrays."""
    l, m, n = config.input_dim, config.hidden_dim, config.output_dim
    lead = genes.shape[:-1]
    a = l * m
    b = a + m
    c = b + m * n
    return (genes[..., :a].reshape(*lead, m, l), genes[..., a:b],
            genes[..., b:c].reshape(*lead, n, m), genes[..., c:])


def decode_weights(chromosome: Chromosome, config: MlpConfig) -> MlpNetwork:
    genes = chromosome.genes if isinstance(chromosome, Chromosome) else np.asarray(chromosome)
    if genes.size != config.gene_count:
        raise LengthMismatch(f"chromosome has {genes.size} genes, config needs {config.gene_count}")
    w, b, v, c = _split(genes.astype(np.float64, copy=True), config)
    return MlpNetwork(config, w, b, v, c)


# ---------------------------------------------------------------------------
# forward pass and FITGEN
# ---------------------------------------------------------------------------

def forward(network: MlpNetwork, x) -> np.ndarray:
    """Outputs for one input vector, or for each row of an (N, l) batch."""
    x = np.asarray(x, dtype=np.float64)
    c = network.config
    if x.shape[-1] != c.input_dim:
        raise DimMismatch(f"input of dim {x.shape[-1]}, network expects {c.input_dim}")
    h = expit(c.speed_hidden * (x @ network.hidden_weights.T + network.hidden_biases))
    return expit(c.speed_output * (h @ network.output_weights.T + network.output_biases))


def instance_error(target, output) -> float:
    t = np.asarray(target, dtype=np.float64)
    o = np.asarray(output, dtype=np.float64)
    if t.shape != o.shape:
        raise DimMismatch(f"target shape {t.shape} vs output shape {o.shape}")
    d = t - o
    return float(np.dot(d.ravel(), d.ravel()))


def rms_error(instance_errors, n: int | None = None) -> float:
    e = np.asarray(instance_errors, dtype=np.float64).ravel()
    if n is None:
        n = e.size
    if n < 1 or e.size != n:
        raise EmptyInput(f"need N >= 1 matching errors, got N={n} with {e.size} errors")
    if np.any(e < 0):
        raise ConfigError("instance errors must be non-negative")
    return float(np.sqrt(e.sum() / n))


def _check_dataset(dataset: LabeledDataset, config: MlpConfig) -> None:
    if dataset.inputs.shape[1] != config.input_dim or dataset.targets.shape[1] != config.output_dim:
        raise DimMismatch(
            f"dataset is {dataset.inputs.shape[1]}->{dataset.targets.shape[1]}, "
            f"network is {config.input_dim}->{config.output_dim}")


def population_fitness(genes: np.ndarray, dataset: LabeledDataset, config: MlpConfig) -> np.ndarray:
    """FITGEN for every row of a (P, L) gene matrix at once."""
    genes = np.atleast_2d(genes)
    if genes.shape[1] != config.gene_count:
        raise LengthMismatch(f"chromosomes have {genes.shape[1]} genes, config needs {config.gene_count}")
    _check_dataset(dataset, config)
    w, b, v, c = _split(genes, config)
    x, t = dataset.inputs, dataset.targets
    h = expit(config.speed_hidden * (np.einsum("pml,nl->pnm", w, x) + b[:, None, :]))
    o = expit(config.speed_output * (np.einsum("pkm,pnm->pnk", v, h) + c[:, None, :]))
    per_instance = ((t[None] - o) ** 2).sum(axis=2)
    return np.sqrt(per_instance.mean(axis=1))


def fitgen(chromosome: Chromosome, dataset: LabeledDataset, config: MlpConfig) -> float:
    """RMS over instances of the sum-squared output error, weights held fixed.

    Lower is better. No learning happens inside the fitness evaluation.
    """
    if len(chromosome) != config.gene_count:
        raise LengthMismatch(f"chromosome has {len(chromosome)} genes, config needs {config.gene_count}")
    return float(population_fitness(chromosome.genes[None], dataset, config)[0])


# ---------------------------------------------------------------------------
# genetic algorithm
# ---------------------------------------------------------------------------

def _crossover_masks(rng: np.random.Generator, pairs: int, length: int, points: int) -> np.ndarray:
    masks = np.empty((pairs, length), dtype=bool)
    positions = np.arange(1, length)
    for i in range(pairs):
        marks = np.zeros(length, dtype=np.int64)
        marks[rng.choice(positions, size=points, replace=False)] = 1
        masks[i] = np.cumsum(marks) % 2 == 1
    return masks


def ga_evolve(dataset: LabeledDataset, mlp_config: MlpConfig, ga_config: GaConfig,
              on_generation=None) -> tuple[Chromosome, list[float]]:
    """Evolve network weights; return the best-ever chromosome and history.

    ``history[g]`` is the best fitness seen up to generation ``g`` (entry 0
    is the initial population). Random draws happen in a fixed order: the
    initial population, then per generation all tournaments, all crossover
    cut points, and finally the mutation mask and perturbations.
    """
    L = mlp_config.gene_count
    P = ga_config.population_size
    if ga_config.crossover_points >= L:
        raise ConfigError(f"{ga_config.crossover_points} crossover points for {L} genes")
    _check_dataset(dataset, mlp_config)

    rng = np.random.default_rng(ga_config.rng_seed)
    pop = rng.uniform(-ga_config.init_range, ga_config.init_range, size=(P, L))
    fit = population_fitness(pop, dataset, mlp_config)
    i = int(np.argmin(fit))
    best_genes, best_fit = pop[i].copy(), float(fit[i])
    history = [best_fit]

    n_child = P - ga_config.elite_count
    n_pairs = (n_child + 1) // 2
    for gen in range(ga_config.generations):
        if best_fit <= mlp_config.tolerable_rms:
            break
        elites = pop[np.argsort(fit, kind="stable")[:ga_config.elite_count]]

        entrants = rng.integers(0, P, size=(2 * n_pairs, ga_config.tournament_size))
        winners = entrants[np.arange(2 * n_pairs), np.argmin(fit[entrants], axis=1)]
        mothers, fathers = pop[winners[0::2]], pop[winners[1::2]]

        swap = _crossover_masks(rng, n_pairs, L, ga_config.crossover_points)
        children = np.concatenate([np.where(swap, fathers, mothers),
                                   np.where(swap, mothers, fathers)])[:n_child]

        mutate = rng.random(children.shape) < ga_config.mutation_rate
        children = children + mutate * rng.normal(0.0, ga_config.mutation_sigma, children.shape)

        pop = np.concatenate([elites, children])
        fit = population_fitness(pop, dataset, mlp_config)
        i = int(np.argmin(fit))
        if fit[i] < best_fit:
            best_genes, best_fit = pop[i].copy(), float(fit[i])
        history.append(best_fit)
        if on_generation is not None:
            on_generation(gen + 1, best_fit)

    return Chromosome(best_genes, best_fit), history


# ---------------------------------------------------------------------------
# backpropagation
# ---------------------------------------------------------------------------

def instance_gradients(network: MlpNetwork, x, t):
    """Gradients of ``sum((t - o)**2)`` w.r.t. (W, b, V, c) for one instance."""
    cfg = network.config
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    h = expit(cfg.speed_hidden * (network.hidden_weights @ x + network.hidden_biases))
    o = expit(cfg.speed_output * (network.output_weights @ h + network.output_biases))
    d_out = -2.0 * (t - o) * cfg.speed_output * o * (1.0 - o)
    d_hid = (network.output_weights.T @ d_out) * cfg.speed_hidden * h * (1.0 - h)
    return np.outer(d_hid, x), d_hid, np.outer(d_out, h), d_out


def dataset_rms(network: MlpNetwork, dataset: LabeledDataset) -> float:
    out = forward(network, dataset.inputs)
    return rms_error(((dataset.targets - out) ** 2).sum(axis=1))


def backprop_epoch(network: MlpNetwork, dataset: LabeledDataset) -> tuple[MlpNetwork, float]:
    """One pass of per-instance gradient descent in dataset order.

    Returns a new network and its RMS error on the whole dataset after the
    pass. The input network is left untouched.
    """
    cfg = network.config
    _check_dataset(dataset, cfg)
    w = network.hidden_weights.copy()
    b = network.hidden_biases.copy()
    v = network.output_weights.copy()
    c = network.output_biases.copy()
    eta_h, eta_o = cfg.gain_hidden, cfg.gain_output
    k_h, k_o = cfg.speed_hidden, cfg.speed_output
    for x, t in zip(dataset.inputs, dataset.targets):
        h = expit(k_h * (w @ x + b))
        o = expit(k_o * (v @ h + c))
        d_out = -2.0 * (t - o) * k_o * o * (1.0 - o)
        d_hid = (v.T @ d_out) * k_h * h * (1.0 - h)
        v -= eta_o * np.outer(d_out, h)
        c -= eta_o * d_out
        w -= eta_h * np.outer(d_hid, x)
        b -= eta_h * d_hid
    updated = MlpNetwork(cfg, w, b, v, c)
    return updated, dataset_rms(updated, dataset)


# ---------------------------------------------------------------------------
# hybrid training
# ---------------------------------------------------------------------------

@dataclass
class TrainingReport:
    ga_history: list[float]
    bpn_rms: list[float]
    stop_reason: str
    ga_best_fitness: float
    final_rms: float
    warnings: list[str] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "iteration", "rms"])
            for i, v in enumerate(self.ga_history):
                w.writerow(["ga", i, repr(v)])
            for i, v in enumerate(self.bpn_rms, start=1):
                w.writerow(["bpn", i, repr(v)])


def train_hybrid(dataset: LabeledDataset, mlp_config: MlpConfig,
                 ga_config: GaConfig) -> tuple[MlpNetwork, TrainingReport]:
    best, history = ga_evolve(dataset, mlp_config, ga_config)
    ga_net = decode_weights(best, mlp_config)
    net = ga_net
    curve: list[float] = []
    warnings: list[str] = []

    if best.fitness <= mlp_config.tolerable_rms:
        stop = "ga_converged"
    else:
        stop = "max_epochs"
        for _ in range(mlp_config.max_epochs):
            net, rms = backprop_epoch(net, dataset)
            curve.append(rms)
            if rms <= mlp_config.tolerable_rms:
                stop = "tolerance"
                break

    final = curve[-1] if curve else best.fitness
    if final > best.fitness:
        msg = (f"backpropagation ended at RMS {final:.6g}, above the GA result "
               f"{best.fitness:.6g}; keeping GA weights")
        log.warning(msg)
        warnings.append(msg)
        net, final = ga_net, best.fitness

    return net, TrainingReport(history, curve, stop, best.fitness, final, warnings)
