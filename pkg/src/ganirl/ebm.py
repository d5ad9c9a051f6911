"""Adversarial energy-based models on a finite grid of points.

The energy E(x) is a :class:`~ganirl.cost.CostModel` of shape (n_points, 1),
so a point is a one-step "trajectory" and every sample-set, discriminator and
partition routine from the trajectory code applies unchanged. The model is
p_theta(x) = exp(-E(x)) / Z and the discriminator is
logistic(-E(x) - b - log q(x)).

Generators have explicit densities: either a full softmax over the points or
a factorized product q(r, c) = a_r * b_c of one softmax per grid axis. The
factorized kind cannot represent two diagonal modes without also covering the
off-diagonal cross terms, which is what the mode experiment measures.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from .cost import CostModel
from .gan import DiscriminatorParams, discriminator_grad, discriminator_loss, generator_loss
from .gcl import irl_cost_grad, irl_cost_loss
from .mdp import ConfigError
from .partition import FixedPointResult, fixed_point_partition_estimate, importance_partition_estimate
from .rng import stream
from .samples import SampleSet, point_samples
from .training import SCHEMA_VERSION, TrainReport, kl_divergence

EBM_METRIC_COLUMNS = ("iteration", "disc_loss", "gen_loss", "log_z", "exact_kl", "grad_norm", "gen_kl", "gap_mass")
GAP_THRESHOLD = 1e-3
DATA_NAMES = ("bimodal", "ring", "uniform", "random")


@dataclass(frozen=True)
class DiscreteDomain:
    width: int = 8
    height: int = 8

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.width * self.height < 2:
            raise ConfigError("a domain needs at least two points")

    @property
    def n_points(self) -> int:
        return self.width * self.height

    def coords(self, i) -> tuple:
        return np.divmod(i, self.width)


# -- energies --------------------------------------------------------------


def tabular_energy(params) -> CostModel:
    params = np.asarray(params, dtype=float).ravel()
    return CostModel(params, (params.size, 1))


def linear_energy(params, features) -> CostModel:
    """``features`` is [n_points, n_features]."""
    feats = np.asarray(features, dtype=float)
    return CostModel(np.asarray(params, dtype=float), (feats.shape[0], 1), feats)


def zero_energy(domain: DiscreteDomain) -> CostModel:
    return tabular_energy(np.zeros(domain.n_points))


def energy_values(energy: CostModel) -> np.ndarray:
    return energy.flat()


def model_log_density(energy: CostModel) -> np.ndarray:
    return log_softmax(-energy.flat())


def exact_log_z_ebm(energy: CostModel) -> float:
    return float(logsumexp(-energy.flat()))


def exact_z_ebm(energy: CostModel) -> float:
    return float(np.exp(exact_log_z_ebm(energy)))


# -- data distributions ----------------------------------------------------


def _normalise(weights: np.ndarray) -> np.ndarray:
    return weights / weights.sum()


def data_distribution(domain: DiscreteDomain, name: str, seed: int = 0, sigma: float = 1.0) -> np.ndarray:
    """Probability table over the domain's points.

    ``bimodal``  two Gaussian bumps centred one cell in from opposite corners
    ``ring``     Gaussian profile around a circle through the grid centre
    ``uniform``  constant
    ``random``   Dirichlet(1) draw from ``seed``
    """
    rows, cols = domain.coords(np.arange(domain.n_points))
    if name == "bimodal":
        near = np.array([1.0, 1.0])
        far = np.array([domain.height - 2.0, domain.width - 2.0])
        bumps = [np.exp(-((rows - m[0]) ** 2 + (cols - m[1]) ** 2) / (2 * sigma**2)) for m in (near, far)]
        return _normalise(bumps[0] + bumps[1])
    if name == "ring":
        cr, cc = (domain.height - 1) / 2, (domain.width - 1) / 2
        radius = np.hypot(rows - cr, cols - cc)
        target = min(cr, cc) * 0.8
        return _normalise(np.exp(-((radius - target) ** 2) / (2 * (sigma / 2) ** 2)))
    if name == "uniform":
        return np.full(domain.n_points, 1.0 / domain.n_points)
    if name == "random":
        return stream(seed, "data-table").dirichlet(np.ones(domain.n_points))
    raise ConfigError(f"unknown data distribution {name!r}")


def load_distribution_table(path, domain: DiscreteDomain | None = None) -> np.ndarray:
    """One probability per line; blank lines and ``#`` comments are skipped."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                v = float(text)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: not a number: {text!r}") from None
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{path}:{lineno}: probabilities must be finite and non-negative")
            values.append(v)
    table = np.array(values)
    if domain is not None and table.size != domain.n_points:
        raise ConfigError(f"{path}: {table.size} entries, domain has {domain.n_points} points")
    if abs(table.sum() - 1.0) > 1e-9:
        raise ConfigError(f"{path}: probabilities sum to {table.sum():.12g}, not 1")
    return table


def sample_points(probs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(probs.size, size=n, p=probs / probs.sum())


def gap_mass(q: np.ndarray, data: np.ndarray, threshold: float = GAP_THRESHOLD) -> float:
    """Generator mass on points where the data density is below ``threshold``."""
    return float(q[data < threshold].sum())


# -- generators ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeneratorModel:
    """Explicit-density generator. ``logits`` is one vector (full softmax) or
    a (row logits, column logits) pair (factorized)."""

    kind: str
    logits: tuple
    domain: DiscreteDomain

    def __post_init__(self):
        logits = tuple(np.asarray(v, dtype=float).copy() for v in self.logits)
        if self.kind == "full":
            if len(logits) != 1 or logits[0].shape != (self.domain.n_points,):
                raise ValueError("full generator needs one logit per point")
        elif self.kind == "factorized":
            if len(logits) != 2 or logits[0].shape != (self.domain.height,) or logits[1].shape != (self.domain.width,):
                raise ValueError("factorized generator needs (row logits, column logits)")
        else:
            raise ConfigError(f"unknown generator kind {self.kind!r}")
        if not all(np.all(np.isfinite(v)) for v in logits):
            raise ValueError("generator logits must be finite")
        object.__setattr__(self, "logits", logits)

    def log_probs(self) -> np.ndarray:
        if self.kind == "full":
            return log_softmax(self.logits[0])
        rows, cols = (log_softmax(v) for v in self.logits)
        return (rows[:, None] + cols[None, :]).ravel()

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def with_logits(self, logits) -> "GeneratorModel":
        return GeneratorModel(self.kind, tuple(logits), self.domain)

    def flat_logits(self) -> np.ndarray:
        return np.concatenate(self.logits)

    def from_flat(self, flat) -> "GeneratorModel":
        flat = np.asarray(flat, dtype=float)
        if self.kind == "full":
            return self.with_logits((flat,))
        return self.with_logits((flat[: self.domain.height], flat[self.domain.height :]))


def uniform_generator(domain: DiscreteDomain, kind: str = "full") -> GeneratorModel:
    if kind == "full":
        return GeneratorModel(kind, (np.zeros(domain.n_points),), domain)
    return GeneratorModel(kind, (np.zeros(domain.height), np.zeros(domain.width)), domain)


def random_generator(domain: DiscreteDomain, kind: str, rng: np.random.Generator, scale: float = 1.0) -> GeneratorModel:
    if kind == "full":
        return GeneratorModel(kind, (scale * rng.standard_normal(domain.n_points),), domain)
    return GeneratorModel(
        kind, (scale * rng.standard_normal(domain.height), scale * rng.standard_normal(domain.width)), domain
    )


def boltzmann_generator(energy: CostModel, domain: DiscreteDomain) -> GeneratorModel:
    """The full-softmax generator equal to p_theta: the generator's best response."""
    return GeneratorModel("full", (-energy.flat(),), domain)


def ebm_generator_loss(energy: CostModel, gen: GeneratorModel) -> float:
    """E_q[E] + E_q[log q], summed exactly over the domain."""
    log_q = gen.log_probs()
    return float(np.dot(np.exp(log_q), energy.flat() + log_q))


def ebm_generator_grad(energy: CostModel, gen: GeneratorModel) -> np.ndarray:
    """Gradient of :func:`ebm_generator_loss` in the flat logits."""
    e = energy.flat()
    log_q = gen.log_probs()
    if gen.kind == "full":
        q = np.exp(log_q)
        f = e + log_q
        return q * (f - np.dot(q, f))
    h, w = gen.domain.height, gen.domain.width
    log_a, log_b = (log_softmax(v) for v in gen.logits)
    a, b = np.exp(log_a), np.exp(log_b)
    # dL/dq_ij = E_ij + log q_ij + 1
    g = (e + log_q + 1.0).reshape(h, w)
    g_rows = g @ b
    g_cols = a @ g
    return np.concatenate([a * (g_rows - a @ g_rows), b * (g_cols - b @ g_cols)])


def generator_nll(gen: GeneratorModel, data: np.ndarray) -> float:
    """E_data[-log q]."""
    return float(-np.dot(data, gen.log_probs()))


def generator_nll_grad(gen: GeneratorModel, data: np.ndarray) -> np.ndarray:
    if gen.kind == "full":
        return gen.probs() - data
    h, w = gen.domain.height, gen.domain.width
    table = data.reshape(h, w)
    rows, cols = (softmax(v) for v in gen.logits)
    return np.concatenate([rows - table.sum(axis=1), cols - table.sum(axis=0)])


# -- sample sets, partition and energy loss -------------------------------


def ebm_samples(
    data: np.ndarray,
    gen: GeneratorModel,
    mode: str = "exact",
    n: int | None = None,
    rng: np.random.Generator | None = None,
) -> SampleSet:
    """Demo/generator sample set on the domain.

    ``exact`` lists every point on both sides, weighted by the data density and
    by q. ``empirical`` draws ``n`` points from each side.
    """
    log_q = gen.log_probs()
    points = np.arange(data.size)
    if mode == "exact":
        return point_samples(points, points, log_q, data, np.exp(log_q), exact=True)
    if mode != "empirical":
        raise ConfigError(f"unknown expectations mode {mode!r}")
    if n is None or rng is None:
        raise ValueError("empirical sample sets need n and rng")
    return point_samples(sample_points(data, n, rng), sample_points(np.exp(log_q), n, rng), log_q)


def ebm_z_estimate(
    energy: CostModel,
    gen: GeneratorModel,
    data: np.ndarray,
    mode: str = "exact",
    n: int | None = None,
    rng: np.random.Generator | None = None,
    density: str = "model",
) -> float:
    """Importance-sampled Z over mu = data/2 + q/2.

    ``density='model'`` uses p_theta as the demo-density estimate and resolves
    the resulting self-referential Z by fixed-point iteration. ``'oracle'``
    uses the true data density, which makes the estimator unbiased.
    """
    samples = ebm_samples(data, gen, mode, n, rng)
    if density == "model":
        return fixed_point_partition_estimate(energy, samples).z
    if density != "oracle":
        raise ConfigError(f"unknown density estimate {density!r}")
    counts, log_q, weights = samples.mixture()
    idx = counts.argmax(axis=1)
    with np.errstate(divide="ignore"):
        log_data = np.log(data[idx])
    return importance_partition_estimate(counts @ energy.flat(), log_data, log_q, weights)


def energy_loss(energy: CostModel, samples: SampleSet, log_z: float | None = None) -> float:
    """Negative log-likelihood E_data[E] + log(Z estimate).

    Z is the fixed-point importance estimate unless ``log_z`` is given.
    """
    fp = None if log_z is None else FixedPointResult(float(np.exp(log_z)), 0, float(log_z), ())
    return irl_cost_loss(energy, samples, fp)


def energy_grad(energy: CostModel, samples: SampleSet, log_z: float | None = None) -> np.ndarray:
    """E_data[dE] - E_mu[w dE] / E_mu[w] with w = exp(-E)/mu~ held constant."""
    return irl_cost_grad(energy, samples, log_z)


def energy_oracle_loss(energy: CostModel, data: np.ndarray, gen: GeneratorModel) -> float:
    """Energy loss with the true data density inside the mixture (exact mode)."""
    log_q = gen.log_probs()
    with np.errstate(divide="ignore"):
        log_mu_tilde = np.logaddexp(np.log(data), log_q) - np.log(2.0)
    mu = 0.5 * data + 0.5 * np.exp(log_q)
    e = energy.flat()
    keep = mu > 0
    return float(np.dot(data, e) + logsumexp(-e[keep] - log_mu_tilde[keep], b=mu[keep]))


def energy_oracle_grad(energy: CostModel, data: np.ndarray, gen: GeneratorModel) -> np.ndarray:
    log_q = gen.log_probs()
    with np.errstate(divide="ignore"):
        log_mu_tilde = np.logaddexp(np.log(data), log_q) - np.log(2.0)
    mu = 0.5 * data + 0.5 * np.exp(log_q)
    e = energy.flat()
    keep = mu > 0
    log_terms = np.full(e.shape, -np.inf)
    log_terms[keep] = -e[keep] - log_mu_tilde[keep] + np.log(mu[keep])
    jac = energy.jacobian()
    return data @ jac - softmax(log_terms) @ jac


def ebm_nll(energy: CostModel, data: np.ndarray) -> float:
    """E_data[E] + log Z with Z summed exactly."""
    return float(np.dot(data, energy.flat()) + exact_log_z_ebm(energy))


def ebm_nll_grad(energy: CostModel, data: np.ndarray) -> np.ndarray:
    jac = energy.jacobian()
    return data @ jac - np.exp(model_log_density(energy)) @ jac


# -- training --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EbmConfig:
    width: int = 8
    height: int = 8
    data: str = "bimodal"  # built-in name, or "table" with ``data_table`` set
    data_table: np.ndarray | None = None
    data_seed: int = 0
    generator: str = "full"  # or "factorized"
    iterations: int = 2000
    step_size: float = 1.0
    gen_step_size: float = 1.0
    gen_steps: int = 1
    n_samples: int = 500
    expectations: str = "empirical"  # or "exact"
    b_mode: str = "joint"  # or "pinned"
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("iterations", "gen_steps", "n_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not (self.step_size > 0 and self.gen_step_size > 0):
            raise ConfigError("step sizes must be positive")
        if self.generator not in ("full", "factorized"):
            raise ConfigError(f"unknown generator kind {self.generator!r}")
        if self.expectations not in ("empirical", "exact"):
            raise ConfigError(f"unknown expectations mode {self.expectations!r}")
        if self.b_mode not in ("joint", "pinned"):
            raise ConfigError(f"unknown b_mode {self.b_mode!r}")
        if self.data not in DATA_NAMES + ("table",):
            raise ConfigError(f"unknown data distribution {self.data!r}; choose from {', '.join(DATA_NAMES)}")
        if self.data == "table" and self.data_table is None:
            raise ConfigError("data = table needs a data_table")

    @property
    def domain(self) -> DiscreteDomain:
        return DiscreteDomain(self.width, self.height)

    def data_probs(self) -> np.ndarray:
        if self.data == "table":
            table = np.asarray(self.data_table, dtype=float)
            if table.size != self.domain.n_points:
                raise ConfigError("data table size does not match the domain")
            return table
        return data_distribution(self.domain, self.data, self.data_seed)

    def initial_generator(self) -> GeneratorModel:
        return random_generator(self.domain, self.generator, stream(self.seed, "gen-init"), self.init_scale)


def _ebm_row(it, data, energy, gen, **metrics) -> dict:
    q = gen.probs()
    row = {
        "iteration": it,
        **metrics,
        "exact_kl": kl_divergence(np.log(data), model_log_density(energy)),
        "gen_kl": kl_divergence(np.log(data), np.log(q)),
        "gap_mass": gap_mass(q, data),
    }
    return {k: (it if k == "iteration" else float(row[k])) for k in EBM_METRIC_COLUMNS}


def _finish(report: TrainReport, energy: CostModel, gen: GeneratorModel, b, data, t0) -> TrainReport:
    report.final_params = energy.params.copy()
    report.final_b = None if b is None else float(b)
    report.final_kl = report.rows[-1]["exact_kl"] if report.rows else float("nan")
    report.converged = report.error is None
    report.extra.update(
        {
            "schema_version": SCHEMA_VERSION,
            "gen_kl": report.rows[-1]["gen_kl"] if report.rows else float("nan"),
            "gap_mass": gap_mass(gen.probs(), data),
            "generator_probs": gen.probs(),
        }
    )
    report.wall_clock = time.perf_counter() - t0
    return report


def _check_finite(report: TrainReport, row: dict, params: np.ndarray, it: int) -> bool:
    if all(np.isfinite(v) for v in row.values()) and np.all(np.isfinite(params)):
        return True
    report.error = f"non-finite loss or parameters at iteration {it}"
    return False


def train_ebm_gan(config: EbmConfig) -> TrainReport:
    """Alternate discriminator steps on (theta, b) with generator updates.

    The full-softmax generator takes the exact best response softmax(-E). The
    factorized generator cannot represent that, so it takes ``gen_steps``
    gradient steps on E_q[E] + E_q[log q] instead.
    """
    t0 = time.perf_counter()
    domain, data = config.domain, config.data_probs()
    energy = zero_energy(domain)
    gen = config.initial_generator()
    b = None
    report = TrainReport()
    for it in range(config.iterations):
        rng = stream(config.seed, "batch", it)
        try:
            samples = ebm_samples(data, gen, config.expectations, config.n_samples, rng)
            if b is None or config.b_mode == "pinned":
                b = fixed_point_partition_estimate(energy, samples).log_z
            d = DiscriminatorParams(energy, b)
            disc, gl = discriminator_loss(d, samples), generator_loss(d, samples)
            g_theta, g_b = discriminator_grad(d, samples)
            energy = energy.with_params(energy.params - config.step_size * g_theta)
            if config.b_mode == "joint":
                b = b - config.step_size * g_b
            norm = float(np.sqrt(g_theta @ g_theta + (g_b**2 if config.b_mode == "joint" else 0.0)))
            if config.generator == "full":
                gen = boltzmann_generator(energy, domain)
            else:
                for _ in range(config.gen_steps):
                    gen = gen.from_flat(gen.flat_logits() - config.gen_step_size * ebm_generator_grad(energy, gen))
        except (ValueError, FloatingPointError) as exc:
            report.error = f"iteration {it}: {exc}"
            break
        row = _ebm_row(it, data, energy, gen, disc_loss=disc, gen_loss=gl, log_z=d.b, grad_norm=norm)
        report.rows.append(row)
        report.theta_trace.append(energy.params.copy())
        if not _check_finite(report, row, energy.params, it):
            break
    return _finish(report, energy, gen, b, data, t0)


def train_ebm_ml(config: EbmConfig, model: str = "energy") -> TrainReport:
    """Gradient descent on an exact negative log-likelihood.

    ``model='energy'`` fits a tabular energy with exact Z. ``model='generator'``
    fits the configured generator directly to the data (E_data[-log q]); its
    rows report the generator's KL in both KL columns and leave the
    discriminator columns at zero.
    """
    t0 = time.perf_counter()
    domain, data = config.domain, config.data_probs()
    energy = zero_energy(domain)
    gen = config.initial_generator()
    report = TrainReport()
    if model not in ("energy", "generator"):
        raise ConfigError(f"unknown ML model {model!r}")
    for it in range(config.iterations):
        if model == "energy":
            loss = ebm_nll(energy, data)
            grad = ebm_nll_grad(energy, data)
            energy = energy.with_params(energy.params - config.step_size * grad)
            gen = boltzmann_generator(energy, domain)
            log_z = exact_log_z_ebm(energy)
            row = _ebm_row(it, data, energy, gen, disc_loss=loss, gen_loss=ebm_generator_loss(energy, gen),
                           log_z=log_z, grad_norm=np.linalg.norm(grad))
            report.theta_trace.append(energy.params.copy())
        else:
            loss = generator_nll(gen, data)
            grad = generator_nll_grad(gen, data)
            gen = gen.from_flat(gen.flat_logits() - config.gen_step_size * grad)
            as_energy = tabular_energy(-gen.log_probs())
            row = _ebm_row(it, data, as_energy, gen, disc_loss=0.0, gen_loss=loss, log_z=0.0,
                           grad_norm=np.linalg.norm(grad))
            report.theta_trace.append(gen.flat_logits())
        report.rows.append(row)
        if not _check_finite(report, row, report.theta_trace[-1], it):
            break
    return _finish(report, energy if model == "energy" else tabular_energy(-gen.log_probs()), gen, None, data, t0)


@dataclass
class ModeSeekingResult:
    ml_gap_mass: float
    adversarial_gap_mass: float
    ml_gen_kl: float
    adversarial_gen_kl: float
    adversarial_energy_kl: float
    reports: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "ml_gap_mass": self.ml_gap_mass,
            "adversarial_gap_mass": self.adversarial_gap_mass,
            "ml_gen_kl": self.ml_gen_kl,
            "adversarial_gen_kl": self.adversarial_gen_kl,
            "adversarial_energy_kl": self.adversarial_energy_kl,
            "mode_seeking": self.adversarial_gap_mass < self.ml_gap_mass,
        }


def mode_seeking_experiment(config: EbmConfig) -> ModeSeekingResult:
    """Fit the same factorized generator by maximum likelihood and adversarially."""
    if config.generator != "factorized":
        config = EbmConfig(**{**config.__dict__, "generator": "factorized"})
    ml = train_ebm_ml(config, model="generator")
    adv = train_ebm_gan(config)
    return ModeSeekingResult(
        ml_gap_mass=ml.extra["gap_mass"],
        adversarial_gap_mass=adv.extra["gap_mass"],
        ml_gen_kl=ml.extra["gen_kl"],
        adversarial_gen_kl=adv.extra["gen_kl"],
        adversarial_energy_kl=adv.final_kl,
        reports={"ml": ml, "adversarial": adv},
    )
