"""Monte Carlo harness for estimator calibration.

Generates datasets under the correlated or hierarchical working model
with known parameters, fits each replication with the requested
estimator variants, and aggregates bias, CI coverage and component
recovery. This is the oracle that validates the method-of-moments
algebra and the small-sample adjustments: if the moment constants were
wrong, component recovery at large m would be biased; if an adjustment
were wrong, mean V* would drift from the empirical variance of b.

Replication r draws from ``default_rng([seed, r])``, so streams are
independent across replications and results do not depend on execution
order.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .data import CATEGORICAL, NUMERIC, Dataset, EffectSizeRow, SchemaHints
from .errors import InvalidCovariance
from .formula import parse_formula
from .inference import ModelSpec, fit_model
from .weights import CORR, HIER, VarianceComponents

SMALL = "small"
LARGE = "large"


@dataclass(frozen=True)
class SimConfig:
    """Generator and estimator settings for one experiment.

    ``k`` is a fixed per-study count or a length-m list. ``nu`` is a
    fixed sampling variance or a (lo, hi) uniform range, drawn per study
    for the correlated model and per effect size for the hierarchical
    model. ``covariate`` adds one study-level regressor: ``balanced``
    (alternating 0/1), ``skewed`` (proportion ``skew_prop`` of ones) or
    ``normal``. ``use_true_components`` fits with weights built from the
    true variance components instead of estimating them, which makes the
    weights exactly inverse to the working covariance.
    """

    model: str
    m: int
    k: int | tuple[int, ...]
    beta: tuple[float, ...]
    tau_sq: float
    seed: int
    omega_sq: float = 0.0
    rho: float = 0.0
    nu: float | tuple[float, float] = 1.0
    covariate: str | None = None
    skew_prop: float = 0.1
    replications: int = 1
    estimators: tuple[str, ...] = (SMALL, LARGE)
    use_true_components: bool = False

    def __post_init__(self):
        if self.model not in (CORR, HIER):
            raise ValueError(f"model must be CORR or HIER, got {self.model!r}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.tau_sq < 0 or self.omega_sq < 0:
            raise ValueError("variance components must be nonnegative")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidCovariance(f"rho must be in [0, 1], got {self.rho}")
        nus = self.nu if isinstance(self.nu, tuple) else (self.nu,)
        if any(v <= 0 for v in nus):
            raise InvalidCovariance("sampling variances must be positive")
        if self.covariate not in (None, "balanced", "skewed", "normal"):
            raise ValueError(f"unknown covariate kind {self.covariate!r}")
        expected_p = 1 if self.covariate is None else 2
        if len(self.beta) != expected_p:
            raise ValueError(
                f"beta must have {expected_p} entries for covariate="
                f"{self.covariate!r}"
            )
        for est in self.estimators:
            if est not in (SMALL, LARGE):
                raise ValueError(f"unknown estimator variant {est!r}")

    def k_list(self) -> list[int]:
        if isinstance(self.k, tuple):
            if len(self.k) != self.m:
                raise ValueError("per-study k list must have length m")
            return list(self.k)
        return [self.k] * self.m

    def formula_text(self) -> str:
        return "es ~ x" if self.covariate is not None else "es ~ 1"


@dataclass(frozen=True)
class VariantStats:
    """Per-coefficient aggregates for one estimator variant."""

    coverage: np.ndarray
    mean_estimate: np.ndarray
    emp_var: np.ndarray
    mean_vstar: np.ndarray
    mean_df: np.ndarray


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    coef_names: tuple[str, ...]
    variants: dict[str, VariantStats] = field(default_factory=dict)
    mean_tau_sq: float = 0.0
    mean_omega_sq: float = 0.0
    runtime_sec: float = 0.0

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(
            "variant,coefficient,coverage,mean_estimate,emp_var_b,"
            "mean_vstar,mean_df,mean_tau_sq,mean_omega_sq,replications,"
            "runtime_sec\n"
        )
        for variant, stats in self.variants.items():
            for i, name in enumerate(self.coef_names):
                out.write(
                    f"{variant},{name},{stats.coverage[i]:.6g},"
                    f"{stats.mean_estimate[i]:.10g},{stats.emp_var[i]:.10g},"
                    f"{stats.mean_vstar[i]:.10g},{stats.mean_df[i]:.6g},"
                    f"{self.mean_tau_sq:.10g},{self.mean_omega_sq:.10g},"
                    f"{self.config.replications},{self.runtime_sec:.3f}\n"
                )
        return out.getvalue()


def _covariate_values(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    m = config.m
    if config.covariate is None:
        return np.zeros(m)
    if config.covariate == "balanced":
        return np.array([float(j % 2) for j in range(m)])
    if config.covariate == "skewed":
        ones = max(1, round(config.skew_prop * m))
        return np.array([1.0 if j < ones else 0.0 for j in range(m)])
    return rng.standard_normal(m)


def generate_dataset(config: SimConfig, replication: int) -> Dataset:
    """One dataset draw, deterministic given (seed, replication)."""
    rng = np.random.default_rng([config.seed, replication])
    ks = config.k_list()
    x = _covariate_values(config, rng)

    rows = []
    for j, k in enumerate(ks):
        mean = config.beta[0] + (config.beta[1] * x[j] if len(config.beta) > 1 else 0.0)
        u_j = rng.normal(0.0, np.sqrt(config.tau_sq)) if config.tau_sq > 0 else 0.0
        if config.model == CORR:
            nu_j = (
                rng.uniform(*config.nu) if isinstance(config.nu, tuple) else config.nu
            )
            # equicorrelated errors: a_j carries the common part
            a_j = rng.standard_normal()
            z = rng.standard_normal(k)
            eps = np.sqrt(config.rho * nu_j) * a_j + np.sqrt(
                (1.0 - config.rho) * nu_j
            ) * z
            nus = np.full(k, nu_j)
        else:
            nus = (
                rng.uniform(config.nu[0], config.nu[1], size=k)
                if isinstance(config.nu, tuple)
                else np.full(k, float(config.nu))
            )
            w_ij = (
                rng.normal(0.0, np.sqrt(config.omega_sq), size=k)
                if config.omega_sq > 0
                else np.zeros(k)
            )
            eps = w_ij + rng.normal(0.0, np.sqrt(nus))
        t = mean + u_j + eps
        for i in range(k):
            covs = {"x": float(x[j])} if config.covariate is not None else {}
            rows.append(
                EffectSizeRow(
                    study_id=str(j + 1),
                    effect_size=float(t[i]),
                    var_eff_size=float(nus[i]),
                    covariates=covs,
                )
            )

    schema = {"es": NUMERIC, "v": NUMERIC, "study": CATEGORICAL}
    columns = ["study", "es", "v"]
    if config.covariate is not None:
        schema["x"] = NUMERIC
        columns.append("x")
    return Dataset(
        rows=tuple(rows),
        column_schema=schema,
        columns=tuple(columns),
        hints=SchemaHints(study_col="study", effect_col="es", var_col="v"),
    )


def run_experiment(config: SimConfig) -> SimReport:
    """Fit every replication with each estimator variant and aggregate.

    A failed replication aborts the experiment with its index attached;
    silently skipping failures would bias coverage.
    """
    start = time.perf_counter()
    formula = parse_formula(config.formula_text())
    beta = np.asarray(config.beta)
    p = len(beta)

    true_components = None
    if config.use_true_components:
        if config.model == CORR:
            true_components = VarianceComponents(
                tau_sq=config.tau_sq, rho=config.rho
            )
        else:
            true_components = VarianceComponents(
                tau_sq=config.tau_sq, omega_sq=config.omega_sq
            )

    covered = {v: np.zeros(p) for v in config.estimators}
    estimates = {v: np.zeros((config.replications, p)) for v in config.estimators}
    vstar_sum = {v: np.zeros(p) for v in config.estimators}
    df_sum = {v: np.zeros(p) for v in config.estimators}
    tau_sum = 0.0
    omega_sum = 0.0
    coef_names: tuple[str, ...] = ()

    for r in range(config.replications):
        try:
            dataset = generate_dataset(config, r)
            shared = true_components
            for variant in config.estimators:
                spec = ModelSpec(
                    formula=formula,
                    model=config.model,
                    rho=config.rho,
                    small=(variant == SMALL),
                )
                result = fit_model(dataset, spec, components=shared)
                # reuse the estimated components across variants: they do
                # not depend on the adjustment, and refitting the moment
                # step would only repeat work
                shared = result.components
                coef_names = result.coef_names
                for i, rep in enumerate(result.coefficients):
                    covered[variant][i] += float(
                        rep.ci_lower <= beta[i] <= rep.ci_upper
                    )
                    estimates[variant][r, i] = rep.estimate
                    vstar_sum[variant][i] += result.v_star[i, i]
                    df_sum[variant][i] += rep.df
            if shared is not None:
                tau_sum += shared.tau_sq
                omega_sum += shared.omega_sq or 0.0
        except Exception as err:
            raise RuntimeError(f"replication {r} failed: {err}") from err

    n_rep = config.replications
    variants = {}
    for v in config.estimators:
        variants[v] = VariantStats(
            coverage=covered[v] / n_rep,
            mean_estimate=estimates[v].mean(axis=0),
            emp_var=estimates[v].var(axis=0, ddof=1) if n_rep > 1 else np.zeros(p),
            mean_vstar=vstar_sum[v] / n_rep,
            mean_df=df_sum[v] / n_rep,
        )
    return SimReport(
        config=config,
        coef_names=coef_names,
        variants=variants,
        mean_tau_sq=tau_sum / n_rep,
        mean_omega_sq=omega_sum / n_rep,
        runtime_sec=time.perf_counter() - start,
    )


_BOOL = {"true": True, "false": False, "1": True, "0": False}


def parse_sim_config(text: str) -> SimConfig:
    """Parse a flat ``key = value`` config file (# starts a comment)."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()

    def pop(key, default=None):
        return values.pop(key, default)

    try:
        model = pop("model", "CORR").upper()
        m = int(pop("m"))
        k_raw = pop("k", "1")
        k = (
            tuple(int(s) for s in k_raw.split(","))
            if "," in k_raw
            else int(k_raw)
        )
        beta = tuple(float(s) for s in pop("beta", "0").split(","))
        tau_sq = float(pop("tau_sq", "0"))
        seed_raw = pop("seed")
        if seed_raw is None:
            raise ValueError("seed is mandatory")
        nu_raw = pop("nu", "1")
        nu = (
            tuple(float(s) for s in nu_raw.split(","))
            if "," in nu_raw
            else float(nu_raw)
        )
        if isinstance(nu, tuple) and len(nu) != 2:
            raise ValueError("nu range must be 'lo, hi'")
        covariate = pop("covariate") or None
        config = SimConfig(
            model=model,
            m=m,
            k=k,
            beta=beta,
            tau_sq=tau_sq,
            seed=int(seed_raw),
            omega_sq=float(pop("omega_sq", "0")),
            rho=float(pop("rho", "0")),
            nu=nu,
            covariate=covariate,
            skew_prop=float(pop("skew_prop", "0.1")),
            replications=int(pop("replications", "1")),
            estimators=tuple(
                s.strip() for s in pop("estimators", "small, large").split(",")
            ),
            use_true_components=_BOOL[pop("use_true_components", "false").lower()],
        )
    except (TypeError, KeyError) as err:
        raise ValueError(f"invalid simulation config: {err}") from err
    if values:
        raise ValueError(f"unknown config keys: {sorted(values)}")
    return config
