"""Experiment pipeline: config, synthetic data, fit-upload-fuse-download.

A single JSON config describes the true function, both agents (features,
sampling regions, sample count, noise, ridge), the fusion stage, and
the evaluation grid.  :func:`run_pipeline` executes

    local fit -> upload -> fuse -> download (per agent) -> centralized

and writes four artifacts plus the resolved config into the output
directory:

- ``estimates.csv``: grid evaluations of the true function and all six
  estimates (plot-ready).
- ``metrics.json``: per-estimate grid RMSE / sup error / norm, the
  fusion weights, and every seed used.
- ``operators.json``: the fusion basis and operator matrices at full
  float precision.
- ``messages.jsonl``: the upload/download transfer messages.  These
  carry only basis digests and coefficient vectors, never data points,
  and are sufficient to replay the fusion stage (:func:`replay`).

Every stage failure is re-raised as a stage-tagged error so the CLI can
report which step broke.
"""

from __future__ import annotations

import csv
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import StageError
from .features import Dataset, FeatureSet, feature_from_descriptor
from .fusion import (
    basis_digest,
    basis_from_export,
    build_fusion_basis,
    download,
    operator_matrix,
    sqrt_operator,
    upload,
    write_operators,
)
from .optimizer import fuse, kernel_section_basis
from .regression import RegressionProblem, solve_centralized, solve_dual

ESTIMATE_NAMES = ("f1_up", "f2_up", "fused", "f1_down", "f2_down", "centralized")
CSV_HEADER = ("x", "true") + ESTIMATE_NAMES

ARTIFACT_NAMES = (
    "estimates.csv", "metrics.json", "operators.json", "messages.jsonl",
    "config.json",
)


@dataclass(frozen=True)
class TrueFunctionConfig:
    """Ground truth: an explicit feature expansion or a seeded random cubic."""

    kind: str  # "terms" | "random-cubic"
    terms: tuple = ()  # ((feature_descriptor, coeff), ...) when kind == "terms"
    seed: int = 0
    coeff_range: tuple = (-2.0, 2.0)

    def __post_init__(self):
        if self.kind not in ("terms", "random-cubic"):
            raise ValueError(f"unknown true-function kind {self.kind!r}")
        if self.kind == "terms" and not self.terms:
            raise ValueError("true function needs at least one term")
        lo, hi = self.coeff_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("coeff_range must be a nonempty finite interval")


@dataclass(frozen=True)
class AgentConfig:
    """One agent: features, sampling regions, sample count, noise, ridge."""

    features: tuple  # feature descriptors
    input_regions: tuple  # ((lo, hi), ...)
    sample_count: int = 20
    noise_std: float = 0.0
    ridge: float = 1e-6
    noise_seed: int = 0

    def __post_init__(self):
        if not self.features:
            raise ValueError("agent needs at least one feature")
        if not self.input_regions:
            raise ValueError("agent needs at least one input region")
        for lo, hi in self.input_regions:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid input region ({lo}, {hi})")
        if int(self.sample_count) < 1:
            raise ValueError("sample_count must be >= 1")
        if float(self.noise_std) < 0:
            raise ValueError("noise_std must be >= 0")
        if float(self.ridge) <= 0:
            raise ValueError("agent ridge must be > 0")


@dataclass(frozen=True)
class FusionConfig:
    """Fusion stage: reference-section count, anchor range, seed, ridge."""

    n_b: int = 40
    anchor_range: tuple = (-10.0, 10.0)
    seed: int = 0
    ridge: float = 1e-6

    def __post_init__(self):
        if int(self.n_b) < 1:
            raise ValueError("n_b must be >= 1")
        lo, hi = self.anchor_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("anchor_range must be a nonempty finite interval")
        if float(self.ridge) < 0:
            raise ValueError("fusion ridge must be >= 0")


@dataclass(frozen=True)
class EvaluationConfig:
    """Evaluation grid for metrics and plot data."""

    grid_range: tuple = (-10.0, 10.0)
    grid_points: int = 401

    def __post_init__(self):
        lo, hi = self.grid_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("grid_range must be a nonempty finite interval")
        if int(self.grid_points) < 2:
            raise ValueError("grid_points must be >= 2")


@dataclass(frozen=True)
class ExperimentConfig:
    true_function: TrueFunctionConfig
    agents: tuple  # (AgentConfig, AgentConfig)
    fusion: FusionConfig = FusionConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    output_dir: str = "out"

    def __post_init__(self):
        if len(self.agents) != 2:
            raise ValueError("exactly two agents are supported")


def config_from_dict(doc: dict) -> ExperimentConfig:
    tf = doc["true_function"]
    if "terms" in tf:
        true_function = TrueFunctionConfig(
            kind="terms",
            terms=tuple((t["feature"], float(t["coeff"])) for t in tf["terms"]),
        )
    else:
        true_function = TrueFunctionConfig(
            kind=tf.get("kind", "random-cubic"),
            seed=int(tf.get("seed", 0)),
            coeff_range=tuple(tf.get("coeff_range", (-2.0, 2.0))),
        )
    agents = []
    for i, a in enumerate(doc["agents"]):
        agents.append(AgentConfig(
            features=tuple(a["features"]),
            input_regions=tuple(tuple(iv) for iv in a["input_regions"]),
            sample_count=int(a.get("sample_count", 20)),
            noise_std=float(a.get("noise_std", 0.0)),
            ridge=float(a.get("ridge", 1e-6)),
            noise_seed=int(a.get("noise_seed", 100 + i)),
        ))
    fus = doc.get("fusion", {})
    fusion = FusionConfig(
        n_b=int(fus.get("n_b", 40)),
        anchor_range=tuple(fus.get("anchor_range", (-10.0, 10.0))),
        seed=int(fus.get("seed", 0)),
        ridge=float(fus.get("ridge", 1e-6)),
    )
    ev = doc.get("evaluation", {})
    evaluation = EvaluationConfig(
        grid_range=tuple(ev.get("grid_range", (-10.0, 10.0))),
        grid_points=int(ev.get("grid_points", 401)),
    )
    return ExperimentConfig(
        true_function=true_function,
        agents=tuple(agents),
        fusion=fusion,
        evaluation=evaluation,
        output_dir=str(doc.get("output_dir", "out")),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    if cfg.true_function.kind == "terms":
        tf = {"terms": [
            {"feature": desc, "coeff": coeff}
            for desc, coeff in cfg.true_function.terms
        ]}
    else:
        tf = {
            "kind": cfg.true_function.kind,
            "seed": cfg.true_function.seed,
            "coeff_range": list(cfg.true_function.coeff_range),
        }
    return {
        "true_function": tf,
        "agents": [
            {
                "features": list(a.features),
                "input_regions": [list(iv) for iv in a.input_regions],
                "sample_count": a.sample_count,
                "noise_std": a.noise_std,
                "ridge": a.ridge,
                "noise_seed": a.noise_seed,
            }
            for a in cfg.agents
        ],
        "fusion": {
            "n_b": cfg.fusion.n_b,
            "anchor_range": list(cfg.fusion.anchor_range),
            "seed": cfg.fusion.seed,
            "ridge": cfg.fusion.ridge,
        },
        "evaluation": {
            "grid_range": list(cfg.evaluation.grid_range),
            "grid_points": cfg.evaluation.grid_points,
        },
        "output_dir": cfg.output_dir,
    }


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _monomials(*powers):
    return tuple({"kind": "monomial", "param": float(k)} for k in powers)


def default_config(output_dir="out") -> ExperimentConfig:
    """The shipped example: a quadratic-capable agent sampling the middle
    of the domain, a cubic-capable agent sampling the flanks, and a
    seeded random cubic as ground truth."""
    return ExperimentConfig(
        true_function=TrueFunctionConfig(kind="random-cubic", seed=100061,
                                         coeff_range=(-2.0, 2.0)),
        agents=(
            AgentConfig(
                features=_monomials(0, 1, 2),
                input_regions=((-5.0, 5.0),),
                sample_count=20,
                noise_std=0.0,
                ridge=1e-6,
                noise_seed=100,
            ),
            AgentConfig(
                features=_monomials(2, 3),
                input_regions=((-10.0, -5.0), (5.0, 10.0)),
                sample_count=20,
                noise_std=0.0,
                ridge=1e-6,
                noise_seed=101,
            ),
        ),
        fusion=FusionConfig(n_b=40, anchor_range=(-10.0, 10.0), seed=0,
                            ridge=1e-6),
        evaluation=EvaluationConfig(grid_range=(-10.0, 10.0), grid_points=401),
        output_dir=output_dir,
    )


def resolve_true_function(tf: TrueFunctionConfig):
    """Materialize the ground truth as (callable, term descriptors).

    ``random-cubic`` draws monomial coefficients of degrees 0..3
    uniformly from ``coeff_range`` with the configured seed.
    """
    if tf.kind == "terms":
        terms = [(dict(desc), float(coeff)) for desc, coeff in tf.terms]
    else:
        rng = np.random.default_rng(tf.seed)
        lo, hi = tf.coeff_range
        coeffs = rng.uniform(lo, hi, size=4)
        terms = [
            ({"kind": "monomial", "param": float(k)}, float(coeffs[k]))
            for k in range(4)
        ]
    features = tuple(feature_from_descriptor(desc, 1) for desc, _ in terms)
    weights = np.array([coeff for _, coeff in terms])
    space = FeatureSet(features, input_dim=1, check_independence=False)

    def true_fn(x):
        X = np.asarray(x, dtype=float).reshape(-1, 1)
        vals = space.design_matrix(X) @ weights
        return vals if np.ndim(x) else float(vals[0])

    descriptors = [{"feature": desc, "coeff": coeff} for desc, coeff in terms]
    return true_fn, descriptors


def _allocate_counts(lengths, m):
    """Largest-remainder allocation of m samples across region lengths."""
    total = float(sum(lengths))
    quotas = [m * length / total for length in lengths]
    counts = [int(math.floor(q)) for q in quotas]
    order = sorted(
        range(len(lengths)),
        key=lambda i: (-(quotas[i] - counts[i]), i),
    )
    for i in order[: m - sum(counts)]:
        counts[i] += 1
    return counts


def generate_data(cfg: ExperimentConfig, agent) -> Dataset:
    """Deterministic sampling of the true function on an agent's regions.

    Samples are spread across the region union proportionally to region
    length (largest-remainder rounding) and evenly spaced within each
    region, endpoints included; a region granted a single sample gets
    its midpoint.  Gaussian noise is added only when ``noise_std > 0``,
    from the agent's own seed.
    """
    if agent not in (1, 2):
        raise ValueError(f"agent must be 1 or 2, got {agent!r}")
    acfg = cfg.agents[agent - 1]
    lengths = [hi - lo for lo, hi in acfg.input_regions]
    counts = _allocate_counts(lengths, int(acfg.sample_count))
    pieces = []
    for (lo, hi), k in zip(acfg.input_regions, counts):
        if k == 0:
            continue
        if k == 1:
            pieces.append(np.array([(lo + hi) / 2.0]))
        else:
            pieces.append(np.linspace(lo, hi, k))
    x = np.concatenate(pieces)
    true_fn, _ = resolve_true_function(cfg.true_function)
    y = true_fn(x)
    if acfg.noise_std > 0:
        rng = np.random.default_rng(acfg.noise_seed)
        y = y + acfg.noise_std * rng.standard_normal(x.shape[0])
    return Dataset(x.reshape(-1, 1), y)


@dataclass(frozen=True)
class TransferMessage:
    """One coefficient transfer between an agent and the fusion center.

    Carries only the basis digest and a coefficient vector over the
    fusion basis; no data points ever leave an agent.
    """

    direction: str  # "upload" | "download"
    agent_id: int
    basis_digest: str
    coeffs: tuple

    def __post_init__(self):
        if self.direction not in ("upload", "download"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.agent_id not in (1, 2):
            raise ValueError("agent_id must be 1 or 2")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def to_dict(self):
        return {
            "direction": self.direction,
            "agent_id": self.agent_id,
            "basis_digest": self.basis_digest,
            "coeffs": list(self.coeffs),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            direction=doc["direction"],
            agent_id=int(doc["agent_id"]),
            basis_digest=doc["basis_digest"],
            coeffs=tuple(doc["coeffs"]),
        )


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """Grid metrics for every estimate plus the fusion outcome and seeds."""

    estimates: dict  # name -> {rmse_on_grid, sup_error_on_grid, h_norm}
    fusion: dict  # {a, b, degenerate, objective}
    seeds: dict
    basis_digest: str
    true_function_terms: list

    def __post_init__(self):
        for name in ESTIMATE_NAMES:
            entry = self.estimates[name]
            for key in ("rmse_on_grid", "sup_error_on_grid", "h_norm"):
                v = entry[key]
                if not (math.isfinite(v) and v >= 0):
                    raise ValueError(f"metric {name}.{key} is not finite: {v}")
        for key in ("a", "b", "objective"):
            if not math.isfinite(self.fusion[key]):
                raise ValueError(f"fusion metric {key} is not finite")

    def to_dict(self):
        return {
            "estimates": self.estimates,
            "fusion": self.fusion,
            "seeds": self.seeds,
            "basis_digest": self.basis_digest,
            "true_function_terms": self.true_function_terms,
        }


@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, str(exc)) from exc


def _build_spaces(cfg: ExperimentConfig):
    box = (tuple(cfg.evaluation.grid_range),)
    spaces = []
    for a in cfg.agents:
        features = tuple(feature_from_descriptor(d, 1) for d in a.features)
        spaces.append(FeatureSet(features, input_dim=1, domain_box=box))
    return tuple(spaces)


def agent_fit(cfg: ExperimentConfig, agent):
    """Local stage for one agent: generate its data and fit its estimate."""
    with _stage("config"):
        spaces = _build_spaces(cfg)
    with _stage("data"):
        data = generate_data(cfg, agent)
    with _stage("fit"):
        problem = RegressionProblem(data, cfg.agents[agent - 1].ridge,
                                    spaces[agent - 1])
        return data, solve_dual(problem)


def _grid_metrics(values, true_values, norm):
    err = values - true_values
    return {
        "rmse_on_grid": float(np.sqrt(np.mean(err ** 2))),
        "sup_error_on_grid": float(np.max(np.abs(err))),
        "h_norm": float(norm),
    }


def _write_estimates_csv(path, grid, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(grid.shape[0]):
            writer.writerow([repr(float(columns[name][i])) for name in CSV_HEADER])


def run_pipeline(cfg: ExperimentConfig, out_dir=None) -> MetricsReport:
    """Execute the full experiment and write all artifacts.

    Deterministic: identical configs produce byte-identical artifacts.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _stage("config"):
        true_fn, terms = resolve_true_function(cfg.true_function)
        spaces = _build_spaces(cfg)
    with _stage("data"):
        data = {agent: generate_data(cfg, agent) for agent in (1, 2)}
    with _stage("fit"):
        local = {
            agent: solve_dual(RegressionProblem(
                data[agent], cfg.agents[agent - 1].ridge, spaces[agent - 1],
            ))
            for agent in (1, 2)
        }
    with _stage("fusion-basis"):
        basis = build_fusion_basis(spaces[0], spaces[1])
        digest = basis_digest(basis)
    messages = []
    with _stage("upload"):
        uploaded = {}
        for agent in (1, 2):
            uploaded[agent] = upload(local[agent].function, basis)
            messages.append(TransferMessage(
                "upload", agent, digest, tuple(uploaded[agent].coeffs),
            ))
    with _stage("fuse"):
        refs = kernel_section_basis(
            basis, count=cfg.fusion.n_b, anchor_range=cfg.fusion.anchor_range,
            seed=cfg.fusion.seed,
        )
        fusion_result = fuse(uploaded[1], uploaded[2], refs,
                             ridge=cfg.fusion.ridge)
    with _stage("download"):
        downloaded = {}
        for agent in (1, 2):
            sqrtL = sqrt_operator(operator_matrix(basis, agent))
            departure = sqrtL.matrix @ fusion_result.fused.coeffs
            messages.append(TransferMessage(
                "download", agent, digest, tuple(departure),
            ))
            downloaded[agent] = download(fusion_result.fused, agent)
    with _stage("centralized"):
        central = solve_centralized(data[1], data[2], basis, cfg.fusion.ridge)
    with _stage("evaluate"):
        lo, hi = cfg.evaluation.grid_range
        grid = np.linspace(lo, hi, cfg.evaluation.grid_points)
        true_values = true_fn(grid)
        curves = {
            "f1_up": uploaded[1](grid),
            "f2_up": uploaded[2](grid),
            "fused": fusion_result.fused(grid),
            "f1_down": downloaded[1](grid),
            "f2_down": downloaded[2](grid),
            "centralized": central.function(grid),
        }
        norms = {
            "f1_up": uploaded[1].norm(),
            "f2_up": uploaded[2].norm(),
            "fused": fusion_result.fused.norm(),
            "f1_down": downloaded[1].norm(),
            "f2_down": downloaded[2].norm(),
            "centralized": central.function.norm(),
        }
        report = MetricsReport(
            estimates={
                name: _grid_metrics(curves[name], true_values, norms[name])
                for name in ESTIMATE_NAMES
            },
            fusion={
                "a": fusion_result.a,
                "b": fusion_result.b,
                "degenerate": fusion_result.degenerate,
                "objective": fusion_result.objective,
            },
            seeds={
                "true_function": (cfg.true_function.seed
                                  if cfg.true_function.kind == "random-cubic"
                                  else None),
                "fusion_anchors": cfg.fusion.seed,
                "agent1_noise": cfg.agents[0].noise_seed,
                "agent2_noise": cfg.agents[1].noise_seed,
            },
            basis_digest=digest,
            true_function_terms=terms,
        )
    with _stage("write"):
        columns = dict(curves)
        columns["x"] = grid
        columns["true"] = true_values
        _write_estimates_csv(out / "estimates.csv", grid, columns)
        with open(out / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        write_operators(basis, out / "operators.json")
        with open(out / "messages.jsonl", "w", encoding="utf-8") as fh:
            for msg in messages:
                fh.write(json.dumps(msg.to_dict()))
                fh.write("\n")
        resolved = ExperimentConfig(
            true_function=cfg.true_function,
            agents=cfg.agents,
            fusion=cfg.fusion,
            evaluation=cfg.evaluation,
            output_dir=str(out),
        )
        save_config(resolved, out / "config.json")
    return report


def read_messages(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [TransferMessage.from_dict(json.loads(line))
                for line in fh if line.strip()]


def replay(out_dir) -> dict:
    """Re-run fusion and downloads from the serialized messages alone.

    Rebuilds the fusion basis from ``operators.json``, takes the upload
    coefficients from ``messages.jsonl``, and repeats fuse, download,
    and grid evaluation using only the resolved config for the anchor
    seed and grid.  Returns the recomputed fusion and estimate metrics,
    which must match ``metrics.json`` exactly up to float round-trip.
    """
    out = Path(out_dir)
    with _stage("replay"):
        for name in ("operators.json", "messages.jsonl", "config.json"):
            if not (out / name).exists():
                raise FileNotFoundError(f"missing artifact {name} in {out}")
        with open(out / "operators.json", "r", encoding="utf-8") as fh:
            basis = basis_from_export(json.load(fh))
        digest = basis_digest(basis)
        cfg = load_config(out / "config.json")
        messages = read_messages(out / "messages.jsonl")
        uploads = {m.agent_id: m for m in messages if m.direction == "upload"}
        if set(uploads) != {1, 2}:
            raise ValueError("messages do not contain both uploads")
        for m in messages:
            if m.basis_digest != digest:
                raise ValueError(
                    "message basis digest does not match operators.json"
                )
        f_up = {agent: basis.function(np.array(uploads[agent].coeffs))
                for agent in (1, 2)}
        refs = kernel_section_basis(
            basis, count=cfg.fusion.n_b, anchor_range=cfg.fusion.anchor_range,
            seed=cfg.fusion.seed,
        )
        fusion_result = fuse(f_up[1], f_up[2], refs, ridge=cfg.fusion.ridge)
        downloaded = {agent: download(fusion_result.fused, agent)
                      for agent in (1, 2)}
        lo, hi = cfg.evaluation.grid_range
        grid = np.linspace(lo, hi, cfg.evaluation.grid_points)
        true_fn, _ = resolve_true_function(cfg.true_function)
        true_values = true_fn(grid)
        return {
            "fusion": {
                "a": fusion_result.a,
                "b": fusion_result.b,
                "degenerate": fusion_result.degenerate,
                "objective": fusion_result.objective,
            },
            "estimates": {
                "fused": _grid_metrics(fusion_result.fused(grid), true_values,
                                       fusion_result.fused.norm()),
                "f1_down": _grid_metrics(downloaded[1](grid), true_values,
                                         downloaded[1].norm()),
                "f2_down": _grid_metrics(downloaded[2](grid), true_values,
                                         downloaded[2].norm()),
            },
        }


def emit_plot_data(report_dir) -> Path:
    """Rewrite ``estimates.csv`` in a directory holding pipeline artifacts.

    Recomputes the grid columns deterministically from the resolved
    config, so the rewritten file is byte-identical to the original.
    """
    out = Path(report_dir)
    with _stage("plot-data"):
        cfg_path = out / "config.json"
        if not cfg_path.exists():
            raise FileNotFoundError(f"missing artifact config.json in {out}")
        cfg = load_config(cfg_path)
    run_pipeline(cfg, out_dir=out)
    return out / "estimates.csv"
