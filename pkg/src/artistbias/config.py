"""
Experiment configuration.

Config files are flat ``key = value`` lines; ``#`` starts a comment.  Keys:

==============================  ===============================================
dataset                         lfm360k | lfm1b | synthetic
events, profiles, gender_map    input paths (synthetic: optional, generated
                                from ``synth.*`` keys when absent)
experiment                      whole | extreme
algorithms                      comma list of MostPopular, UserItemAvg,
                                UserKNNAvg, NMF
candidates                      testset | catalog
seed                            master seed
out                             output directory
svg                             true | false
weighted_pr                     use playcount-weighted ratings for input PR
min_unique_artists_per_user,    filter thresholds
min_users_per_artist,
max_unknown_gender_fraction,
unknown_fraction_by
n_folds, held_out,              leave-N-out protocol
min_artists, list_size
k_neighbors, similarity,        model hyperparameters
min_support, nmf_factors,
nmf_epochs, nmf_reg,
nmf_init_low, nmf_init_high,
popularity_by
sample_fraction,                user sampling
extreme_category,
extreme_threshold,
preserve_gender_proportions
synth.<field>                   any :class:`~artistbias.synth.SynthSpec` field
==============================  ===============================================
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .bias import ItemCategory, SamplingDesign, SamplingPlan
from .corpus import FilterPolicy
from .evaluation import CANDIDATE_MODES, FoldSpec
from .recsys import Algorithm, ModelConfig, Similarity
from .rng import derive_int
from .synth import SynthSpec, spec_from_mapping

DATASETS = ("lfm360k", "lfm1b", "synthetic")
DEFAULT_ALGORITHMS = (Algorithm.MOST_POPULAR, Algorithm.USER_ITEM_AVG, Algorithm.USER_KNN_AVG, Algorithm.NMF)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"
    events: Path | None = None
    profiles: Path | None = None
    gender_map: Path | None = None
    filter_policy: FilterPolicy = FilterPolicy()
    folds: FoldSpec = FoldSpec()
    models: tuple[ModelConfig, ...] = tuple(ModelConfig(algorithm=a) for a in DEFAULT_ALGORITHMS)
    sampling: SamplingPlan = SamplingPlan()
    candidates: str = "testset"
    out_dir: Path = Path("results")
    seed: int = 0
    svg: bool = True
    weighted_pr: bool = False
    synth: SynthSpec = field(default_factory=SynthSpec)

    @property
    def experiment(self) -> str:
        return self.sampling.design.value

    def validate(self, check_paths: bool = True) -> "ExperimentConfig":
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}")
        if self.candidates not in CANDIDATE_MODES:
            raise ConfigError(f"candidates must be one of {CANDIDATE_MODES}")
        if not self.models:
            raise ConfigError("no algorithms selected")
        paths = (self.events, self.profiles, self.gender_map)
        if self.dataset != "synthetic" and any(p is None for p in paths):
            raise ConfigError(f"dataset {self.dataset} needs events, profiles and gender_map paths")
        if check_paths:
            for p in paths:
                if p is not None and not Path(p).exists():
                    raise ConfigError(f"input file {p} does not exist")
        return self


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config_file(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


_FILTER_KEYS = {
    "min_unique_artists_per_user": int,
    "min_users_per_artist": int,
    "max_unknown_gender_fraction": float,
    "unknown_fraction_by": str,
}
_FOLD_KEYS = {"n_folds": int, "held_out": int, "min_artists": int, "list_size": int}
_MODEL_KEYS = {
    "k_neighbors": int,
    "similarity": str,
    "min_support": int,
    "nmf_factors": int,
    "nmf_epochs": int,
    "nmf_reg": float,
    "nmf_init_low": float,
    "nmf_init_high": float,
    "popularity_by": str,
}
_SAMPLING_KEYS = {
    "sample_fraction": float,
    "extreme_category": str,
    "extreme_threshold": float,
    "preserve_gender_proportions": _bool,
}
_TOP_KEYS = {"dataset", "events", "profiles", "gender_map", "experiment", "algorithms",
             "candidates", "seed", "out", "svg", "weighted_pr"}


def _pick(values, keys):
    out = {}
    for k, conv in keys.items():
        if k in values:
            try:
                out[k] = conv(values[k])
            except ValueError as e:
                raise ConfigError(f"bad value for {k}: {values[k]!r}") from e
    return out


def build_config(values: dict[str, str]) -> ExperimentConfig:
    """Turn flat key/value pairs into a validated config (paths not checked)."""
    known = set(_TOP_KEYS) | set(_FILTER_KEYS) | set(_FOLD_KEYS) | set(_MODEL_KEYS) | set(_SAMPLING_KEYS)
    unknown = [k for k in values if k not in known and not k.startswith("synth.")]
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    seed = int(values.get("seed", 0))
    try:
        policy = FilterPolicy(**_pick(values, _FILTER_KEYS))
        folds = FoldSpec(seed=derive_int(seed, "folds"), **_pick(values, _FOLD_KEYS))
        model_kw = _pick(values, _MODEL_KEYS)
        if "similarity" in model_kw:
            model_kw["similarity"] = Similarity(model_kw["similarity"].lower())
        names = values.get("algorithms")
        algos = [Algorithm.parse(a) for a in names.split(",") if a.strip()] if names else list(DEFAULT_ALGORITHMS)
        models = tuple(ModelConfig(algorithm=a, **model_kw) for a in algos)
        samp = _pick(values, _SAMPLING_KEYS)
        if "extreme_category" in samp:
            samp["extreme_category"] = ItemCategory(_category_value(samp["extreme_category"]))
        design = SamplingDesign(values.get("experiment", "whole"))
        sampling = SamplingPlan(design=design, seed=derive_int(seed, "sampling"), **samp)
        synth_values = {k[len("synth."):]: v for k, v in values.items() if k.startswith("synth.")}
        synth_values.setdefault("seed", str(derive_int(seed, "synth")))
        synth = spec_from_mapping(synth_values)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e

    def path(key):
        return Path(values[key]) if values.get(key) else None

    cfg = ExperimentConfig(
        dataset=values.get("dataset", "synthetic"),
        events=path("events"),
        profiles=path("profiles"),
        gender_map=path("gender_map"),
        filter_policy=policy,
        folds=folds,
        models=models,
        sampling=sampling,
        candidates=values.get("candidates", "testset"),
        out_dir=Path(values.get("out", "results")),
        seed=seed,
        svg=_bool(values.get("svg", "true")),
        weighted_pr=_bool(values.get("weighted_pr", "false")),
        synth=synth,
    )
    return cfg.validate(check_paths=False)


def _category_value(text: str) -> str:
    t = text.strip().lower()
    return {"female": "female_artists", "male": "male_artists"}.get(t, t)


def with_models_seeded(cfg: ExperimentConfig, fold: int) -> list[ModelConfig]:
    """Per-fold model configs whose seeds derive from the master seed."""
    return [replace(m, seed=derive_int(cfg.seed, "model", m.algorithm.value, fold)) for m in cfg.models]
