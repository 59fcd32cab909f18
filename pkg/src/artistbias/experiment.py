"""
End-to-end audit pipeline: ingest, filter, sample, fold, fit, evaluate, audit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import bias
from .bias import GroupAssignment, ItemCategory, UserGroup
from .config import ExperimentConfig, with_models_seeded
from .corpus import FilteredCorpus, apply_filters, load_gender_map, parse_lfm1b, parse_lfm360k
from .evaluation import EvalFold, MetricReport, candidates_for, make_folds, score_reclists
from .interactions import InteractionMatrix, PopularityIndex, build_matrix, popularity_index
from .recsys import fit, recommend_top_n
from .synth import generate_synthetic

_log = logging.getLogger(__name__)

#: a plug-in recommender: (train fold, experiment matrix) -> {user index: ranked artist indices}
ListRecommender = Callable[[EvalFold, InteractionMatrix], Mapping[int, Sequence[int]]]


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class AuditCell:
    experiment: str
    dataset: str
    algorithm: str
    fold: str
    user_group: str
    item_category: str
    pr_input: float | None
    pr_output: float | None
    bias_disparity: float | None
    skip_reason: str = ""


@dataclass(frozen=True)
class MetricRow:
    experiment: str
    dataset: str
    algorithm: str
    fold: str
    report: MetricReport


@dataclass
class ExperimentResult:
    cells: list[AuditCell]
    metrics: list[MetricRow]
    corpus: FilteredCorpus
    matrix: InteractionMatrix
    assignment: GroupAssignment
    preferences: dict[int, bias.UserPreference]
    sample: list[str]
    reclists: dict[tuple[str, int], dict[int, tuple[int, ...]]] = field(default_factory=dict)

    def cell(self, algorithm, group, category, fold="mean") -> AuditCell:
        g = UserGroup(group).value
        c = ItemCategory(category).value
        for cell in self.cells:
            if (cell.algorithm, cell.fold, cell.user_group, cell.item_category) == (algorithm, fold, g, c):
                return cell
        raise KeyError((algorithm, group, category, fold))

    def metric(self, algorithm, fold="mean") -> MetricReport:
        for row in self.metrics:
            if row.algorithm == algorithm and row.fold == fold:
                return row.report
        raise KeyError((algorithm, fold))


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except Exception as e:
                raise PipelineError(name, e) from e
        return inner
    return wrap


@_stage("ingest")
def load_corpus(cfg: ExperimentConfig) -> FilteredCorpus:
    if cfg.dataset == "synthetic" and cfg.events is None:
        syn = generate_synthetic(cfg.synth)
        records, profiles, genders = syn.records, syn.profiles, syn.genders
    else:
        parser = parse_lfm1b if cfg.dataset == "lfm1b" else parse_lfm360k
        parsed = parser(cfg.events, cfg.profiles)
        records, profiles = parsed.records, parsed.profiles
        genders = load_gender_map(cfg.gender_map)
        # users without a profile row cannot be assigned a group
        records = [r for r in records if r.user_id in profiles]
    return _filter(records, profiles, genders, cfg)


@_stage("filter")
def _filter(records, profiles, genders, cfg):
    return apply_filters(records, profiles, genders, cfg.filter_policy)


@_stage("sample")
def select_population(corpus: FilteredCorpus, cfg: ExperimentConfig):
    matrix = build_matrix(corpus)
    assignment = bias.assign_groups(matrix, corpus)
    prefs, excluded = bias.per_user_preference_ratio(matrix, assignment, weighted=cfg.weighted_pr)
    by_id = {matrix.user_ids[u]: p for u, p in prefs.items()}
    groups = {matrix.user_ids[u]: UserGroup(g) for u, g in enumerate(assignment.user_groups)}
    sample = bias.sample_users(groups, by_id, cfg.sampling)
    _log.info("sampled %d of %d users (%s design)", len(sample), matrix.n_users, cfg.experiment)
    return matrix, assignment, prefs, sample


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _mean_cells(cells: list[AuditCell]) -> list[AuditCell]:
    out = []
    keys = []
    for c in cells:
        k = (c.algorithm, c.user_group, c.item_category)
        if k not in keys:
            keys.append(k)
    for algo, g, c in keys:
        rows = [x for x in cells if (x.algorithm, x.user_group, x.item_category) == (algo, g, c)]
        pr_in = _mean_or_none(x.pr_input for x in rows)
        pr_out = _mean_or_none(x.pr_output for x in rows)
        reason = ""
        bd = None
        if pr_in is None or pr_out is None:
            reason = rows[0].skip_reason or "no folds with values"
        else:
            try:
                bd = bias.bias_disparity(pr_in, pr_out)
            except bias.UndefinedDisparity:
                reason = "pr_input=0"
        first = rows[0]
        out.append(AuditCell(first.experiment, first.dataset, algo, "mean", g, c, pr_in, pr_out, bd, reason))
    return out


def audit_fold(experiment, dataset, algorithm, fold_index, full, assignment, reclists, weighted=False):
    cells = bias.audit_cells(full, reclists, assignment, weighted=weighted)
    return [
        AuditCell(experiment, dataset, algorithm, str(fold_index), c.group.value, c.category.value,
                  c.pr_input, c.pr_output, c.bias_disparity, c.reason)
        for c in cells
    ]


def run_experiment(cfg: ExperimentConfig, recommenders: Mapping[str, ListRecommender] | None = None,
                   corpus: FilteredCorpus | None = None) -> ExperimentResult:
    """
    Execute the audit.

    ``recommenders`` adds list-producing plug-ins alongside the configured
    models; ``corpus`` skips ingestion and filtering.
    """
    cfg.validate(check_paths=corpus is None and not (cfg.dataset == "synthetic" and cfg.events is None))
    if corpus is None:
        corpus = load_corpus(cfg)
    full_matrix, full_assign, prefs, sample = select_population(corpus, cfg)

    @_stage("folds")
    def prepare():
        sub = corpus.restrict_users(sample)
        matrix = build_matrix(sub)
        assignment = bias.assign_groups(matrix, sub)
        pop = popularity_index(matrix)
        return sub, matrix, assignment, pop, make_folds(matrix, cfg.folds)

    sub, matrix, assignment, pop, folds = prepare()
    experiment, dataset = cfg.experiment, cfg.dataset
    n = cfg.folds.list_size
    cells: list[AuditCell] = []
    metrics: list[MetricRow] = []
    all_lists = {}

    def record(name, fold, reclists):
        res = score_reclists(reclists, fold, matrix, pop, n)
        metrics.append(MetricRow(experiment, dataset, name, str(fold.index), res.metrics))
        cells.extend(audit_fold(experiment, dataset, name, fold.index, matrix, assignment,
                                res.reclists, cfg.weighted_pr))
        all_lists[name, fold.index] = res.reclists

    for fold in folds:
        for mcfg in with_models_seeded(cfg, fold.index):
            name = mcfg.algorithm.value

            @_stage(f"fit:{name}:{fold.index}")
            def train():
                return fit(fold.train, mcfg)

            model = train()

            @_stage(f"evaluate:{name}:{fold.index}")
            def evaluate():
                lists = {u: recommend_top_n(model, u, candidates_for(fold, u, cfg.candidates), n).items
                         for u in fold.users}
                record(name, fold, lists)

            evaluate()
        for name, rec in (recommenders or {}).items():
            @_stage(f"evaluate:{name}:{fold.index}")
            def plugin():
                record(name, fold, dict(rec(fold, matrix)))

            plugin()

    names = [m.algorithm.value for m in cfg.models] + list(recommenders or {})
    for name in names:
        rows = [r for r in metrics if r.algorithm == name]
        metrics.append(MetricRow(experiment, dataset, name, "mean", MetricReport.mean([r.report for r in rows])))
    cells.extend(_mean_cells(cells))
    return ExperimentResult(cells, metrics, corpus, full_matrix, full_assign, prefs, sample, all_lists)


def proportional_oracle(fold: EvalFold, matrix: InteractionMatrix) -> dict[int, tuple[int, ...]]:
    """Recommend each test user their whole input history, reproducing input PR exactly."""
    return {u: tuple(int(i) for i in matrix.user_items(u)) for u in fold.users}


def is_finite(x) -> bool:
    return x is not None and math.isfinite(x)
