"""
Report files: ``audit.csv``, ``metrics.csv``, ``pr_distribution.tsv`` and
optional SVG bar charts.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

from .evaluation import MetricReport
from .experiment import AuditCell, ExperimentResult, MetricRow

_log = logging.getLogger(__name__)

AUDIT_COLUMNS = [
    "experiment", "dataset", "algorithm", "fold", "user_group", "item_category",
    "pr_input", "pr_output", "bias_disparity", "skip_reason",
]
METRIC_COLUMNS = [
    "experiment", "dataset", "algorithm", "fold", "precision", "ndcg", "coverage",
    "spread", "longtail_pct", "users_evaluated", "users_skipped",
]


class ReportError(RuntimeError):
    pass


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def _parse_num(text: str):
    return None if text == "" else float(text)


def audit_rows(cells: Iterable[AuditCell]):
    for c in cells:
        yield [c.experiment, c.dataset, c.algorithm, c.fold, c.user_group, c.item_category,
               _num(c.pr_input), _num(c.pr_output), _num(c.bias_disparity), c.skip_reason]


def metric_rows(metrics: Iterable[MetricRow]):
    for m in metrics:
        r = m.report
        yield [m.experiment, m.dataset, m.algorithm, m.fold, _num(r.precision), _num(r.ndcg),
               _num(r.coverage), _num(r.spread), _num(r.longtail_pct), str(r.users_evaluated),
               str(r.users_skipped)]


def _write_csv(path: Path, header, rows):
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)  # RFC 4180: CRLF line ends, minimal quoting
        w.writerow(header)
        w.writerows(rows)


def emit_report(cells: Sequence[AuditCell], metrics: Sequence[MetricRow], output_dir,
                pr_rows: Iterable[tuple[str, str, float, float]] | None = None,
                svg: bool = True) -> list[Path]:
    """
    Write the report files into ``output_dir``.

    If anything fails, files written so far are removed before the error
    propagates.
    """
    if not cells and not metrics:
        raise ReportError("nothing to report")
    out = Path(output_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        p = out / "audit.csv"
        written.append(p)
        _write_csv(p, AUDIT_COLUMNS, audit_rows(cells))
        p = out / "metrics.csv"
        written.append(p)
        _write_csv(p, METRIC_COLUMNS, metric_rows(metrics))
        if pr_rows is not None:
            p = out / "pr_distribution.tsv"
            written.append(p)
            with p.open("w", encoding="utf-8", newline="\n") as f:
                f.write("user_id\tgender\tpr_male\tpr_female\n")
                for uid, gender, pm, pf in pr_rows:
                    f.write(f"{uid}\t{gender}\t{float(pm)!r}\t{float(pf)!r}\n")
        if svg:
            written.extend(write_figures(cells, out, written))
    except OSError as e:
        for p in written:
            p.unlink(missing_ok=True)
        raise ReportError(f"cannot write report to {out}: {e}") from e
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    _log.info("wrote %d report files to %s", len(written), out)
    return written


def emit_result(result: ExperimentResult, output_dir, svg: bool = True) -> list[Path]:
    m, a = result.matrix, result.assignment
    rows = (
        (m.user_ids[u], "male" if a.user_groups[u] == "male_users" else "female", p.pr_male, p.pr_female)
        for u, p in sorted(result.preferences.items())
    )
    return emit_report(result.cells, result.metrics, output_dir, pr_rows=rows, svg=svg)


def read_audit(path) -> list[AuditCell]:
    with open(path, encoding="utf-8", newline="") as f:
        r = csv.DictReader(f)
        if r.fieldnames != AUDIT_COLUMNS:
            raise ReportError(f"{path}: unexpected columns {r.fieldnames}")
        return [
            AuditCell(row["experiment"], row["dataset"], row["algorithm"], row["fold"],
                      row["user_group"], row["item_category"], _parse_num(row["pr_input"]),
                      _parse_num(row["pr_output"]), _parse_num(row["bias_disparity"]),
                      row["skip_reason"])
            for row in r
        ]


def read_metrics(path) -> list[MetricRow]:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        r = csv.DictReader(f)
        if r.fieldnames != METRIC_COLUMNS:
            raise ReportError(f"{path}: unexpected columns {r.fieldnames}")
        for row in r:
            def val(k):
                v = _parse_num(row[k])
                return math.nan if v is None else v
            rep = MetricReport(
                precision=val("precision"), ndcg=val("ndcg"), coverage=val("coverage"),
                spread=val("spread"), longtail_pct=val("longtail_pct"),
                users_evaluated=int(row["users_evaluated"]),
                ndcg_skipped=int(row["users_skipped"]),
            )
            out.append(MetricRow(row["experiment"], row["dataset"], row["algorithm"], row["fold"], rep))
    return out


def write_figures(cells: Sequence[AuditCell], out: Path, written: list[Path] | None = None) -> list[Path]:
    """PR bars with the input PR as a dotted line, and BD bars, per user group."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    means = [c for c in cells if c.fold == "mean"]
    if not means:
        return []
    algos = list(dict.fromkeys(c.algorithm for c in means))
    groups = list(dict.fromkeys(c.user_group for c in means))
    cats = list(dict.fromkeys(c.item_category for c in means))
    lookup = {(c.algorithm, c.user_group, c.item_category): c for c in means}
    colors = {"male_artists": "#4c72b0", "female_artists": "#dd8452"}
    width = 0.8 / max(len(cats), 1)
    paths = []
    plt.rcParams["svg.hashsalt"] = "artistbias"
    for kind in ("pr", "bd"):
        fig, axes = plt.subplots(1, len(groups), figsize=(5 * len(groups), 4), sharey=True, squeeze=False)
        for ax, g in zip(axes[0], groups):
            for j, cat in enumerate(cats):
                xs, ys = [], []
                for i, a in enumerate(algos):
                    c = lookup.get((a, g, cat))
                    v = None if c is None else (c.pr_output if kind == "pr" else c.bias_disparity)
                    xs.append(i + (j - (len(cats) - 1) / 2) * width)
                    ys.append(0.0 if v is None else v)
                ax.bar(xs, ys, width, label=cat.replace("_", " "), color=colors.get(cat))
                if kind == "pr":
                    pin = next((lookup[a, g, cat].pr_input for a in algos
                                if (a, g, cat) in lookup and lookup[a, g, cat].pr_input is not None), None)
                    if pin is not None:
                        ax.axhline(pin, linestyle=":", color=colors.get(cat), linewidth=1.5)
            if kind == "bd":
                ax.axhline(0.0, color="black", linewidth=0.8)
            ax.set_xticks(range(len(algos)))
            ax.set_xticklabels(algos, rotation=20)
            ax.set_title(g.replace("_", " "))
            ax.set_ylabel("preference ratio" if kind == "pr" else "bias disparity")
        axes[0][0].legend()
        fig.tight_layout()
        p = out / f"{kind}.svg"
        if written is not None:
            written.append(p)
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(p)
    return paths if written is None else []
