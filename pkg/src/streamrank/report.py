"""Human-readable outputs: a markdown report and a critical-difference
diagram that shows which models are statistically indistinguishable.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .errors import ValidationError
from .experiment import ResultsArchive, verify_integrity
from .learners import DISPLAY_NAMES

logger = logging.getLogger(__name__)

MIN_DIAGRAM_MODELS = 2
MAX_DIAGRAM_MODELS = 20


def display_name(model_id: str) -> str:
    return DISPLAY_NAMES.get(model_id, model_id)


def diagram_groups(average_ranks, cd: float) -> list[tuple[int, ...]]:
    """Maximal groups of models whose average ranks pairwise differ by <= cd.

    On a number line a group's pairwise condition collapses to max - min <= cd,
    so candidate groups are runs in sorted order; a run is kept only when no
    longer run contains it. Returned tuples hold indices into the input order,
    each sorted by ascending rank; singletons are omitted (nothing to join).
    """
    ranks = np.asarray(average_ranks, dtype=np.float64)
    if ranks.ndim != 1 or ranks.size < 2:
        raise ValidationError(f"need a 1-D vector of >= 2 ranks, got shape {ranks.shape}")
    if not np.isfinite(ranks).all():
        raise ValidationError("average ranks must be finite")
    if not np.isfinite(cd) or cd < 0:
        raise ValidationError(f"critical difference must be a finite non-negative number, got {cd}")
    order = np.argsort(ranks, kind="stable")
    sorted_ranks = ranks[order]
    k = ranks.size
    groups: list[tuple[int, ...]] = []
    reach = -1  # rightmost end seen so far; runs ending at or before it are nested
    for i in range(k):
        j = i
        while j + 1 < k and sorted_ranks[j + 1] - sorted_ranks[i] <= cd:
            j += 1
        if j > reach and j > i:
            groups.append(tuple(int(order[t]) for t in range(i, j + 1)))
        reach = max(reach, j)
    return groups


def cd_diagram(
    average_ranks,
    model_names,
    cd: float,
    path: str | Path,
    title: str | None = None,
) -> Path:
    """Render the classic average-rank number line with group connectors as SVG.

    Best model (lowest rank) sits leftmost; bars below the axis join every
    maximal group whose members are within cd of one another.
    """
    ranks = np.asarray(average_ranks, dtype=np.float64)
    k = ranks.size
    if not MIN_DIAGRAM_MODELS <= k <= MAX_DIAGRAM_MODELS:
        raise ValidationError(
            f"diagram supports {MIN_DIAGRAM_MODELS}..{MAX_DIAGRAM_MODELS} models, got {k}"
        )
    if len(model_names) != k:
        raise ValidationError(f"{len(model_names)} names for {k} ranks")
    groups = diagram_groups(ranks, cd)

    order = np.argsort(ranks, kind="stable")
    axis_lo, axis_hi = 1.0, float(k)

    # vertical budget: axis at 0, connector bars below it, then name elbows
    bar_step = 0.18
    bars_top = -0.22
    names_top = bars_top - bar_step * max(len(groups), 1) - 0.25
    name_step = 0.32
    n_left = (k + 1) // 2
    n_right = k - n_left
    y_floor = names_top - name_step * max(n_left, n_right)

    fig = Figure(figsize=(max(6.0, 0.85 * k + 3.0), 1.8 + 0.32 * k + 0.2 * len(groups)))
    FigureCanvasSVG(fig)
    ax = fig.add_subplot(111)
    ax.set_axis_off()
    side_margin = max(2.0, 0.22 * k)
    ax.set_xlim(axis_lo - side_margin, axis_hi + side_margin)
    ax.set_ylim(y_floor - 0.3, 1.35)

    line_kw = {"color": "black", "linewidth": 1.0, "solid_capstyle": "butt"}
    ax.plot([axis_lo, axis_hi], [0, 0], **line_kw)
    for tick in range(1, k + 1):
        ax.plot([tick, tick], [0, 0.12], **line_kw)
        ax.text(tick, 0.2, str(tick), ha="center", va="bottom", fontsize=9)

    # scale bar showing one critical-difference length
    cd_y = 0.85
    cd_end = min(axis_lo + cd, axis_hi)
    ax.plot([axis_lo, cd_end], [cd_y, cd_y], **line_kw)
    for xx in (axis_lo, cd_end):
        ax.plot([xx, xx], [cd_y - 0.06, cd_y + 0.06], **line_kw)
    ax.text((axis_lo + cd_end) / 2.0, cd_y + 0.12, f"CD = {cd:g}", ha="center", va="bottom", fontsize=9)

    for level, group in enumerate(groups):
        gy = bars_top - bar_step * level
        lo = float(ranks[list(group)].min())
        hi = float(ranks[list(group)].max())
        pad = 0.04
        ax.plot(
            [lo - pad, hi + pad],
            [gy, gy],
            color="black",
            linewidth=3.2,
            solid_capstyle="round",
        )

    # names fan out to the sides, best model topmost on the left
    for position, model_index in enumerate(order):
        rank = float(ranks[model_index])
        label = str(model_names[model_index])
        on_left = position < n_left
        row = position if on_left else position - n_left
        y_name = names_top - name_step * row if on_left else names_top - name_step * (n_right - 1 - row)
        x_end = axis_lo - side_margin * 0.9 if on_left else axis_hi + side_margin * 0.9
        ax.plot([rank, rank], [0, y_name], **line_kw)
        ax.plot([rank, x_end], [y_name, y_name], **line_kw)
        ax.text(
            x_end,
            y_name + 0.05,
            label,
            ha="right" if on_left else "left",
            va="bottom",
            fontsize=10,
        )
        ax.plot([rank], [0], marker="o", markersize=3.5, color="black")

    if title:
        ax.text((axis_lo + axis_hi) / 2.0, 1.25, title, ha="center", va="top", fontsize=11)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # plain text plus a fixed hashsalt and no date stamp: identical inputs
    # must produce byte-identical SVGs, whatever process renders them
    with mpl.rc_context({"svg.fonttype": "none", "svg.hashsalt": "streamrank"}):
        fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    logger.info("wrote diagram with %d group connector(s) to %s", len(groups), path)
    return path


def _fmt_score(value: float, diverged: bool) -> str:
    if diverged:
        return "diverged"
    return f"{value:.6g}"


def _fmt_rank(value: float) -> str:
    return f"{value:g}"


def _score_table(archive: ResultsArchive) -> list[str]:
    matrix = archive.score_matrix
    ranking = archive.ranking
    rank_lookup = {}
    if ranking is not None:
        for j, dataset in enumerate(ranking.dataset_names):
            for i, model in enumerate(ranking.model_names):
                rank_lookup[(model, dataset)] = ranking.ranks[i, j]
    headers = ["Dataset"] + [display_name(m) for m in matrix.model_ids]
    lines = ["| " + " | ".join(headers) + " |", "|" + "---|" * len(headers)]
    for j, dataset in enumerate(matrix.dataset_ids):
        cells = [dataset]
        for i, model in enumerate(matrix.model_ids):
            text = _fmt_score(matrix.scores[i, j], bool(matrix.diverged[i, j]))
            rank = rank_lookup.get((model, dataset))
            if rank is not None:
                text += f" ({_fmt_rank(rank)})"
            cells.append(text)
        lines.append("| " + " | ".join(cells) + " |")
    if ranking is not None:
        cells = ["**Average rank**"]
        averages = {m: a for m, a in zip(ranking.model_names, ranking.average_ranks)}
        for model in matrix.model_ids:
            avg = averages.get(model)
            cells.append("n/a" if avg is None else f"**{_fmt_rank(avg)}**")
        lines.append("| " + " | ".join(cells) + " |")
    return lines


def _friedman_section(archive: ResultsArchive) -> list[str]:
    lines = ["## Overall significance", ""]
    if not archive.friedman:
        lines.append(
            "The rank-based test statistic is degenerate for this grid (rankings are "
            "identical across datasets or too few datasets survived), so no overall "
            "decision is reported."
        )
        related = [w for w in archive.warnings if "degenerate" in w]
        lines.extend(f"- {w}" for w in related)
        return lines
    first = archive.friedman[0]
    lines.append(
        f"Rank-based chi-squared statistic: **{first.chi2:.4f}** over "
        f"N={first.df2 // max(first.df1, 1) + 1} datasets and k={first.df1 + 1} models; "
        f"F-form correction: **{first.ff:.4f}** with df1={first.df1}, df2={first.df2}."
    )
    lines.append("")
    for result in archive.friedman:
        relation = ">" if result.reject else "<="
        verdict = (
            "**reject** the hypothesis that all models perform alike"
            if result.reject
            else "**retain** the hypothesis that all models perform alike"
        )
        lines.append(
            f"- At alpha={result.alpha:g}: critical value {result.critical_value:.4f} "
            f"({result.critical_mode} mode); F = {result.ff:.4f} {relation} "
            f"{result.critical_value:.4f}, so {verdict}."
        )
    return lines


def _nemenyi_section(archive: ResultsArchive) -> list[str]:
    nemenyi = archive.nemenyi
    if nemenyi is None:
        return ["## Pairwise comparison", "", "No pairwise results stored."]
    names = [display_name(m) for m in nemenyi.model_names]
    k = len(names)
    lines = ["## Pairwise comparison", ""]
    alphas = sorted(nemenyi.cd)
    for alpha in alphas:
        lines.append(f"- Critical difference at alpha={alpha:g}: **{nemenyi.cd[alpha]:.4f}**")
    lines.append("")
    lines.append("Average-rank differences (absolute):")
    lines.append("")
    lines.append("| | " + " | ".join(names) + " |")
    lines.append("|" + "---|" * (k + 1))
    for i in range(k):
        cells = [names[i]]
        cells.extend("." if i == j else f"{nemenyi.diffs[i, j]:.4g}" for j in range(k))
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    lines.append("Pairwise verdicts:")
    lines.append("")
    for i in range(k):
        for j in range(i + 1, k):
            holds = [alpha for alpha in alphas if nemenyi.verdicts[alpha][i, j]]
            if len(holds) == len(alphas):
                word = "significant at " + " and ".join(f"alpha={a:g}" for a in alphas)
            elif holds:
                word = "significant at " + " and ".join(f"alpha={a:g}" for a in holds) + " only"
            else:
                word = "not significant at any tested alpha"
            lines.append(
                f"- {names[i]} vs {names[j]}: rank difference {nemenyi.diffs[i, j]:.4g}, {word}."
            )
    return lines


def _divergence_section(archive: ResultsArchive) -> list[str]:
    matrix = archive.score_matrix
    cells = [
        (matrix.model_ids[i], matrix.dataset_ids[j])
        for i in range(len(matrix.model_ids))
        for j in range(len(matrix.dataset_ids))
        if matrix.diverged[i, j]
    ]
    diverged_traces = [t for t in archive.traces if t.diverged]
    if not cells and not diverged_traces:
        return []
    lines = ["## Divergence", ""]
    if cells:
        lines.append("Cells where every repetition diverged (excluded from ranking):")
        lines.extend(f"- {display_name(m)} on {d}" for m, d in cells)
    if diverged_traces:
        lines.append(
            f"{len(diverged_traces)} of {len(archive.traces)} repetitions diverged before "
            "completing their batch budget."
        )
    return lines


def render_report(archive: ResultsArchive) -> str:
    """Markdown summary of one archived run. Refuses inconsistent archives."""
    verify_integrity(archive)
    name = archive.config.get("name", "run")
    lines = [
        f"# Benchmark report: {name}",
        "",
        f"Generated by streamrank {archive.version} (run recorded {archive.created_at}).",
        "",
        "## Scores",
        "",
        "Early-stream mean squared error, averaged over folds, seeds, and the first "
        f"{archive.config.get('protocol', {}).get('k_batches', '?')} mini-batches; "
        "per-dataset fractional rank in parentheses (1 is best).",
        "",
    ]
    lines.extend(_score_table(archive))
    lines.append("")
    lines.extend(_friedman_section(archive))
    lines.append("")
    lines.extend(_nemenyi_section(archive))
    divergence = _divergence_section(archive)
    if divergence:
        lines.append("")
        lines.extend(divergence)
    other_warnings = [w for w in archive.warnings if "degenerate" not in w]
    if other_warnings:
        lines.extend(["", "## Warnings", ""])
        lines.extend(f"- {w}" for w in other_warnings)
    return "\n".join(lines) + "\n"


def write_report_files(archive: ResultsArchive, directory: str | Path) -> dict[str, Path]:
    """Write the markdown report, the score grid CSV, and one diagram per alpha."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {}

    report_path = directory / "report.md"
    report_path.write_text(render_report(archive), encoding="utf-8")
    outputs["report"] = report_path

    scores_path = directory / "scores.csv"
    archive.score_matrix.to_csv(scores_path)
    outputs["scores"] = scores_path

    if archive.ranking is not None and archive.nemenyi is not None:
        labels = [display_name(m) for m in archive.ranking.model_names]
        for alpha, cd in sorted(archive.nemenyi.cd.items()):
            tag = f"{alpha:g}".replace(".", "_")
            diagram_path = directory / f"cd_diagram_alpha_{tag}.svg"
            cd_diagram(
                archive.ranking.average_ranks,
                labels,
                cd,
                diagram_path,
                title=f"Average ranks (CD at alpha={alpha:g})",
            )
            outputs[f"diagram_{alpha:g}"] = diagram_path
    return outputs
