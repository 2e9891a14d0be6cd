"""Static HTML gallery report and matplotlib figures for the report path.

The gallery is a self-contained page with baseline and reranked grids
side by side; images are referenced by store-relative paths so the file
opens offline straight out of the store directory.
"""

from __future__ import annotations

import html
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .corpus import Label
from .errors import InvalidInput
from .evaluation import EvalReport
from .reranker import RankedList

_PAGE_STYLE = """
body { font-family: sans-serif; margin: 1.5rem; background: #fafafa; }
h1 { font-size: 1.3rem; } h2 { font-size: 1.05rem; }
.columns { display: flex; gap: 2rem; align-items: flex-start; }
.grid { display: flex; flex-wrap: wrap; gap: 10px; flex: 1; }
figure { margin: 0; width: 150px; background: #fff; border: 1px solid #ddd;
         border-radius: 4px; padding: 6px; }
figure img { width: 100%; height: 110px; object-fit: cover; }
figcaption { font-size: 0.72rem; color: #333; margin-top: 4px; }
.badge { display: inline-block; padding: 0 5px; border-radius: 3px;
         font-size: 0.68rem; margin-left: 3px; color: #fff; }
.badge.symbolic { background: #b36b00; }
.badge.relevant { background: #2e7d32; }
.badge.irrelevant { background: #b71c1c; }
.badge.difficult { background: #555; }
.empty { color: #777; font-style: italic; }
"""


def _figure_html(item, record, label: Label | None, symbolic: bool, href: str) -> str:
    badges = ""
    if symbolic:
        badges += '<span class="badge symbolic">symbolic</span>'
    if label is not None:
        badges += f'<span class="badge {label.value}">{label.value}</span>'
    caption = f"#{item.original_rank} &rarr; #{item.new_rank}{badges}"
    alt = html.escape(record.alt_text or record.filename)
    return (
        f'<figure><img src="{html.escape(href, quote=True)}" alt="{alt}">'
        f"<figcaption>{caption}</figcaption></figure>"
    )


def html_report(query, baseline: RankedList, reranked: RankedList, labels: dict,
                verdicts: dict, records_by_id: dict, blob_href) -> str:
    """Render the side-by-side gallery; lists must rank the same id set."""
    if set(baseline.ids()) != set(reranked.ids()):
        raise InvalidInput("baseline and reranked lists rank different id sets")

    def grid(ranked: RankedList) -> str:
        if not ranked.items:
            return '<p class="empty">No images for this query.</p>'
        figures = []
        for item in ranked.items:
            record = records_by_id[item.image_id]
            verdict = verdicts.get(item.image_id)
            figures.append(_figure_html(
                item, record,
                labels.get(item.image_id),
                bool(verdict.symbolic) if verdict is not None else False,
                blob_href(item.image_id),
            ))
        return '<div class="grid">' + "".join(figures) + "</div>"

    title = html.escape(f"Reranking report: {query.text}")
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>{_PAGE_STYLE}</style>
</head>
<body>
<h1>{title}</h1>
<p>{len(baseline.items)} images. Captions show text rank &rarr; reranked position.</p>
<div class="columns">
<section><h2>Text-search order</h2>{grid(baseline)}</section>
<section><h2>Reranked order</h2>{grid(reranked)}</section>
</div>
</body>
</html>
"""


def save_precision_curve_figure(path: Path | str, curves: dict[str, Sequence[tuple[int, float]]],
                                title: str) -> None:
    """Precision@k curves (one line per ranking) to a PNG file."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=110)
    for name, curve in curves.items():
        ks = [k for k, _ in curve]
        ps = [p for _, p in curve]
        ax.plot(ks, ps, label=name, linewidth=1.6)
    ax.set_xlabel("k")
    ax.set_ylabel("precision@k")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_metric_summary_figure(path: Path | str, report: EvalReport, title: str) -> None:
    """Bar chart of metric means with sample-std error bars."""
    names = sorted(report.metrics)
    means = [report.metrics[n].mean for n in names]
    stds = [report.metrics[n].std or 0.0 for n in names]
    fig, ax = plt.subplots(figsize=(7.2, 4.0), dpi=110)
    positions = range(len(names))
    ax.bar(positions, means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("mean over folds")
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_rank_shift_figure(path: Path | str, reranked: RankedList, title: str) -> None:
    """Scatter of original vs new rank; the identity line is the baseline."""
    fig, ax = plt.subplots(figsize=(5.2, 5.0), dpi=110)
    xs = [item.original_rank for item in reranked.items]
    ys = [item.new_rank for item in reranked.items]
    n = max(len(reranked.items), 1)
    ax.plot([1, n], [1, n], color="#999", linewidth=1.0, linestyle="--", label="no change")
    ax.scatter(xs, ys, s=12, alpha=0.7, color="#a85548")
    ax.set_xlabel("original text rank")
    ax.set_ylabel("new rank")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_csv(path: Path | str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
