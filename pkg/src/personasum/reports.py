"""Plain-text table rendering for filter, metric, critique, and agreement results."""

from __future__ import annotations

from typing import Mapping, Sequence

from personasum.critic import CritiqueTable
from personasum.filtering import FilterReport

METRIC_COLUMNS = ("rouge1", "rouge2", "rougeL", "meteor", "bleu",
                  "bert_prec", "bert_rec", "bert_f1")
METRIC_HEADERS = ("Rouge1", "Rouge2", "RougeL", "Meteor", "Bleu",
                  "BERT-Prec", "BERT-Rec", "BERT-F1")
CRITIQUE_COLUMNS = ("rel", "cov", "imp", "qlt", "gds")
CRITIQUE_HEADERS = ("Rel", "Cov", "Imp", "Qlt", "Gds")

FILTER_STEP_LABELS = {
    "special_chars": "step 1: markup / special characters",
    "incomplete": "step 2: incomplete summaries",
    "conflict": "step 3: cross-persona near-duplicates",
    "hallucination": "step 4: ungrounded numbers or terms",
}


def _render(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = []
    lines.append("  ".join(h.ljust(widths[i]) if i == 0 else h.rjust(widths[i])
                           for i, h in enumerate(headers)))
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                               for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"


def _pct(value: float | None, digits: int = 1) -> str:
    if value is None:
        return "-"
    return f"{100.0 * value:.{digits}f}"


def render_filter_report(report: FilterReport) -> str:
    """Step-by-step removal table: counts and percentages of the pre-filter pool."""
    rows = []
    for step in report.steps:
        label = FILTER_STEP_LABELS.get(step.name, step.name)
        rows.append([label, str(step.removed_count), f"{step.removed_pct:.2f}"])
    rows.append(["overall", str(report.pre_count - report.kept_count),
                 f"{report.overall_removed_pct:.2f}"])
    text = _render(["filtering step", "removed", "% of corpus"], rows)
    if report.exhaustive and report.exhaustive_flags:
        extra_rows = [[key, ", ".join(flags)]
                      for key, flags in sorted(report.exhaustive_flags.items())]
        text += "\nadditional flags on removed records (exhaustive):\n"
        text += _render(["record", "also trips"], extra_rows)
    return text


def render_metric_table(
    rows: Mapping[str, Mapping[str, float]],
    label_header: str = "model",
) -> str:
    """Metric means as percentages, one row per label, fixed column order."""
    body = []
    for label, values in rows.items():
        body.append([label] + [_pct(values.get(col)) for col in METRIC_COLUMNS])
    return _render([label_header, *METRIC_HEADERS], body)


def render_corpus_metrics(overall: Mapping[str, float],
                          per_persona: Mapping[str, Mapping[str, float]],
                          label: str = "candidate") -> str:
    """Overall row plus a per-persona breakdown."""
    text = render_metric_table({label: overall})
    if per_persona:
        rows = dict(per_persona)
        rows["average"] = overall
        text += "\nby persona:\n" + render_metric_table(rows, label_header="persona")
    return text


def render_critique_table(table: CritiqueTable, label_header: str = "persona") -> str:
    """Judge score means (already on the 0-100 scale) to one decimal."""
    body = []
    for label, values in table.rows.items():
        body.append([label] + [f"{values[col]:.1f}" for col in CRITIQUE_COLUMNS])
    return _render([label_header, *CRITIQUE_HEADERS], body)


def render_agreement_report(stats: Mapping[str, object]) -> str:
    lines = []
    for key in sorted(stats):
        value = stats[key]
        if isinstance(value, float):
            lines.append(f"{key}: {value:.4f}")
        elif isinstance(value, Mapping):
            inner = ", ".join(f"{k}={v:.2f}" if isinstance(v, float) else f"{k}={v}"
                              for k, v in sorted(value.items()))
            lines.append(f"{key}: {inner}")
        else:
            lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"
