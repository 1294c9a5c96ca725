"""Report rendering: aligned text tables and machine-readable JSON."""

from __future__ import annotations

from .metrics import MetricsReport


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{value * 100:.2f}%"


def _table_rows(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    def fmt(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    ruler = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(header), ruler] + [fmt(r) for r in rows])


def render_report(report: MetricsReport, fmt: str = "table") -> str:
    """Render a report; "json" output reloads to an equal report."""
    if fmt == "json":
        return report.to_json()
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}")

    counts = report.counts
    lines = []
    if report.task == "obstruction":
        lines.append("Obstruction attack detection")
        lines.append(
            _table_rows(
                ["method", "recognition accuracy", "mIoU", "detection accuracy"],
                [[
                    report.method,
                    _pct(report.key_object_recognition_accuracy),
                    _pct(report.segmentation_miou),
                    _pct(report.accuracy),
                ]],
            )
        )
    else:
        lines.append("Information manipulation attack detection")
        lines.append(
            _table_rows(
                ["method", "accuracy", "precision", "recall"],
                [[report.method, _pct(report.accuracy), _pct(report.precision), _pct(report.recall)]],
            )
        )
    lines.append("")
    lines.append(
        f"samples: {counts.total}  TP {counts.tp}  FP {counts.fp}  TN {counts.tn}  FN {counts.fn}"
    )
    lines.append(f"precision: {_pct(report.precision)}  recall: {_pct(report.recall)}")
    if report.not_found_rate is not None:
        lines.append(f"key object not found: {_pct(report.not_found_rate)} of matched queries")
    if report.no_verdict_count:
        lines.append(f"undecodable transcripts: {report.no_verdict_count}")
    if report.partial:
        lines.append("PARTIAL RUN: a backend outage aborted the evaluation early")
    config_text = " ".join(f"{k}={v}" for k, v in sorted(report.config.items()))
    lines.append(f"config: {config_text}")
    if report.fixture_digest:
        lines.append(f"fixtures: sha256:{report.fixture_digest}")
    return "\n".join(lines)


def parse_report(text: str) -> MetricsReport:
    """Reload the machine-readable form produced by render_report(..., "json")."""
    return MetricsReport.from_json(text)
