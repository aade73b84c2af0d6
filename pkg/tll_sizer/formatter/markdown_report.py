# tll_sizer/formatter/markdown_report.py
from typing import Any, Dict, List, Optional

from .formatter import BaseReportFormatter


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "yes" if value else "**NO**"
    if isinstance(value, float):
        return f"{value:.6g}"
    if value is None:
        return "-"
    return str(value)


class MarkdownReportFormatter(BaseReportFormatter):
    """Human-readable Markdown: statistics block, optional table, nested sections."""

    def format_report(self, title: Optional[str] = None) -> str:
        kind = self.report.get('kind', 'report')
        heading = title or kind.replace('_', ' ').title()
        parts = [f"# {heading}", "", self.format_statistics()]

        rows = self._rows()
        if rows:
            parts += ["", self._format_table(rows)]

        for key, value in self.report.items():
            if isinstance(value, dict):
                parts += ["", f"## {key.replace('_', ' ').capitalize()}", "", self._format_section(value)]
            elif isinstance(value, list) and key != 'rows' and value and not isinstance(value[0], dict):
                parts += ["", f"**{key.replace('_', ' ').capitalize()}:** " + ", ".join(_cell(v) for v in value)]
        return "\n".join(parts).rstrip() + "\n"

    def _format_section(self, section: Dict[str, Any]) -> str:
        lines = []
        for key, value in section.items():
            if isinstance(value, dict):
                inner = ", ".join(f"{k}={_cell(v)}" for k, v in value.items()
                                  if not isinstance(v, (dict, list)))
                lines.append(f"- **{key}:** {inner}")
            elif isinstance(value, list):
                shown = ", ".join(_cell(v) for v in value[:8])
                suffix = ", ..." if len(value) > 8 else ""
                lines.append(f"- **{key}:** [{shown}{suffix}]")
            else:
                lines.append(f"- **{key}:** {_cell(value)}")
        return "\n".join(lines)

    def _format_table(self, rows: List[Dict[str, Any]]) -> str:
        columns = list(rows[0].keys())
        lines = ["| " + " | ".join(columns) + " |",
                 "|" + "|".join("---" for _ in columns) + "|"]
        for row in rows:
            lines.append("| " + " | ".join(_cell(row.get(c)) for c in columns) + " |")
        return "\n".join(lines)
