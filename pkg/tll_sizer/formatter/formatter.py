# tll_sizer/formatter/formatter.py
import logging
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


def format_statistics(stats: Dict[str, Any]) -> str:
    """Markdown bold-key lines for a flat dict of scalar statistics."""
    lines = []
    for key, value in stats.items():
        if isinstance(value, (dict, list, tuple)):
            continue
        label = key.replace('_', ' ').capitalize()
        if isinstance(value, float):
            value = f"{value:.6g}"
        lines.append(f"**{label}:** {value}")
    return "\n".join(lines)


class BaseReportFormatter:
    """Base class for rendering command reports (plain dicts) to text."""
    def __init__(self, report: Dict[str, Any]):
        if not isinstance(report, dict):
            raise TypeError("Report formatters expect a dict")
        self.report = report

    def format_report(self, title: Optional[str] = None) -> str:
        raise NotImplementedError

    def format_statistics(self) -> str:
        return format_statistics(self.report)

    def _rows(self) -> List[Dict[str, Any]]:
        rows = self.report.get('rows')
        return rows if isinstance(rows, list) else []


from .markdown_report import MarkdownReportFormatter
from .json_report import JsonReportFormatter


# Factory Function
def get_formatter(format_type: str, report: Dict[str, Any]) -> BaseReportFormatter:
    """Gets the appropriate formatter instance."""
    format_type_lower = (format_type or '').lower()
    if format_type_lower == 'markdown':
        return MarkdownReportFormatter(report)
    elif format_type_lower == 'json':
        return JsonReportFormatter(report)
    logger.warning(f"Unknown format type '{format_type}'. Falling back to markdown.")
    return MarkdownReportFormatter(report)
