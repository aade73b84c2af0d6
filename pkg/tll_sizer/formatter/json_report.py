# tll_sizer/formatter/json_report.py
from typing import Optional

from ..utils import dumps_canonical
from .formatter import BaseReportFormatter


class JsonReportFormatter(BaseReportFormatter):
    """Canonical JSON (sorted keys, round-trip floats); the title is ignored."""

    def format_report(self, title: Optional[str] = None) -> str:
        return dumps_canonical(self.report)
