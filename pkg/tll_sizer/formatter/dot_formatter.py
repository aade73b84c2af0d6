# tll_sizer/formatter/dot_formatter.py
import re
from typing import Dict, List, Optional, Set, Tuple

from ..simrel import FiniteTransitionSystem


class DotFormatter:
    """Graphviz DOT rendering of a finite transition system."""
    def __init__(self, system: FiniteTransitionSystem, name: str = 'S',
                 highlight: Optional[Set[int]] = None):
        self.system = system
        self.name = name
        self.highlight = highlight or set()

    def _sanitize_id(self, text: str) -> str:
        """Make a string safe for use as a DOT identifier"""
        sanitized = re.sub(r'[^\w]', '_', text)
        if not sanitized or not sanitized[0].isalpha():
            sanitized = 'n' + sanitized
        return sanitized

    def _sanitize_label(self, text: str) -> str:
        return text.replace('\\', '\\\\').replace('"', '\\"')

    def _state_label(self, index: int) -> str:
        coords = ", ".join(f"{v:.4g}" for v in self.system.states[index])
        return self._sanitize_label(f"{index}: ({coords})")

    def format_graph(self) -> str:
        lines: List[str] = [f"digraph {self._sanitize_id(self.name)} {{", "    rankdir=LR;",
                            "    node [shape=circle, fontsize=10];"]
        for index in range(self.system.num_states):
            style = ', style=filled, fillcolor="#f96"' if index in self.highlight else ''
            lines.append(f'    s{index} [label="{self._state_label(index)}"{style}];')

        # merge parallel edges into one edge with a combined label
        edges: Dict[Tuple[int, int], List[str]] = {}
        for x, u, y in sorted(self.system.transitions):
            edges.setdefault((x, y), []).append(self.system.labels[u])
        for (x, y), labels in edges.items():
            label = ", ".join(labels)
            if len(label) > 24:
                label = label[:21] + "..."
            lines.append(f'    s{x} -> s{y} [label="{self._sanitize_label(label)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"
