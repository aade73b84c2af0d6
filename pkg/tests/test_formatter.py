import json

import numpy as np

from tll_sizer.formatter.dot_formatter import DotFormatter
from tll_sizer.formatter.formatter import get_formatter
from tll_sizer.formatter.json_report import JsonReportFormatter
from tll_sizer.formatter.markdown_report import MarkdownReportFormatter
from tll_sizer.simrel import FiniteTransitionSystem

REPORT = {
    'kind': 'reference_table',
    'all_match': True,
    'k_x': 46.8123456789,
    'derived_constants': ['k_cont', 'k_vf'],
    'bounds': {'k_u': 4.0, 'delta': None},
    'rows': [{'mu': 0.35, 'N': 235, 'N_match': True},
             {'mu': 0.3, 'N': 321, 'N_match': False}],
}


def test_get_formatter():
    assert isinstance(get_formatter('markdown', REPORT), MarkdownReportFormatter)
    assert isinstance(get_formatter('JSON', REPORT), JsonReportFormatter)
    assert isinstance(get_formatter('html', REPORT), MarkdownReportFormatter)


def test_markdown_report():
    text = get_formatter('markdown', REPORT).format_report()
    lines = text.splitlines()
    assert lines[0] == '# Reference Table'
    assert '**K x:** 46.8123' in lines
    assert '| mu | N | N_match |' in lines
    assert '| 0.35 | 235 | yes |' in lines
    assert '| 0.3 | 321 | **NO** |' in lines
    assert '## Bounds' in lines
    assert '- **delta:** -' in lines
    assert '**Derived constants:** k_cont, k_vf' in lines
    assert text.endswith('\n')


def test_markdown_custom_title():
    text = MarkdownReportFormatter({'kind': 'sizing_report', 'mu': 0.15}).format_report(title='Sizing')
    assert text.startswith('# Sizing\n')


def test_json_report_is_canonical():
    text = get_formatter('json', REPORT).format_report()
    assert json.loads(text) == REPORT
    assert text.index('"all_match"') < text.index('"kind"')


def test_dot_export():
    system = FiniteTransitionSystem(np.array([[0.0, 0.0], [1.0, 0.5]]), ('a', 'b'),
                                    frozenset({(0, 0, 1), (0, 1, 1), (1, 0, 1)}))
    dot = DotFormatter(system, name='1-bad name', highlight={1}).format_graph()
    lines = dot.splitlines()
    assert lines[0] == 'digraph n1_bad_name {'
    assert lines[-1] == '}'
    assert '    s0 [label="0: (0, 0)"];' in lines
    assert any(line.startswith('    s1 [') and 'fillcolor' in line for line in lines)
    assert '    s0 -> s1 [label="a, b"];' in lines
    assert '    s1 -> s1 [label="a"];' in lines
    assert sum('->' in line for line in lines) == 2
