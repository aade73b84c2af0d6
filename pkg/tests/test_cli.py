import csv
import json
import os

import numpy as np
import pytest

from tll_sizer.main import main
from tll_sizer.simrel import FiniteTransitionSystem

SMALL = ['--sup-samples', '300', '--equivalence-samples', '300', '--lattice-verify-samples', '200']


def _load(out_dir, name):
    with open(os.path.join(out_dir, name), encoding='utf-8') as f:
        return json.load(f)


def _write_system(path, points, transitions, labels=('a',)):
    system = FiniteTransitionSystem(np.array(points, dtype=float), labels, frozenset(transitions))
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(system.to_dict(), f)
    return str(path)


# --- size ---

def test_size_with_mu_override(out_dir, capsys):
    assert main(['size', '--mu', '0.15', '--output-dir', out_dir, '--format', 'json']) == 0
    report = _load(out_dir, 'sizing_report.json')
    assert report['eta'] == pytest.approx(0.25)
    assert report['region_bound'] == 1280
    assert report['mu_source'] == 'override'
    assert json.loads(capsys.readouterr().out) == report


def test_size_tau(out_dir):
    assert main(['size', '--mu', '0.3', '--output-dir', out_dir]) == 0
    assert _load(out_dir, 'sizing_report.json')['tau'] == pytest.approx(0.3 / 35.76)


def test_size_solves_mu_from_delta(out_dir):
    assert main(['size', '--delta', '0.5', '--output-dir', out_dir]) == 0
    report = _load(out_dir, 'sizing_report.json')
    assert report['mu_source'] == 'solved'
    assert report['satisfies_margin'] is True


@pytest.mark.parametrize("extra", [[], ['--mu', '0.1', '--delta', '0.5'], ['--mu', '-0.1']])
def test_size_config_errors(out_dir, extra):
    assert main(['size', '--output-dir', out_dir] + extra) == 2


def test_size_is_deterministic(tmp_path):
    first, second = str(tmp_path / 'a'), str(tmp_path / 'b')
    assert main(['size', '--delta', '0.3', '--output-dir', first]) == 0
    assert main(['size', '--delta', '0.3', '--output-dir', second]) == 0
    with open(os.path.join(first, 'sizing_report.json'), 'rb') as a, \
            open(os.path.join(second, 'sizing_report.json'), 'rb') as b:
        assert a.read() == b.read()


def test_config_file(tmp_path, out_dir):
    good = tmp_path / 'run.json'
    good.write_text(json.dumps({'mu': 0.15}), encoding='utf-8')
    assert main(['size', '--config', str(good), '--output-dir', out_dir]) == 0
    assert _load(out_dir, 'sizing_report.json')['region_bound'] == 1280

    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps({'mu': 0.15, 'bogus': 1}), encoding='utf-8')
    assert main(['size', '--config', str(bad), '--output-dir', out_dir]) == 2
    assert main(['size', '--config', str(tmp_path / 'missing.json'), '--output-dir', out_dir]) == 2


def test_report_file(tmp_path, out_dir):
    target = tmp_path / 'report.md'
    assert main(['size', '--mu', '0.15', '--output-dir', out_dir, '-o', str(target)]) == 0
    assert target.read_text(encoding='utf-8').startswith('# Sizing Report')


def test_bounds_only_system(tmp_path, out_dir):
    run = tmp_path / 'bounds.json'
    run.write_text(json.dumps({'system': 'bounds', 'bounds': {'k_x': 55.8, 'k_u': 4.0, 'k_vf': 59.6}}),
                   encoding='utf-8')
    assert main(['size', '--config', str(run), '--mu', '0.15', '--output-dir', out_dir]) == 0
    assert _load(out_dir, 'sizing_report.json')['region_bound'] == 1280


# --- reference-table ---

def test_reference_table(tmp_path):
    first, second = str(tmp_path / 'a'), str(tmp_path / 'b')
    assert main(['reference-table', '--output-dir', first, '--format', 'json']) == 0
    assert main(['reference-table', '--output-dir', second, '--format', 'json']) == 0
    with open(os.path.join(first, 'reference_table.csv'), 'rb') as a, \
            open(os.path.join(second, 'reference_table.csv'), 'rb') as b:
        assert a.read() == b.read()
    with open(os.path.join(first, 'reference_table.csv'), encoding='utf-8') as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 6
    assert [int(float(r['N'])) for r in rows] == [235, 320, 460, 720, 1280, 2880]
    assert all(r['eta_match'] == '1' and r['tau_match'] == '1' for r in rows)


def test_reference_table_detects_a_wrong_kcont(out_dir, capsys):
    assert main(['reference-table', '--kcont', '0.2', '--output-dir', out_dir, '--format', 'json']) == 1
    report = json.loads(capsys.readouterr().out)
    assert report['all_match'] is False
    assert not any(row['eta_match'] for row in report['rows'])


# --- build ---

def test_build_from_eta(out_dir):
    assert main(['build', '--eta', '0.25', '--output-dir', out_dir] + SMALL) == 0
    report = _load(out_dir, 'build_report.json')
    assert report['counts'] == [8, 8]
    assert report['num_pieces'] == 372
    assert report['pieces_within_bound'] is True
    assert report['tll_cpwa_gap'] <= 1e-8
    assert report['relu_tll_gap'] <= 1e-6
    for name in ('grid_cpwa.json', 'tll.json', 'relu.json', 'relu_weights.txt'):
        assert os.path.exists(os.path.join(out_dir, name))


def test_build_needs_a_pitch(out_dir):
    assert main(['build', '--output-dir', out_dir] + SMALL) == 2


def test_build_sup_error_bound(out_dir):
    args = ['build', '--mu', '0.15', '--rho', '0.9', '--oracle', 'grid_distance', '--output-dir', out_dir]
    assert main(args + SMALL) == 0
    report = _load(out_dir, 'build_report.json')
    assert report['sup_error'] <= report['sup_error_bound']


# --- simulate ---

def test_simulate_expert(out_dir):
    assert main(['simulate', '--artifact', 'expert', '--dt', '0.005', '--output-dir', out_dir]) == 0
    summary = _load(out_dir, 'trajectories.json')
    assert summary['all_entered'] is True
    assert [row['x0'] for row in summary['rows']] == [[0.7, 0.5], [-0.4, 1.0]]
    assert os.path.exists(os.path.join(out_dir, 'trajectory_1.csv'))


def test_simulate_built_controllers(out_dir):
    assert main(['build', '--eta', '0.25', '--output-dir', out_dir] + SMALL) == 0
    assert main(['simulate', '--horizon', '0.5', '--dt', '0.01', '--x0', '0.2,0.1',
                 '--output-dir', out_dir]) == 0
    assert _load(out_dir, 'trajectories.json')['artifact'] == 'tll.json'
    grid = os.path.join(out_dir, 'grid_cpwa.json')
    assert main(['simulate', '--artifact', grid, '--horizon', '0.5', '--dt', '0.01',
                 '--output-dir', out_dir]) == 0
    assert len(_load(out_dir, 'trajectories.json')['rows']) == 2


@pytest.mark.parametrize("name", ['tll.json', 'relu.json'])
def test_built_controller_enters_and_remains_in_target(out_dir, name):
    assert main(['build', '--eta', '0.25', '--output-dir', out_dir] + SMALL) == 0
    artifact = os.path.join(out_dir, name)
    assert main(['simulate', '--artifact', artifact, '--dt', '0.005', '--output-dir', out_dir]) == 0
    summary = _load(out_dir, 'trajectories.json')
    assert summary['horizon'] == 10.0
    assert summary['all_entered'] is True
    assert [row['x0'] for row in summary['rows']] == [[0.7, 0.5], [-0.4, 1.0]]
    assert all(row['entry_time'] < 10.0 for row in summary['rows'])


def test_simulate_missing_artifact(out_dir):
    assert main(['simulate', '--artifact', os.path.join(out_dir, 'nope.json'), '--output-dir', out_dir]) == 3


# --- verify ---

def test_verify_passes_at_the_nominal_pitch(out_dir):
    common = ['--mu', '0.1', '--oracle', 'grid_distance', '--output-dir', out_dir]
    assert main(['build'] + common + SMALL) == 0
    assert main(['verify', '--sup-samples', '500', '--deviation-samples', '5'] + common) == 0
    report = _load(out_dir, 'verification_report.json')
    assert report['checks']['sup_error']['passed'] is True
    assert 'deviation' in report['checks']


def test_verify_fails_when_the_grid_is_coarsened(out_dir):
    common = ['--mu', '0.1', '--oracle', 'grid_distance', '--output-dir', out_dir]
    assert main(['build', '--eta-scale', '8'] + common + SMALL) == 0
    assert main(['verify', '--sup-samples', '500', '--deviation-samples', '5'] + common) == 1
    report = _load(out_dir, 'verification_report.json')
    assert report['passed'] is False
    assert report['checks']['sup_error']['passed'] is False


def test_verify_with_simulation_relation(out_dir):
    common = ['--delta', '0.0275', '--oracle', 'grid_distance', '--output-dir', out_dir]
    assert main(['build'] + common + SMALL) == 0
    assert main(['verify', '--sup-samples', '500', '--deviation-samples', '5', '--invariance-samples', '5',
                 '--check-sim', '--quantize-pitch', '0.5'] + common) == 0
    report = _load(out_dir, 'verification_report.json')
    assert report['checks']['deviation']['asserted'] is True
    assert 'simulation_relation' in report['checks']
    for name in ('embedding_cpwa.dot', 'embedding_oracle.dot', 'embedding_cpwa.json'):
        assert os.path.exists(os.path.join(out_dir, name))


# --- check-sim ---

def test_check_sim(tmp_path, out_dir):
    s_file = _write_system(tmp_path / 's.json', [[0.0], [1.0]], {(0, 0, 1), (1, 0, 1)})
    t_file = _write_system(tmp_path / 't.json', [[0.1], [1.1]], {(0, 0, 1), (1, 0, 1)})
    args = ['check-sim', '--s-file', s_file, '--t-file', t_file, '--output-dir', out_dir]
    assert main(args + ['--delta', '0.2']) == 0
    assert _load(out_dir, 'sim_result.json')['success'] is True
    assert os.path.exists(os.path.join(out_dir, 'S.dot'))

    assert main(args + ['--delta', '0.05']) == 1
    assert _load(out_dir, 'sim_result.json')['counterexample'] == 0
    assert main(args) == 2
