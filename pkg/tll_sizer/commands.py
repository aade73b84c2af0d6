# tll_sizer/commands.py
"""Pipeline glue behind every subcommand.

Each ``cmd_*`` takes a validated RunConfig, writes its artifacts under
``cfg.output_dir`` and returns ``(exit_code, report)``; ``main`` renders the
report with the configured formatter.
"""
import logging
import os
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .cpwa import (GridCPWA, build_grid_cpwa, enumerate_pieces, grid_distance_oracle, make_partition,
                   sup_error)
from .dynamics import (Controller, deviation_check, estimate_bounds, expert_controller, invariance_check,
                       measure_lipschitz, simulate)
from .errors import ArtifactError, ConfigError
from .formatter.dot_formatter import DotFormatter
from .run_config import RunConfig
from .simrel import FiniteTransitionSystem, check_ad_sim, quantize_embedding
from .sizing import (SizingReport, SystemBounds, derive_tau_eta, mu_inequality, region_bound,
                     size_report)
from .tll import ReluNetwork, TLLNetwork, from_pieces, lower_to_relu, relu_eval, tll_eval, write_flat_weights
from .utils import halton_points, read_json, write_csv, write_json

logger = logging.getLogger(__name__)

CommandResult = Tuple[int, Dict[str, Any]]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# Published pendulum sizing table: mu, delta, tau, eta, N
REFERENCE_ROWS = (
    (0.35, 0.8694, 0.0098, 0.583, 235),
    (0.30, 0.5287, 0.0083, 0.500, 320),
    (0.25, 0.3039, 0.0069, 0.417, 460),
    (0.20, 0.1610, 0.0056, 0.334, 720),
    (0.15, 0.0749, 0.0042, 0.250, 1280),
    (0.10, 0.0275, 0.0028, 0.167, 2880),
)
REFERENCE_TAU_DECIMALS = 4
REFERENCE_ETA_DECIMALS = 3
REFERENCE_K_VF = 59.6

RELU_EQUIVALENCE_TOL = 1e-6
SUP_ERROR_SLACK = 1e-9


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


# --- size ---

def _sizing(cfg: RunConfig) -> SizingReport:
    return size_report(cfg.system_bounds(), cfg.domain(), mu_override=cfg.mu, rounding=cfg.rounding)


def cmd_size(cfg: RunConfig) -> CommandResult:
    cfg.validate(require_sizing=True)
    report = _sizing(cfg).to_dict()
    write_json(_out(cfg, 'sizing_report.json'), report)
    return EXIT_OK, report


# --- reference-table ---

def _within_printed(value: float, printed: float, decimals: int) -> bool:
    return abs(value - printed) <= 10.0 ** (-decimals) + 1e-12


def cmd_reference_table(cfg: RunConfig) -> CommandResult:
    """Recomputes the published pendulum table and marks every cell as matching or not."""
    cfg.validate()
    if cfg.system == 'pendulum':
        sampled = estimate_bounds(cfg.plant(), cfg.bound_grid, cfg.k_cont, safety=cfg.safety)
        k_x, k_u = sampled.k_x, sampled.k_u
    else:
        k_x, k_u = float(cfg.bounds['k_x']), float(cfg.bounds['k_u'])
    domain = cfg.domain()

    rows: List[Dict[str, Any]] = []
    csv_rows = []
    all_match = True
    for mu, delta, tau_ref, eta_ref, n_ref in REFERENCE_ROWS:
        bounds = SystemBounds(k_x=k_x, k_u=k_u, k_vf=REFERENCE_K_VF, k_cont=cfg.k_cont, delta=delta)
        tau, eta = derive_tau_eta(mu, bounds)
        n_regions = region_bound(domain.n, domain.m, domain.ext, min(eta, domain.ext),
                                 rounding=cfg.table_rounding)
        g_mu = mu_inequality(mu, bounds)
        tau_ok = _within_printed(tau, tau_ref, REFERENCE_TAU_DECIMALS)
        eta_ok = _within_printed(eta, eta_ref, REFERENCE_ETA_DECIMALS)
        n_ok = n_regions == n_ref
        delta_ok = g_mu < delta
        all_match = all_match and tau_ok and eta_ok and n_ok and delta_ok
        if not (tau_ok and eta_ok and n_ok):
            logger.warning(f"Row mu={mu}: tau {tau:.6g} vs {tau_ref}, eta {eta:.6g} vs {eta_ref}, "
                           f"N {n_regions} vs {n_ref}")
        rows.append({'mu': mu, 'delta': delta, 'tau': tau, 'tau_ref': tau_ref, 'tau_match': tau_ok,
                     'eta': eta, 'eta_ref': eta_ref, 'eta_match': eta_ok, 'N': n_regions, 'N_ref': n_ref,
                     'N_match': n_ok, 'g_mu': g_mu, 'delta_ok': delta_ok})
        csv_rows.append([mu, delta, tau, tau_ref, int(tau_ok), eta, eta_ref, int(eta_ok),
                         n_regions, n_ref, int(n_ok), g_mu, int(delta_ok)])

    header = ['mu', 'delta', 'tau', 'tau_ref', 'tau_match', 'eta', 'eta_ref', 'eta_match',
              'N', 'N_ref', 'N_match', 'g_mu', 'delta_ok']
    write_csv(_out(cfg, 'reference_table.csv'), header, np.array(csv_rows, dtype=float))
    report = {
        'kind': 'reference_table',
        'all_match': all_match,
        'k_cont': cfg.k_cont,
        'k_vf': REFERENCE_K_VF,
        'k_x': k_x,
        'k_u': k_u,
        'rounding': cfg.table_rounding,
        'derived_constants': ['k_cont', 'k_vf'],
        'rows': rows,
    }
    return (EXIT_OK if all_match else EXIT_CHECK_FAILED), report


# --- build ---

def _resolve_eta(cfg: RunConfig) -> Tuple[float, Optional[SizingReport]]:
    """Nominal pitch from --eta, or from the sizing chain."""
    report = None
    if cfg.delta is not None or cfg.mu is not None:
        cfg.validate(require_sizing=True)
        report = _sizing(cfg)
    if cfg.eta is not None:
        return float(cfg.eta), report
    if report is None:
        raise ConfigError("build needs --eta, --delta or --mu")
    return report.eta, report


def _make_oracle(cfg: RunConfig, grid_partition) -> Controller:
    if cfg.oracle == 'grid_distance':
        return grid_distance_oracle(grid_partition, cfg.k_cont, cfg.control_box())
    if cfg.system != 'pendulum':
        raise ConfigError("The expert oracle needs the built-in pendulum system")
    return expert_controller(cfg.pendulum, tuple(cfg.gains), cfg.control_box())


def cmd_build(cfg: RunConfig) -> CommandResult:
    cfg.validate()
    domain = cfg.domain()
    nominal_eta, sizing = _resolve_eta(cfg)
    eta = nominal_eta * cfg.eta_scale
    if eta > domain.ext:
        logger.info(f"Scaled eta={eta:.6g} exceeds ext(X)={domain.ext}; using one cell per axis")
        eta = domain.ext

    written: List[str] = []
    try:
        partition = make_partition(domain, eta, cfg.rho)
        oracle = _make_oracle(cfg, partition)
        grid = build_grid_cpwa(oracle, partition, cfg.control_box(), clamp=cfg.clamp)
        written.append(write_json(_out(cfg, 'grid_cpwa.json'), grid.to_dict()))

        report: Dict[str, Any] = {
            'kind': 'build_report',
            'oracle': cfg.oracle,
            'eta_nominal': nominal_eta,
            'eta_scale': cfg.eta_scale,
            'eta': eta,
            'rho': cfg.rho,
            'counts': list(partition.counts),
            'pitch': list(partition.pitch),
            'num_centers': partition.num_centers,
            'clamped_samples': grid.clamped_count,
            'region_bound': region_bound(domain.n, domain.m, domain.ext, eta, rounding=cfg.rounding),
            'sup_error': sup_error(grid, oracle, num_samples=cfg.sup_samples, seed=cfg.seed),
        }
        if sizing is not None:
            report['mu'] = sizing.mu
            report['sup_error_bound'] = sizing.mu / 3.0

        passed = True
        if domain.n <= 2:
            pieces = enumerate_pieces(grid)
            net = from_pieces(pieces, verify_samples=cfg.lattice_verify_samples, seed=cfg.seed)
            relu = lower_to_relu(net)
            written.append(write_json(_out(cfg, 'tll.json'), net.to_dict()))
            written.append(write_json(_out(cfg, 'relu.json'), relu.to_dict()))
            written.append(write_flat_weights(relu, _out(cfg, 'relu_weights.txt')))

            points = halton_points(domain, cfg.equivalence_samples, seed=cfg.seed)
            tll_values = tll_eval(net, points)
            tll_gap = float(np.max(np.abs(tll_values - grid(points))))
            relu_gap = float(np.max(np.abs(relu_eval(relu, points) - tll_values)))
            passed = relu_gap <= RELU_EQUIVALENCE_TOL
            report.update({
                'num_pieces': len(pieces),
                'pieces_within_bound': len(pieces) <= report['region_bound'],
                'num_linear_fns': net.num_linear_fns,
                'num_selector_groups': net.num_selector_groups,
                'relu_layer_widths': list(relu.widths),
                'tll_cpwa_gap': tll_gap,
                'relu_tll_gap': relu_gap,
                'equivalence_samples': cfg.equivalence_samples,
            })
        else:
            logger.info(f"n={domain.n} > 2: writing the evaluation-only grid CPWA, no TLL synthesis")
        report['passed'] = passed
        written.append(write_json(_out(cfg, 'build_report.json'), report))
    except Exception:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        logger.debug(f"Removed {len(written)} partial artifacts after a failed build")
        raise
    return (EXIT_OK if passed else EXIT_CHECK_FAILED), report


# --- simulate ---

def load_controller(cfg: RunConfig, artifact: str) -> Controller:
    """Controller from an artifact file, dispatched on its kind; 'expert' gives the expert law."""
    if artifact == 'expert':
        if cfg.system != 'pendulum':
            raise ConfigError("The expert controller needs the built-in pendulum system")
        return expert_controller(cfg.pendulum, tuple(cfg.gains), cfg.control_box())
    data = read_json(artifact)
    kind = data.get('kind')
    if kind == 'grid_cpwa':
        return GridCPWA.from_dict(data)
    if kind == 'tll_network':
        net = TLLNetwork.from_dict(data)
        return lambda x: tll_eval(net, x)
    if kind == 'relu_network':
        relu = ReluNetwork.from_dict(data)
        return lambda x: relu_eval(relu, x)
    raise ArtifactError(f"Artifact {artifact} of kind '{kind}' is not a controller")


def cmd_simulate(cfg: RunConfig) -> CommandResult:
    cfg.validate()
    plant = cfg.plant()
    if plant is None:
        raise ConfigError("simulate needs the built-in pendulum system")
    artifact = cfg.artifact or _out(cfg, 'tll.json')
    controller = load_controller(cfg, artifact)
    target = cfg.target_box()

    entries = []
    for k, x0 in enumerate(cfg.x0):
        traj = simulate(plant, controller, x0, cfg.horizon, cfg.dt, hold=cfg.hold)
        csv_name = f'trajectory_{k}.csv'
        traj.to_csv(_out(cfg, csv_name))
        entered, entry_time = traj.enters_and_remains(target)
        logger.info(f"x0={list(x0)}: enters and remains={entered}, entry time={entry_time}")
        entries.append({'x0': list(x0), 'csv': csv_name, 'entered_and_remained': entered,
                        'entry_time': entry_time, 'final_state': [float(v) for v in traj.final_state]})

    report = {
        'kind': 'trajectory_summary',
        'artifact': 'expert' if artifact == 'expert' else os.path.basename(artifact),
        'horizon': cfg.horizon,
        'dt': cfg.dt,
        'hold': cfg.hold,
        'target': target.to_dict(),
        'all_entered': all(e['entered_and_remained'] for e in entries),
        'rows': entries,
    }
    write_json(_out(cfg, 'trajectories.json'), report)
    return EXIT_OK, report


# --- verify ---

def _check(value: float, bound: Optional[float], asserted: bool) -> Dict[str, Any]:
    passed = None if bound is None else bool(value <= bound)
    return {'value': value, 'bound': bound, 'passed': passed, 'asserted': asserted and bound is not None}


def _export_system(cfg: RunConfig, system: FiniteTransitionSystem, name: str,
                   highlight: Optional[set] = None) -> None:
    write_json(_out(cfg, f'{name}.json'), system.to_dict())
    with open(_out(cfg, f'{name}.dot'), 'w', encoding='utf-8') as f:
        f.write(DotFormatter(system, name=name, highlight=highlight).format_graph())


def cmd_verify(cfg: RunConfig) -> CommandResult:
    cfg.validate(require_sizing=True)
    sizing = _sizing(cfg)
    mu, tau, delta = sizing.mu, sizing.tau, cfg.delta
    artifact = cfg.artifact or _out(cfg, 'grid_cpwa.json')
    grid = GridCPWA.from_dict(read_json(artifact, expected_kind='grid_cpwa'))
    domain = grid.partition.domain
    oracle = _make_oracle(cfg, grid.partition)

    checks: Dict[str, Any] = {}
    checks['sup_error'] = _check(sup_error(grid, oracle, num_samples=cfg.sup_samples, seed=cfg.seed),
                                 mu / 3.0 + SUP_ERROR_SLACK, asserted=True)
    lipschitz = measure_lipschitz(oracle, domain)
    if lipschitz > cfg.k_cont:
        logger.warning(f"Measured oracle Lipschitz constant {lipschitz:.4g} exceeds K_cont={cfg.k_cont}")

    plant = cfg.plant()
    if plant is not None:
        starts = halton_points(domain, cfg.deviation_samples, seed=cfg.seed)
        deviation = deviation_check(plant, oracle, grid, tau, starts)
        checks['deviation'] = dict(_check(deviation.max_deviation, delta, asserted=True),
                                   max_control_gap=deviation.max_control_gap,
                                   max_excursion=deviation.max_excursion,
                                   worst_initial=list(deviation.worst_initial))
        if delta is not None and delta < domain.ext / 2:
            invariance = invariance_check(plant, oracle, domain, delta, tau,
                                          samples=cfg.invariance_samples, seed=cfg.seed)
            checks['invariance'] = dict(invariance.to_dict(), asserted=False)
        else:
            logger.info("Skipping the invariance check: needs delta in (0, ext/2)")
        if cfg.check_sim:
            if delta is None:
                logger.warning("Skipping the simulation-relation check: it needs --delta")
            else:
                S = quantize_embedding(plant, grid, tau, cfg.quantize_pitch)
                T = quantize_embedding(plant, oracle, tau, cfg.quantize_pitch)
                result = check_ad_sim(S, T, delta, strict_labels=cfg.strict_labels)
                highlight = {result.counterexample} if result.counterexample is not None else None
                _export_system(cfg, S, 'embedding_cpwa', highlight)
                _export_system(cfg, T, 'embedding_oracle')
                checks['simulation_relation'] = {'passed': result.success, 'asserted': False,
                                                 'counterexample': result.counterexample,
                                                 'deletions': len(result.trace)}
    else:
        logger.info("No plant model: only the sup-error check runs")

    passed = all(c['passed'] for c in checks.values() if c.get('asserted'))
    report = {
        'kind': 'verification_report',
        'artifact': os.path.basename(artifact),
        'oracle': cfg.oracle,
        'mu': mu,
        'tau': tau,
        'delta': delta,
        'eta': grid.partition.eta,
        'k_cont': cfg.k_cont,
        'measured_lipschitz': lipschitz,
        'passed': passed,
        'checks': checks,
    }
    write_json(_out(cfg, 'verification_report.json'), report)
    return (EXIT_OK if passed else EXIT_CHECK_FAILED), report


# --- check-sim ---

def cmd_check_sim(cfg: RunConfig) -> CommandResult:
    cfg.validate()
    if not cfg.s_file or not cfg.t_file:
        raise ConfigError("check-sim needs --s-file and --t-file")
    if cfg.delta is None:
        raise ConfigError("check-sim needs --delta")
    S = FiniteTransitionSystem.from_dict(read_json(cfg.s_file, expected_kind='transition_system'))
    T = FiniteTransitionSystem.from_dict(read_json(cfg.t_file, expected_kind='transition_system'))
    result = check_ad_sim(S, T, cfg.delta, strict_labels=cfg.strict_labels)

    highlight = {result.counterexample} if result.counterexample is not None else None
    with open(_out(cfg, 'S.dot'), 'w', encoding='utf-8') as f:
        f.write(DotFormatter(S, name='S', highlight=highlight).format_graph())
    with open(_out(cfg, 'T.dot'), 'w', encoding='utf-8') as f:
        f.write(DotFormatter(T, name='T').format_graph())

    report = dict(result.to_dict(), kind='simulation_result', delta=cfg.delta,
                  strict_labels=cfg.strict_labels)
    write_json(_out(cfg, 'sim_result.json'), report)
    return (EXIT_OK if result.success else EXIT_CHECK_FAILED), report


COMMANDS: Dict[str, Callable[[RunConfig], CommandResult]] = {
    'size': cmd_size,
    'reference-table': cmd_reference_table,
    'build': cmd_build,
    'simulate': cmd_simulate,
    'verify': cmd_verify,
    'check-sim': cmd_check_sim,
}
