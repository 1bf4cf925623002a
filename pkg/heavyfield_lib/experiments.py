"""
Experiment runners

Each runner fans its jobs out over a process pool when more than one worker
is requested. Pool.imap returns job results in submission order, and jobs are
submitted in sorted key order, so reports do not depend on scheduling.
"""

import logging
import multiprocessing as mp
from contextlib import contextmanager
from dataclasses import replace
from typing import Any, Callable, Dict, Iterable, List

import numpy as np

from .analysis import fit_loglog, pachpatte_envelope, risk_decrease_probe
from .config import ExperimentConfig
from .coupling import CoupledResult, chaos_experiment, coupled_runs
from .datagen import make_pool, pool_risk
from .dynamics import run_training
from .landscape import align_neurons, build_path_2L, dropout_error, knot_gap, linear_path, random_dropout_sets, risk_along_path
from .models import DropoutSpec, Params3L
from .reporter import Measurement, Reporter

logger = logging.getLogger(__name__)


@contextmanager
def job_runner(jobs: int):
    """Ordered map over job arguments, in-process or across worker processes"""
    if jobs <= 1:
        yield map
        return
    with mp.Pool(processes=jobs) as pool:
        yield pool.imap


def _run(reporter: Reporter, job: Callable, args: Iterable, jobs: int) -> List[Any]:
    outputs = []
    with job_runner(jobs) as runner:
        for rows, extra in runner(job, list(args)):
            reporter.write(rows)
            outputs.append(extra)
    return outputs


def _output_layer(W) -> np.ndarray:
    return W.w3 if isinstance(W, Params3L) else W.w2


# train

def train_job(args):
    cfg, width, seed = args
    traj, risks = run_training(cfg, width, seed)
    rows = [Measurement('train', 'risk', float(r), width, cfg.hyper.eps, seed, float(t))
            for t, r in zip(traj.times, risks)]
    extra = {'width': width, 'seed': seed, 'final_risk': float(risks[-1])}
    if len(risks) > 1:
        probe = risk_decrease_probe(risks)
        net = cfg.network.build(cfg.model)
        T = float(traj.times[-1])
        rows.append(Measurement('train', 'risk_decreased', float(probe.decreased), width, cfg.hyper.eps, seed, T))
        rows.append(Measurement('train', 'output_bound', net.output_bound(traj.final), width, cfg.hyper.eps, seed, T))
        extra['risk_decreased'] = probe.decreased
    return rows, extra


def run_train(cfg: ExperimentConfig, reporter: Reporter, jobs: int = 1) -> Dict[str, Any]:
    args = [(cfg, w, s) for w in sorted(cfg.widths) for s in cfg.seeds]
    extras = _run(reporter, train_job, args, jobs)
    return {
        'final_risk': {str(w): float(np.median([e['final_risk'] for e in extras if e['width'] == w]))
                       for w in sorted(cfg.widths)},
        'risk_decreased_runs': sum(1 for e in extras if e.get('risk_decreased')),
        'runs': len(extras),
    }


# couple and chaos

def coupled_rows(experiment: str, results: List[CoupledResult], per_time: bool) -> List[Measurement]:
    rows = []
    for r in results:
        for pair, report in r.distances.items():
            if per_time:
                rows.extend(Measurement(experiment, f"D:{pair}", float(v), r.width, r.eps, r.seed, float(t))
                            for t, v in zip(report.times, report.values))
            rows.append(Measurement(experiment, f"D_T:{pair}", report.sup, r.width, r.eps, r.seed,
                                    float(report.times[-1])))
        for member, risk in sorted(r.final_risks.items()):
            rows.append(Measurement(experiment, f"final_risk:{member}", risk, r.width, r.eps, r.seed))
        if r.triangle_slack is not None:
            rows.append(Measurement(experiment, 'triangle_slack', r.triangle_slack, r.width, r.eps, r.seed))
        if r.w2 is not None:
            rows.append(Measurement(experiment, 'w2:pd-shb', r.w2, r.width, r.eps, r.seed))
            rows.append(Measurement(experiment, 'w2_approximate', float(r.w2_approximate), r.width, r.eps, r.seed))
    return rows


def _w2_within_distance(r: CoupledResult) -> bool:
    if r.w2 is None or 'pd-shb' not in r.distances:
        return True
    return r.w2 <= r.distances['pd-shb'].sup + 1e-12


def couple_job(args):
    cfg, seed = args
    results = coupled_runs(cfg, cfg.hyper.eps, seed, cfg.widths)
    rows = coupled_rows('couple', results, per_time=True)
    if cfg.envelope.enabled:
        times = cfg.hyper.grid()
        values = pachpatte_envelope(cfg.envelope.u0, cfg.hyper.gamma, cfg.envelope.k, times)
        rows.extend(Measurement('couple', 'envelope', float(v), None, cfg.hyper.eps, seed, float(t))
                    for t, v in zip(times, np.atleast_1d(values)))
    return rows, results


def run_couple(cfg: ExperimentConfig, reporter: Reporter, jobs: int = 1) -> Dict[str, Any]:
    batches = _run(reporter, couple_job, [(cfg, s) for s in cfg.seeds], jobs)
    results = [r for batch in batches for r in batch]
    return {
        'triangle_ok': all(r.triangle_ok for r in results),
        'w2_within_distance': all(_w2_within_distance(r) for r in results),
        'median_D_T': _median_distances(results),
    }


def _median_distances(results: List[CoupledResult]) -> Dict[str, Dict[str, float]]:
    table: Dict[str, Dict[str, float]] = {}
    for pair in sorted({p for r in results for p in r.distances}):
        table[pair] = {str(w): float(np.median([r.distances[pair].sup for r in results if r.width == w]))
                       for w in sorted({r.width for r in results if pair in r.distances})}
    return table


def run_chaos(cfg: ExperimentConfig, reporter: Reporter, jobs: int = 1) -> Dict[str, Any]:
    with job_runner(jobs) as runner:
        table = chaos_experiment(cfg.widths, cfg.eps_list, cfg.seeds, cfg, runner=runner,
                                 on_result=lambda batch: reporter.write(coupled_rows('chaos', batch, per_time=False)))
    rows = [Measurement('chaos', f"median:{m['metric']}", m['median'], m['width'], m['eps'])
            for m in table.medians]
    for name, fit in sorted(table.fits.items()):
        rows.append(Measurement('chaos', f"slope:{name}", fit.slope))
        rows.append(Measurement('chaos', f"r2:{name}", fit.r2))
    reporter.write(rows)
    return {
        'fits': {name: fit.as_dict() for name, fit in sorted(table.fits.items())},
        'ratios': [{**r, 'from': list(r['from']), 'to': list(r['to'])} for r in table.ratios],
        'triangle_ok': table.triangle_ok,
    }


# dropout scan

def dropout_job(args):
    cfg, width, seed = args
    eval_times = cfg.dropout.eval_times or (cfg.hyper.T,)
    local = replace(cfg, training=replace(cfg.training, snapshot_times=tuple(eval_times)))
    traj, _ = run_training(local, width, seed)
    net = cfg.network.build(cfg.model)
    pool = make_pool(cfg.data, cfg.training.pool_size, seed)
    grid = {cfg.hyper.steps_until(min(t, cfg.hyper.T)) * cfg.hyper.eps for t in eval_times}
    rows, means = [], {}
    for t, W in zip(traj.times, traj.snapshots):
        if not any(np.isclose(t, g) for g in grid):
            continue
        specs = random_dropout_sets(W.widths, cfg.dropout.fraction, cfg.dropout.subsets, seed)
        errors = [dropout_error(W, spec, pool, net) for spec in specs]
        rows.extend(Measurement('dropout-scan', f"eps_D[{i}]", e, width, cfg.hyper.eps, seed, float(t))
                    for i, e in enumerate(errors))
        mean = float(np.mean(errors))
        rows.append(Measurement('dropout-scan', 'eps_D_mean', mean, width, cfg.hyper.eps, seed, float(t)))
        means[float(t)] = mean
    return rows, {'width': width, 'seed': seed, 'means': means}


def run_dropout_scan(cfg: ExperimentConfig, reporter: Reporter, jobs: int = 1) -> Dict[str, Any]:
    args = [(cfg, w, s) for w in sorted(cfg.widths) for s in cfg.seeds]
    extras = _run(reporter, dropout_job, args, jobs)
    widths = sorted(cfg.widths)
    times = sorted({t for e in extras for t in e['means']})
    summary: Dict[str, Any] = {'curves': {}, 'fits': {}}
    rows = []
    for t in times:
        curve = {w: [e['means'][t] for e in extras if e['width'] == w and t in e['means']] for w in widths}
        means = [float(np.mean(curve[w])) for w in widths]
        medians = [float(np.median(curve[w])) for w in widths]
        summary['curves'][repr(t)] = {
            'mean': dict(zip(map(str, widths), means)),
            'median': dict(zip(map(str, widths), medians)),
            'strictly_decreasing': all(a > b for a, b in zip(medians, medians[1:])),
        }
        if len(widths) >= 3 and min(means) > 0:
            fit = fit_loglog(widths, means)
            summary['fits'][repr(t)] = fit.as_dict()
            rows.append(Measurement('dropout-scan', 'fit_slope', fit.slope, time=t))
            rows.append(Measurement('dropout-scan', 'fit_intercept', fit.intercept, time=t))
            rows.append(Measurement('dropout-scan', 'fit_r2', fit.r2, time=t))
    reporter.write(rows)
    return summary


# connectivity

def connect_job(args):
    cfg, width, seed = args
    traj_a, _ = run_training(cfg, width, seed)
    traj_b, _ = run_training(cfg, width, seed + cfg.connect.pair_seed_offset)
    W, W_other = traj_a.final, traj_b.final
    net = cfg.network.build(cfg.model)
    pool = make_pool(cfg.data, cfg.training.pool_size, seed)
    path = build_path_2L(W, W_other)
    along = risk_along_path(path, pool, net, steps=cfg.connect.steps_per_segment)
    aligned = risk_along_path(linear_path(W, align_neurons(W, W_other)), pool, net,
                              steps=cfg.connect.steps_per_segment)
    eps = cfg.hyper.eps
    half = tuple(range(width // 2))
    rest = tuple(range(width // 2, width))
    rows = [Measurement('connect', 'path_risk', float(r), width, eps, seed, float(p))
            for p, r in zip(along.positions, along.risks)]
    rows += [
        Measurement('connect', 'risk:start', pool_risk(W, pool, net), width, eps, seed),
        Measurement('connect', 'risk:end', pool_risk(W_other, pool, net), width, eps, seed),
        Measurement('connect', 'eps_D:start', dropout_error(W, DropoutSpec(half), pool, net), width, eps, seed),
        Measurement('connect', 'eps_D:end', dropout_error(W_other, DropoutSpec(rest), pool, net), width, eps, seed),
        Measurement('connect', 'eps_C', along.eps_C, width, eps, seed),
        Measurement('connect', 'eps_C:aligned_linear', aligned.eps_C, width, eps, seed),
        Measurement('connect', 'knot_gap', knot_gap(path), width, eps, seed),
        Measurement('connect', 'segments', float(len(path.segments)), width, eps, seed),
    ]
    endpoints_exact = path.start.equals(W) and path.end.equals(W_other)
    return rows, {'width': width, 'seed': seed, 'eps_C': along.eps_C, 'endpoints_exact': endpoints_exact}


def run_connect(cfg: ExperimentConfig, reporter: Reporter, jobs: int = 1) -> Dict[str, Any]:
    args = [(cfg, w, s) for w in sorted(cfg.widths) for s in cfg.seeds]
    extras = _run(reporter, connect_job, args, jobs)
    return {
        'median_eps_C': {str(w): float(np.median([e['eps_C'] for e in extras if e['width'] == w]))
                         for w in sorted(cfg.widths)},
        'endpoints_exact': all(e['endpoints_exact'] for e in extras),
    }


# noisy dynamics

def noisy_job(args):
    cfg, width, seed = args
    traj, risks = run_training(cfg, width, seed, dynamics='noisy')
    eps = cfg.hyper.eps
    out_max = [float(np.max(np.abs(_output_layer(W)))) for W in traj.snapshots]
    w1_max = [float(np.max(np.linalg.norm(W.w1, axis=1))) for W in traj.snapshots]
    rows = [Measurement('noisy', 'max_abs_out', v, width, eps, seed, float(t)) for t, v in zip(traj.times, out_max)]
    T = float(traj.times[-1])
    rows += [
        Measurement('noisy', 'sup_abs_out', max(out_max), width, eps, seed, T),
        Measurement('noisy', 'sup_norm_w1', max(w1_max), width, eps, seed, T),
        Measurement('noisy', 'final_risk', float(risks[-1]), width, eps, seed, T),
    ]
    return rows, {'width': width, 'seed': seed, 'sup_abs_out': max(out_max), 'sup_norm_w1': max(w1_max)}


def run_noisy(cfg: ExperimentConfig, reporter: Reporter, jobs: int = 1) -> Dict[str, Any]:
    args = [(cfg, w, s) for w in sorted(cfg.widths) for s in cfg.seeds]
    extras = _run(reporter, noisy_job, args, jobs)
    return {
        'sup_abs_out': max(e['sup_abs_out'] for e in extras),
        'sup_norm_w1': max(e['sup_norm_w1'] for e in extras),
        'runs': len(extras),
    }


RUNNERS = {
    'train': run_train,
    'couple': run_couple,
    'chaos': run_chaos,
    'dropout-scan': run_dropout_scan,
    'connect': run_connect,
    'noisy': run_noisy,
}
