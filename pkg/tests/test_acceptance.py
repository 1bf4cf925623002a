"""
Desk-scale acceptance runs of the shipped experiment configurations.

These take minutes; run them with `pytest -m slow`.
"""

import os
from pathlib import Path

import pytest

from heavyfield_lib.config import ConfigLoader, ConfigValidator, resolve
from heavyfield_lib.experiments import RUNNERS
from heavyfield_lib.reporter import Reporter

CONFIGS = Path(__file__).parent.parent / 'configs'
JOBS = min(4, os.cpu_count() or 1)

pytestmark = pytest.mark.slow


def run_config(name, tmp_path):
    loader = ConfigLoader(str(CONFIGS / name))
    loader.load()
    loader.apply_overrides(out=str(tmp_path))
    ConfigValidator(loader.raw, loader.config).validate()
    cfg = resolve(loader.config)
    with Reporter(tmp_path, cfg.experiment) as reporter:
        return RUNNERS[cfg.experiment](cfg, reporter, JOBS)


def _eps_ratio(results, metric):
    (ratio,) = [r for r in results['ratios'] if r['metric'] == metric and r['axis'] == 'eps']
    return ratio['ratio']


def test_particle_dynamics_gap_is_first_order_in_eps(tmp_path):
    results = run_config('discretization-order.yaml', tmp_path)
    assert 1.4 <= _eps_ratio(results, 'pd-hb') <= 2.8


def test_stochastic_fluctuation_is_half_order_in_eps(tmp_path):
    results = run_config('fluctuation-order.yaml', tmp_path)
    assert 1.1 <= _eps_ratio(results, 'hb-shb') <= 2.2


def test_distance_to_the_proxy_shrinks_with_width(tmp_path):
    results = run_config('chaos-width.yaml', tmp_path)
    fit = results['fits']['proxy-pd:width@eps=0.02']
    assert -0.8 <= fit['slope'] <= -0.2
    assert fit['r2'] >= 0.7


def test_triangle_decomposition_holds_on_every_run(tmp_path):
    results = run_config('couple.yaml', tmp_path)
    assert results['triangle_ok']
    assert results['w2_within_distance']


def test_two_layer_dropout_error_decays_with_width(tmp_path):
    results = run_config('dropout-scan.yaml', tmp_path)
    fit = results['fits']['100.0']
    assert -0.85 <= fit['slope'] <= -0.2
    assert fit['r2'] >= 0.8


def test_three_layer_dropout_error_decreases_with_width(tmp_path):
    results = run_config('dropout-scan-3l.yaml', tmp_path)
    assert results['curves']['100.0']['strictly_decreasing']


def test_wider_pairs_connect_with_a_lower_barrier(tmp_path):
    results = run_config('connect.yaml', tmp_path)
    assert results['endpoints_exact']
    assert results['median_eps_C']['800'] < results['median_eps_C']['100']


def test_noisy_heavy_ball_stays_bounded(tmp_path):
    results = run_config('noisy.yaml', tmp_path)
    assert results['runs'] == 20
    assert results['sup_abs_out'] <= 50
