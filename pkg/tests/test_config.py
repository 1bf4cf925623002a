from pathlib import Path

import pytest
import yaml

from heavyfield_lib.config import (DEFAULTS, OUTPUT_DIR_ENV, ConfigInitializer, ConfigLoader, ConfigValidator,
                                   output_directory, resolve)
from heavyfield_lib.errors import ConfigError

from conftest import merged_config


def _validate(overrides):
    ConfigValidator(overrides, merged_config(overrides)).validate()


def _errors(overrides):
    with pytest.raises(ConfigError) as err:
        _validate(overrides)
    return err.value.errors


def test_defaults_are_valid():
    _validate({})
    cfg = resolve(merged_config())
    assert cfg.hyper.beta == pytest.approx(0.9)
    assert cfg.hyper.T == DEFAULTS['hyper']['horizon']
    assert cfg.data.K_x == pytest.approx(10 ** 0.5)
    assert not cfg.training.protocol_mode


def test_unknown_keys_carry_their_path():
    assert _errors({'hyper': {'gama': 1.0}}) == ['hyper.gama: unknown key']
    assert _errors({'plots': True}) == ['plots: unknown key']
    assert _errors({'hyper': 3}) == ['hyper: must be a mapping']


def test_every_value_error_is_reported():
    errors = _errors({'widths': [], 'hyper': {'gamma': -1.0}, 'training': {'batch_size': 0}})
    assert any(e.startswith('widths:') for e in errors)
    assert any(e.startswith('hyper.gamma:') for e in errors)
    assert any(e.startswith('training.batch_size:') for e in errors)


def test_momentum_must_stay_below_one():
    assert _errors({'hyper': {'gamma': 1.0, 'eps': 1.5}}) == ['hyper.eps: gamma * eps = 1.5 must be < 1']
    errors = _errors({'hyper': {'gamma': 1.0, 'eps': 0.1}, 'chaos': {'eps_list': [0.5, 2.0]}})
    assert errors == ['chaos.eps_list[1]: gamma * eps = 2 must be < 1']


def test_square_loss_needs_the_unsafe_flag():
    assert _errors({'network': {'loss': 'square'}}) == [
        'network.loss: square loss requires network.unsafe_assumptions: true']
    _validate({'network': {'loss': 'square', 'unsafe_assumptions': True}})


def test_choices_are_checked():
    assert _errors({'model': '4l'})[0].startswith("model: unknown value '4l'")
    assert _errors({'training': {'dynamics': 'adam'}})[0].startswith('training.dynamics:')
    assert _errors({'coupling': {'dynamics': ['proxy', 'sgd']}})[0].startswith('coupling.dynamics:')


def test_three_layer_rules():
    assert _errors({'model': '3l', 'init': {'law': 'joint'}})[0].startswith('init.law:')
    assert _errors({'experiment': 'connect', 'model': '3l'}) == ['model: connect builds two-layer paths only']
    assert _errors({'experiment': 'connect', 'widths': [5]}) == ['widths: connect needs even widths']


def test_reference_width_must_dominate():
    assert _errors({'widths': [64], 'coupling': {'n_ref': 128}})[0].startswith('coupling.n_ref:')
    _validate({'widths': [64], 'coupling': {'n_ref': 256}})


def test_booleans_and_integers_are_strict():
    assert _errors({'coupling': {'wasserstein': 'yes'}}) == ['coupling.wasserstein: must be true or false']
    assert _errors({'training': {'pool_size': 10.5}}) == ['training.pool_size: must be an integer']
    assert _errors({'seeds': [True]}) == ['seeds: entries must be integers >= 0']


def test_output_directory_precedence(monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert output_directory(None, {}) == Path('results')
    monkeypatch.setenv(OUTPUT_DIR_ENV, '/tmp/env')
    assert output_directory(None, {'output': {'directory': None}}) == Path('/tmp/env')
    assert output_directory(None, {'output': {'directory': 'cfg'}}) == Path('cfg')
    assert output_directory('cli', {'output': {'directory': 'cfg'}}) == Path('cli')


def test_loader_layers_the_file_over_the_defaults(tmp_path, write_config, monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    path = write_config({'widths': [8, 16], 'hyper': {'eps': 0.01}})
    loader = ConfigLoader(str(path))
    loader.load()
    assert loader.config['hyper']['gamma'] == DEFAULTS['hyper']['gamma']
    assert loader.config['hyper']['eps'] == 0.01
    loader.apply_overrides(experiment='couple', seed=7, out=str(tmp_path / 'out'))
    assert loader.config['experiment'] == 'couple'
    assert loader.config['seeds'] == [7]
    assert loader.config['output']['directory'] == str(tmp_path / 'out')
    assert DEFAULTS['seeds'] == [0]


def test_loader_errors(tmp_path):
    with pytest.raises(ConfigError) as err:
        ConfigLoader(str(tmp_path / 'missing.yaml')).load()
    assert 'not found' in err.value.errors[0]
    bad = tmp_path / 'bad.yaml'
    bad.write_text('hyper: [1, 2\n')
    with pytest.raises(ConfigError):
        ConfigLoader(str(bad)).load()
    listed = tmp_path / 'list.yaml'
    listed.write_text('- 1\n- 2\n')
    with pytest.raises(ConfigError):
        ConfigLoader(str(listed)).load()


def test_empty_file_means_defaults(tmp_path):
    empty = tmp_path / 'empty.yaml'
    empty.write_text('')
    loader = ConfigLoader(str(empty))
    loader.load()
    assert loader.config == DEFAULTS


@pytest.mark.parametrize('experiment', ['train', 'couple', 'chaos', 'dropout-scan', 'connect', 'noisy'])
def test_initializer_writes_valid_files(tmp_path, experiment, capsys):
    path = tmp_path / f'{experiment}.yaml'
    ConfigInitializer.init(path, experiment)
    assert '✅' in capsys.readouterr().out
    raw = yaml.safe_load(path.read_text())
    assert raw['experiment'] == experiment
    _validate(raw)
    with pytest.raises(ConfigError):
        ConfigInitializer.init(path, experiment)


def test_shipped_configs_are_valid():
    configs = sorted((Path(__file__).parent.parent / 'configs').glob('*.yaml'))
    assert configs
    for path in configs:
        raw = yaml.safe_load(path.read_text())
        _validate(raw)
