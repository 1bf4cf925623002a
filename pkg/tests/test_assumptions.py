from heavyfield_lib.assumptions import check_assumptions


def _result(report, name):
    (result,) = [r for r in report.results if r.name == name]
    return result


def test_defaults_pass():
    report = check_assumptions({'hyper': {'gamma': 2.0, 'eps': 0.05}})
    assert report.passed
    assert 'beta = 0.9' in _result(report, 'momentum').message


def test_large_step_fails_momentum():
    report = check_assumptions({'hyper': {'gamma': 1.0, 'eps': 1.5}})
    assert not _result(report, 'momentum').passed
    assert [r.name for r in report.failures()] == ['momentum']


def test_chaos_step_sizes_are_checked():
    report = check_assumptions({'experiment': 'chaos', 'hyper': {'gamma': 1.0, 'eps': 0.1},
                                'chaos': {'eps_list': [0.5, 1.2]}})
    assert not _result(report, 'momentum').passed


def test_square_loss_fails_even_when_allowed():
    report = check_assumptions({'network': {'loss': 'square'}})
    assert not _result(report, 'loss').passed
    report = check_assumptions({'network': {'loss': 'square', 'unsafe_assumptions': True}})
    loss = _result(report, 'loss')
    assert not loss.passed
    assert 'unsafe_assumptions' in loss.message


def test_huber_loss_passes():
    assert _result(check_assumptions({'network': {'loss': 'huber'}}), 'loss').passed


def test_three_layer_joint_law_fails():
    report = check_assumptions({'model': '3l', 'init': {'law': 'joint'}})
    assert not _result(report, 'initialization').passed


def test_unevaluable_values_are_reported_not_raised():
    report = check_assumptions({'network': {'activation': 'relu'}, 'data': {'dim': 'ten'}})
    assert not _result(report, 'activation').passed
    assert 'could not evaluate' in _result(report, 'activation').message


def test_rest_start_and_data_bounds_pass():
    report = check_assumptions({'data': {'dim': 4, 'radius': 2.0, 'label_clip': 0.5}})
    assert _result(report, 'initial momentum').passed
    assert _result(report, 'data bounds').passed


def test_report_printing(capsys):
    check_assumptions({'hyper': {'gamma': 1.0, 'eps': 1.5}}).print_report()
    out = capsys.readouterr().out
    assert '❌ momentum' in out
    assert 'checks failed' in out
