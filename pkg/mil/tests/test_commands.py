import os

import numpy as np
import pytest
from django.conf import settings
from django.core.management import CommandError, call_command

from cdpmil.cli import main
from mil.formats import load_model, write_features, write_label_table

TRAIN_FLAGS = ['--T', '4', '--epochs', '1', '--max-iters', '15', '--cache-aggregation', '--seed', '3']
TEST_PERFORMANCE = bool(getattr(settings, "TEST_PERFORMANCE", False))


@pytest.fixture
def synth_dir(tmp_path):
    out = str(tmp_path / 'synth')
    assert main(['synth', '--out', out, '--n-bags', '16', '--dim', '3', '--min-instances', '8',
                 '--max-instances', '12', '--test-fraction', '0.25', '--seed', '2']) == 0
    return out


@pytest.fixture
def model_path(tmp_path, synth_dir):
    path = str(tmp_path / 'model.cdpm')
    assert main(['train', '--data', os.path.join(synth_dir, 'train'), '--out', path] + TRAIN_FLAGS) == 0
    return path


def _read(path):
    with open(path, encoding='utf-8') as fp:
        return fp.read()


def test_usage_errors(capsys):
    assert main([]) == 1
    assert main(['frobnicate']) == 1
    assert 'unknown subcommand' in capsys.readouterr().err
    assert main(['--help']) == 0
    assert main(['train', '--bogus']) == 1


def test_bad_configuration_exits_with_one(tmp_path, synth_dir, capsys):
    config = tmp_path / 'run.conf'
    config.write_text('T = lots\n', encoding='utf-8')
    code = main(['train', '--data', os.path.join(synth_dir, 'train'), '--out', str(tmp_path / 'm.cdpm'),
                 '--config', str(config)])
    assert code == 1
    assert 'run.conf' in capsys.readouterr().err


def test_synth_train_eval_flow(tmp_path, synth_dir, model_path):
    assert sorted(os.listdir(synth_dir)) == ['test', 'train']
    assert load_model(model_path).n_classes == 2

    metrics = str(tmp_path / 'metrics.csv')
    assert main(['eval', '--data', os.path.join(synth_dir, 'test'), '--model', model_path, '--out', metrics]) == 0
    lines = _read(metrics).splitlines()
    assert lines[0] == 'metric,value'
    assert [line.split(',')[0] for line in lines[1:]] == ['accuracy', 'macro_f1', 'auroc', 'aupr']


def test_predict_writes_one_row_per_bag(tmp_path, synth_dir, model_path):
    out = str(tmp_path / 'predictions.csv')
    assert main(['predict', '--data', os.path.join(synth_dir, 'test'), '--model', model_path, '--out', out]) == 0
    lines = _read(out).splitlines()
    assert lines[0] == 'bag_id,predicted,prob_0,prob_1,label'
    assert len(lines) == 5
    for line in lines[1:]:
        fields = line.split(',')
        assert float(fields[2]) + float(fields[3]) == pytest.approx(1.0, abs=1e-5)


def test_outputs_are_deterministic(tmp_path, synth_dir, model_path):
    second_model = str(tmp_path / 'again.cdpm')
    assert main(['train', '--data', os.path.join(synth_dir, 'train'), '--out', second_model] + TRAIN_FLAGS) == 0
    with open(model_path, 'rb') as a, open(second_model, 'rb') as b:
        assert a.read() == b.read()

    outputs = []
    for name in ('one.csv', 'two.csv'):
        out = str(tmp_path / name)
        main(['score-patches', '--data', os.path.join(synth_dir, 'test'), '--model', model_path, '--out', out])
        outputs.append(_read(out))
    assert outputs[0] == outputs[1]
    assert outputs[0].startswith('bag_id,instance_index,row,col,score,score_normalized\n')


def test_dimension_mismatch_exits_with_two(tmp_path, model_path, capsys):
    wide = tmp_path / 'wide'
    wide.mkdir()
    write_features(str(wide / 'x.fbag'), np.ones((3, 5)))
    write_label_table(str(wide / 'labels.tsv'), {'x': 0})
    code = main(['predict', '--data', str(wide), '--model', model_path, '--out', str(tmp_path / 'p.csv')])
    assert code == 2
    assert 'expects 3' in capsys.readouterr().err


def test_ood_command(tmp_path, synth_dir, model_path):
    out = str(tmp_path / 'ood.csv')
    call_command('cdpmil_ood', '--in-data', os.path.join(synth_dir, 'test'), '--model', model_path, '--out', out,
                 verbosity=0)
    lines = _read(out).splitlines()
    assert lines[0] == 'measure,auroc,aupr'
    assert [line.split(',')[0] for line in lines[1:]] == ['log_responsibility', 'max_confidence', 'entropy',
                                                         'differential_entropy']


def test_missing_model_file_is_a_command_error(tmp_path, synth_dir):
    with pytest.raises(CommandError) as excinfo:
        call_command('cdpmil_eval', '--data', os.path.join(synth_dir, 'test'), '--model',
                     str(tmp_path / 'nope.cdpm'), '--out', str(tmp_path / 'm.csv'), verbosity=0)
    assert excinfo.value.returncode == 2


@pytest.mark.skipif(not TEST_PERFORMANCE, reason="TEST_PERFORMANCE not enabled")
def test_full_size_command_line_run(tmp_path):
    data = str(tmp_path / 'data')
    model = str(tmp_path / 'model.cdpm')
    metrics = str(tmp_path / 'metrics.csv')
    assert main(['synth', '--seed', '7', '--out', data]) == 0
    assert main(['train', '--data', os.path.join(data, 'train'), '--T', '10', '--K', '2', '--eta1', '1.0',
                 '--eta2', '1.0', '--epochs', '10', '--seed', '7', '--cache-aggregation', '--out', model]) == 0
    assert main(['eval', '--data', os.path.join(data, 'test'), '--model', model, '--out', metrics]) == 0
    values = dict(line.split(',') for line in _read(metrics).splitlines()[1:])
    assert float(values['accuracy']) >= 0.95
