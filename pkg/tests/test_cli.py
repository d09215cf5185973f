import csv
import json

import numpy as np
import pytest

from maec.cli import main
from maec.estimators import beta_closed_form
from maec.fields import read_field, write_field
from maec.manifest import MANIFEST_SUFFIX, RunManifest
from maec.simulate import ForwardModel


@pytest.fixture
def phantom(tmp_path):
    beta, alpha = str(tmp_path / 'beta.maec'), str(tmp_path / 'alpha.maec')
    assert main(['phantom', '--size', '16x16', '--out-beta', beta, '--out-alpha', alpha]) == 0
    return beta, alpha


@pytest.fixture
def counts(tmp_path, phantom):
    beta, alpha = phantom
    u1, u2 = str(tmp_path / 'u1.maec'), str(tmp_path / 'u2.maec')
    assert main(['simulate', '--beta', beta, '--alpha', alpha, '--seed', '3',
                 '--out-u1', u1, '--out-u2', u2]) == 0
    return u1, u2


def _rows(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


def test_phantom(tmp_path, phantom):
    beta, alpha = phantom
    assert read_field(beta).max() == 100.0
    assert read_field(alpha).max() == 0.03

    manifest = RunManifest.read(beta + MANIFEST_SUFFIX)
    assert manifest.command == 'phantom'
    assert manifest.outputs == {'beta': beta, 'alpha': alpha}
    assert manifest.arguments['size'] == '16x16'

    again = str(tmp_path / 'again.maec')
    main(['phantom', '--size', '16x16', '--out-beta', again, '--out-alpha', str(tmp_path / 'a2.maec')])
    with open(beta, 'rb') as f, open(again, 'rb') as g:
        assert f.read() == g.read()


def test_phantom_pgm_export(tmp_path):
    beta = str(tmp_path / 'beta.maec')
    assert main(['phantom', '--size', '8x8', '--out-beta', beta,
                 '--out-alpha', str(tmp_path / 'alpha.maec'), '--export-pgm']) == 0
    with open(beta + '.pgm', 'rb') as f:
        assert f.read().startswith(b'P5\n8 8\n65535\n')


def test_bad_arguments_exit_with_usage(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(['phantom', '--kind', 'nope', '--out-beta', 'a', '--out-alpha', 'b'])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit):
        main([])


def test_simulate_noiseless_log_ratio(tmp_path, phantom):
    beta, alpha = phantom
    u1, u2 = str(tmp_path / 'n1.maec'), str(tmp_path / 'n2.maec')
    assert main(['simulate', '--beta', beta, '--alpha', alpha, '--noiseless',
                 '--out-u1', u1, '--out-u2', u2]) == 0
    a = read_field(alpha)
    first, second = ForwardModel.bipath().operators
    ratio = np.log(read_field(u2) / read_field(u1))
    positive = read_field(beta) > 0
    assert np.allclose(ratio[positive], (first.apply(a) - second.apply(a))[positive], atol=1e-12)


def test_simulate_is_seeded(tmp_path, phantom, counts):
    beta, alpha = phantom
    again = str(tmp_path / 'again.maec')
    main(['simulate', '--beta', beta, '--alpha', alpha, '--seed', '3',
          '--out-u1', again, '--out-u2', str(tmp_path / 'again2.maec')])
    with open(counts[0], 'rb') as f, open(again, 'rb') as g:
        assert f.read() == g.read()


def test_simulate_single_lidar_view(tmp_path, phantom):
    beta, alpha = phantom
    u = str(tmp_path / 'lidar.maec')
    assert main(['simulate', '--beta', beta, '--alpha', alpha, '--views', '1',
                 '--range-squared', '--out-u1', u]) == 0
    assert read_field(u).shape == (16, 16)
    assert RunManifest.read(u + MANIFEST_SUFFIX).outputs == {'u1': u}


def test_simulate_needs_second_output(phantom, capsys):
    beta, alpha = phantom
    assert main(['simulate', '--beta', beta, '--alpha', alpha, '--out-u1', 'x.maec']) == 1
    assert 'maec: error' in capsys.readouterr().err


def test_estimate(tmp_path, phantom, counts):
    beta, alpha = phantom
    u1, u2 = counts
    out_a, out_b = str(tmp_path / 'ahat.maec'), str(tmp_path / 'bhat.maec')
    metrics, trace = str(tmp_path / 'metrics.csv'), str(tmp_path / 'trace.csv')
    assert main([
        'estimate', '--u1', u1, '--u2', u2, '--sdmm-iters', '30',
        '--truth-alpha', alpha, '--truth-beta', beta,
        '--out-alpha', out_a, '--out-beta', out_b, '--metrics', metrics, '--trace', trace,
    ]) == 0

    assert read_field(out_a).shape == read_field(out_b).shape == (16, 16)
    rows = _rows(metrics)
    assert rows[0] == ['command', 'field', 'snr_db', 'iterations', 'wall_seconds']
    assert [r[1] for r in rows[1:]] == ['alpha', 'beta']
    float(rows[1][2])
    assert _rows(trace)[0][0] == 'stage'

    manifest = RunManifest.read(out_a + MANIFEST_SUFFIX)
    assert manifest.command == 'estimate'
    assert None not in manifest.config.values()
    assert manifest.config['warm_start_iters'] == 30
    assert manifest.inputs['truth_beta'] == beta


def test_estimate_is_byte_identical_across_runs(tmp_path, phantom, counts):
    u1, u2 = counts
    outputs = []
    for run in ('first', 'second'):
        out_a, out_b = tmp_path / f'{run}_a.maec', tmp_path / f'{run}_b.maec'
        assert main([
            'estimate', '--u1', u1, '--u2', u2, '--sdmm-iters', '20',
            '--out-alpha', str(out_a), '--out-beta', str(out_b),
        ]) == 0
        outputs.append((out_a.read_bytes(), out_b.read_bytes()))
    assert outputs[0] == outputs[1]

def test_estimate_with_mismatched_dims(tmp_path, counts, capsys):
    other = str(tmp_path / 'small.maec')
    write_field(np.ones((4, 4)), other)
    code = main(['estimate', '--u1', counts[0], '--u2', other,
                 '--out-alpha', str(tmp_path / 'a.maec'), '--out-beta', str(tmp_path / 'b.maec')])
    assert code == 1
    assert 'maec: error' in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    code = main(['estimate', '--u1', str(tmp_path / 'none.maec'), '--u2', str(tmp_path / 'none.maec'),
                 '--out-alpha', str(tmp_path / 'a.maec'), '--out-beta', str(tmp_path / 'b.maec')])
    assert code == 1
    assert 'maec: error' in capsys.readouterr().err


def test_correct_density_without_prior(tmp_path, phantom, counts):
    _, alpha = phantom
    out = str(tmp_path / 'beta.maec')
    assert main(['correct-density', '--u1', counts[0], '--u2', counts[1], '--alpha', alpha,
                 '--lambda-beta', '0', '--out-beta', out]) == 0
    views = [read_field(counts[0]), read_field(counts[1])]
    expected = beta_closed_form(views, read_field(alpha), ForwardModel.bipath())
    assert np.array_equal(read_field(out), expected)


def test_estimate_attenuation_single_view(tmp_path, phantom):
    beta, alpha = phantom
    u = str(tmp_path / 'lidar.maec')
    main(['simulate', '--beta', beta, '--alpha', alpha, '--views', '1', '--out-u1', u])
    out, metrics = str(tmp_path / 'ahat.maec'), str(tmp_path / 'm.csv')
    assert main(['estimate-attenuation', '--views', '1', '--u1', u, '--beta', beta,
                 '--sdmm-iters', '20', '--truth-alpha', alpha, '--out-alpha', out, '--metrics', metrics]) == 0
    assert np.all(read_field(out) >= 0)
    assert _rows(metrics)[1][:2] == ['estimate-attenuation', 'alpha']
    assert RunManifest.read(out + MANIFEST_SUFFIX).config['alpha_iters'] == 20


def test_prox_bench(tmp_path, capsys):
    out = str(tmp_path / 'bench.csv')
    assert main(['prox-bench', '--lo-exp', '-2', '--hi-exp', '2', '--out', out]) == 0
    rows = _rows(out)
    assert rows[0] == ['abs_diff', 'a', 'sign', 'lambda', 'iterations', 'residual']
    assert len(rows) == 1 + 2 * 5 * 5
    assert 'max iterations' in capsys.readouterr().out


def test_sweep(tmp_path):
    out = str(tmp_path / 'sweep.csv')
    assert main(['sweep', '--size', '8x8', '--beta-max', '100', '--alpha-max', '0.03,0.1',
                 '--sdmm-iters', '10', '--out', out]) == 0
    rows = _rows(out)
    assert rows[0][:2] == ['beta_max', 'alpha_max']
    assert [r[1] for r in rows[1:]] == ['0.03', '0.1']


def test_scaling(tmp_path, capsys):
    out = str(tmp_path / 'scaling.csv')
    assert main(['scaling', '--sizes', '64,256', '--iterations', '2', '--out', out]) == 0
    rows = _rows(out)
    assert [r[0] for r in rows[1:]] == ['64', '256']
    assert 'growth' in capsys.readouterr().out


def test_replay_reproduces_outputs(tmp_path, phantom, counts):
    u1, _ = counts
    with open(u1, 'rb') as f:
        original = f.read()
    manifest = u1 + MANIFEST_SUFFIX
    with open(manifest) as f:
        assert json.load(f)['command'] == 'simulate'

    for path in counts:
        with open(path, 'wb'):
            pass
    assert main(['replay', manifest]) == 0
    with open(u1, 'rb') as f:
        assert f.read() == original
    assert RunManifest.read(manifest).command == 'simulate'


def test_replay_rejects_unknown_commands(tmp_path, capsys):
    path = tmp_path / 'odd.manifest.json'
    RunManifest(command='replay', arguments={}, version='0').write(path)
    assert main(['replay', str(path)]) == 1
    assert 'cannot replay' in capsys.readouterr().err
