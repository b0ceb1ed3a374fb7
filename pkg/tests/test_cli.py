"""
Integration tests for the command-line interface.
"""
import filecmp
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from setgen.commands import cli
from setgen.models import GroupEvalReport, RunManifest, load_checkpoint

PHANTOM_ARGS = ['--n', '4', '--size', '16,16', '--labels', '2', '--magnitude', '1.5',
                '--smoothness', '2.0', '--seed', '7']


def invoke(runner, *args):
    return runner.invoke(cli, ['--config', 'testing', '--threads', '1'] + list(args))


def _same_tree(a, b, ignore=('run_manifest.json',)):
    comparison = filecmp.dircmp(a, b, ignore=list(ignore))
    if comparison.left_only or comparison.right_only or comparison.diff_files:
        return False
    names = [n for n in os.listdir(a) if n not in ignore and os.path.isfile(os.path.join(a, n))]
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return not mismatch and not errors and all(
        _same_tree(os.path.join(a, d), os.path.join(b, d), ignore) for d in comparison.common_dirs)


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    """Phantoms, a pretrained registration net and a trained VAE built through the CLI."""
    root = tmp_path_factory.mktemp('cli')
    runner = CliRunner()
    data = str(root / 'data')
    reg = str(root / 'reg.ckpt')
    vae = str(root / 'vae.ckpt')
    for args in (['gen-phantoms', '--out', data] + PHANTOM_ARGS,
                 ['pretrain-reg', '--data', data, '--iters', '3', '--out', reg],
                 ['train', '--data', data, '--reg', reg, '--pairs-per-epoch', '2',
                  '--out', vae]):
        result = invoke(runner, *args)
        assert result.exit_code == 0, result.output
    return {'root': root, 'data': data, 'reg': reg, 'vae': vae,
            'images': os.path.join(data, '*_image.raw'),
            'labels': os.path.join(data, '*_labels.raw')}


@pytest.mark.integration
class TestDataCommands:
    """Tests for gen-phantoms and slice."""

    def test_gen_phantoms_is_reproducible(self, runner, tmp_path):
        for name in ('a', 'b'):
            result = invoke(runner, 'gen-phantoms', '--out', str(tmp_path / name), *PHANTOM_ARGS)
            assert result.exit_code == 0, result.output
        assert _same_tree(str(tmp_path / 'a'), str(tmp_path / 'b'))
        assert sorted(os.listdir(tmp_path / 'a' / 'ground_truth')) == [
            'center_image.json', 'center_image.raw', 'center_labels.json', 'center_labels.raw']

    def test_manifest_records_run(self, workspace):
        manifest = RunManifest.read(os.path.join(workspace['data'], 'run_manifest.json'))
        assert manifest.subcommand == 'gen-phantoms'
        assert manifest.seeds == {'phantoms': 7}
        assert manifest.config['THREADS'] == 1
        assert '--size' in manifest.argv and '16,16' in manifest.argv
        assert 'sub-000_image.raw' in {os.path.basename(p) for p in manifest.outputs}
        assert 'total' in manifest.timings

    def test_zero_magnitude_subjects_share_labels(self, runner, tmp_path):
        args = ['--n', '3', '--size', '16,16', '--labels', '2', '--magnitude', '0',
                '--noise', '0', '--seed', '1']
        assert invoke(runner, 'gen-phantoms', '--out', str(tmp_path / 'z'), *args).exit_code == 0
        first = (tmp_path / 'z' / 'sub-000_image.raw').read_bytes()
        assert all((tmp_path / 'z' / f'sub-00{i}_image.raw').read_bytes() == first
                   for i in (1, 2))

    def test_missing_out_is_usage_error(self, runner):
        result = invoke(runner, 'gen-phantoms', '--n', '4')
        assert result.exit_code == 2

    def test_bad_size(self, runner, tmp_path):
        result = invoke(runner, 'gen-phantoms', '--out', str(tmp_path / 'x'), '--size', '16')
        assert result.exit_code == 2

    def test_config_error_line(self, runner, tmp_path):
        result = invoke(runner, 'gen-phantoms', '--out', str(tmp_path / 'x'), '--size', '16,16',
                        '--magnitude', '5')
        assert result.exit_code == 2
        assert 'error: config: ' in result.output

    def test_slice(self, runner, workspace, tmp_path):
        out = str(tmp_path / 'slices' / 's.pgm')
        volume = os.path.join(workspace['data'], 'sub-000_image.raw')
        result = invoke(runner, 'slice', '--volume', volume, '--out', out)
        assert result.exit_code == 0, result.output
        assert np.asarray(Image.open(out)).shape == (16, 16)
        assert os.path.isfile(f'{out}.manifest.json')


@pytest.mark.integration
class TestTrainingCommands:
    """Tests for pretrain-reg and train."""

    def test_checkpoints_and_logs(self, workspace):
        assert load_checkpoint(workspace['reg'], 'regnet').metadata['iterations'] == 3
        vae = load_checkpoint(workspace['vae'], 'vae')
        assert vae.metadata['registration'] == load_checkpoint(workspace['reg']).fingerprint()
        with open(workspace['vae'] + '.log.jsonl') as f:
            assert len(f.readlines()) == 2
        with open(workspace['reg'] + '.log.jsonl') as f:
            assert len(f.readlines()) == 3

    def test_train_requires_reg(self, runner, workspace, tmp_path):
        result = invoke(runner, 'train', '--data', workspace['data'], '--out',
                        str(tmp_path / 'v.ckpt'))
        assert result.exit_code == 2

    def test_train_is_reproducible(self, runner, workspace, tmp_path):
        for name in ('a.ckpt', 'b.ckpt'):
            result = invoke(runner, 'train', '--data', workspace['data'], '--reg', workspace['reg'],
                            '--pairs-per-epoch', '2', '--seed', '3', '--out', str(tmp_path / name))
            assert result.exit_code == 0, result.output
        assert (tmp_path / 'a.ckpt').read_bytes() == (tmp_path / 'b.ckpt').read_bytes()

    def test_explicit_lambdas_match_ablation_a(self, runner, workspace, tmp_path):
        common = ['train', '--data', workspace['data'], '--reg', workspace['reg'],
                  '--pairs-per-epoch', '1']
        assert invoke(runner, *common, '--ablation', 'a',
                      '--out', str(tmp_path / 'a.ckpt')).exit_code == 0
        assert invoke(runner, *common, '--lambda3', '0', '--lambda4', '0', '--lambda5', '0',
                      '--out', str(tmp_path / 'l.ckpt')).exit_code == 0
        assert (tmp_path / 'a.ckpt').read_bytes() == (tmp_path / 'l.ckpt').read_bytes()

    def test_unknown_similarity(self, runner, workspace, tmp_path):
        result = invoke(runner, 'train', '--data', workspace['data'], '--reg', workspace['reg'],
                        '--similarity', 'mutual-information', '--out', str(tmp_path / 'v.ckpt'))
        assert result.exit_code == 2

    def test_wrong_checkpoint_kind(self, runner, workspace, tmp_path):
        result = invoke(runner, 'train', '--data', workspace['data'], '--reg', workspace['vae'],
                        '--out', str(tmp_path / 'v.ckpt'))
        assert result.exit_code == 3
        assert 'error: checkpoint: ' in result.output


@pytest.mark.integration
class TestTemplateCommands:
    """Tests for template, eval, compare and replay."""

    def test_template_and_eval(self, runner, workspace, tmp_path):
        out = str(tmp_path / 'tpl')
        result = invoke(runner, 'template', '--inputs', workspace['images'], '--vae',
                        workspace['vae'], '--reg', workspace['reg'], '--out', out)
        assert result.exit_code == 0, result.output
        manifest = json.loads((tmp_path / 'tpl' / 'template.json').read_text())
        assert manifest['method'] == 'setgen'
        assert manifest['subjects'] == ['sub-000', 'sub-001', 'sub-002', 'sub-003']

        report_path = str(tmp_path / 'eval.json')
        result = invoke(runner, 'eval', '--inputs', workspace['images'], '--labels',
                        workspace['labels'], '--template', out, '--reg', workspace['reg'],
                        '--report', report_path, '--normalized', '--ground-truth',
                        os.path.join(workspace['data'], 'ground_truth', 'center_image.raw'))
        assert result.exit_code == 0, result.output
        report = GroupEvalReport.from_json((tmp_path / 'eval.json').read_text())
        assert report.method == 'setgen'
        assert 0.0 <= report.dice <= 1.0
        assert report.normalized_centrality is not None
        assert report.template_mse is not None
        assert (tmp_path / 'eval_per_label.csv').read_text().startswith('label,dice\n1,')
        assert not list(tmp_path.glob('*.tmp'))

    def test_refine_changes_template(self, runner, workspace, tmp_path):
        base = ['template', '--inputs', workspace['images'], '--vae', workspace['vae'],
                '--reg', workspace['reg']]
        assert invoke(runner, *base, '--out', str(tmp_path / 'plain')).exit_code == 0
        assert invoke(runner, *base, '--refine', '--out', str(tmp_path / 'refined')).exit_code == 0
        refined = json.loads((tmp_path / 'refined' / 'template.json').read_text())
        assert refined['method'] == 'setgen+'
        assert (tmp_path / 'plain' / 'template_image.raw').read_bytes() != \
            (tmp_path / 'refined' / 'template_image.raw').read_bytes()

    def test_refine_only_for_setgen(self, runner, workspace, tmp_path):
        result = invoke(runner, 'template', '--inputs', workspace['images'], '--reg',
                        workspace['reg'], '--method', 'ave', '--refine', '--out',
                        str(tmp_path / 'x'))
        assert result.exit_code == 2

    def test_setgen_without_vae(self, runner, workspace, tmp_path):
        result = invoke(runner, 'template', '--inputs', workspace['images'], '--reg',
                        workspace['reg'], '--out', str(tmp_path / 'x'))
        assert result.exit_code == 2
        assert 'error: config: ' in result.output

    def test_no_matching_inputs(self, runner, workspace, tmp_path):
        result = invoke(runner, 'template', '--inputs', str(tmp_path / '*.raw'), '--reg',
                        workspace['reg'], '--method', 'naive-average', '--out', str(tmp_path / 'x'))
        assert result.exit_code == 3

    def test_compare(self, runner, workspace, tmp_path):
        out = tmp_path / 'cmp'
        result = invoke(runner, 'compare', '--inputs', workspace['images'], '--labels',
                        workspace['labels'], '--vae', workspace['vae'], '--reg', workspace['reg'],
                        '--methods', 'setgen,naive-average', '--out', str(out))
        assert result.exit_code == 0, result.output
        rows = (out / 'comparison.csv').read_text().splitlines()
        assert rows[0] == 'method,dice,centrality,avg_disp,runtime_seconds'
        assert [row.split(',')[0] for row in rows[1:]] == ['setgen', 'naive-average']
        assert len(json.loads((out / 'comparison.json').read_text())) == 2

    def test_compare_unknown_method(self, runner, workspace, tmp_path):
        result = invoke(runner, 'compare', '--inputs', workspace['images'], '--reg',
                        workspace['reg'], '--methods', 'median', '--out', str(tmp_path / 'x'))
        assert result.exit_code == 3

    def test_replay_reproduces_outputs(self, runner, workspace, tmp_path):
        out = str(tmp_path / 'tpl')
        args = ['template', '--inputs', workspace['images'], '--reg', workspace['reg'],
                '--method', 'ave', '--ave-iters', '1', '--out', out]
        assert invoke(runner, *args).exit_code == 0
        original = (tmp_path / 'tpl' / 'template_image.raw').read_bytes()
        os.remove(os.path.join(out, 'template_image.raw'))
        result = invoke(runner, 'replay', os.path.join(out, 'run_manifest.json'))
        assert result.exit_code == 0, result.output
        assert (tmp_path / 'tpl' / 'template_image.raw').read_bytes() == original

    def test_replay_rejects_bad_manifest(self, runner, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{"subcommand": "x"}')
        result = invoke(runner, 'replay', str(path))
        assert result.exit_code == 3
