import tempfile
from pathlib import Path

from django.apps import apps
from django.test import SimpleTestCase, override_settings
from django.urls import reverse
from rest_framework import status

from acd.metrics import MetricsRecord, MetricsWriter
from acd.trainer import MANIFEST_FILE, METRICS_FILE, RunManifest


class RunViewsTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        override = override_settings(ACD_RUNS_DIR=self.root)
        override.enable()
        self.addCleanup(override.disable)

    def make_run(self, name, algorithm='acd', rows=2):
        run_dir = self.root / name
        run_dir.mkdir()
        RunManifest(algorithm=algorithm, kind='toy-pong', seed=0, total_frames=48 * rows, config={},
                    started_at='2024-01-01T00:00:00+00:00', updates=rows, global_frame=48 * rows).save(run_dir)
        writer = MetricsWriter(run_dir / METRICS_FILE)
        for i in range(1, rows + 1):
            writer.append(MetricsRecord(global_frame=48 * i, d_loss=2.0, g_loss=2.0))
        return run_dir

    def test_list_runs(self):
        self.make_run('ppo-pong-0', 'ppo')
        self.make_run('acd-pong-0')
        (self.root / 'not-a-run').mkdir()
        response = self.client.get(reverse('run-list'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        names = [run['name'] for run in response.json()['runs']]
        self.assertEqual(names, ['acd-pong-0', 'ppo-pong-0'])

    def test_served_without_contrib_apps(self):
        for app in ('django.contrib.auth', 'django.contrib.contenttypes', 'django.contrib.staticfiles'):
            self.assertFalse(apps.is_installed(app), app)
        self.make_run('acd-pong-0')
        response = self.client.get(reverse('run-list'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response['Content-Type'], 'application/json')

    def test_list_skips_unreadable_manifest(self):
        self.make_run('acd-pong-0')
        broken = self.root / 'broken'
        broken.mkdir()
        (broken / MANIFEST_FILE).write_text('{"algorithm": "acd"}')
        response = self.client.get(reverse('run-list'))
        self.assertEqual([run['name'] for run in response.json()['runs']], ['acd-pong-0'])

    def test_missing_runs_dir(self):
        with override_settings(ACD_RUNS_DIR=self.root / 'absent'):
            response = self.client.get(reverse('run-list'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.json()['runs'], [])

    def test_metrics(self):
        self.make_run('acd-pong-0', rows=3)
        response = self.client.get(reverse('run-metrics', args=['acd-pong-0']))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        data = response.json()
        self.assertEqual(data['algorithm'], 'acd')
        self.assertEqual([row['global_frame'] for row in data['rows']], [48, 96, 144])
        self.assertIsNone(data['rows'][0]['mean_return_100'])
        self.assertEqual(data['rows'][0]['d_loss'], 2.0)

    def test_unknown_run(self):
        response = self.client.get(reverse('run-metrics', args=['nope']))
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)
        self.assertIn('error', response.json())

    def test_path_outside_root(self):
        response = self.client.get('/api/runs/../metrics')
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)

    def test_malformed_metrics(self):
        run_dir = self.make_run('acd-pong-0')
        (run_dir / METRICS_FILE).write_text('frame,oops\n1,2\n')
        response = self.client.get(reverse('run-metrics', args=['acd-pong-0']))
        self.assertEqual(response.status_code, status.HTTP_500_INTERNAL_SERVER_ERROR)
