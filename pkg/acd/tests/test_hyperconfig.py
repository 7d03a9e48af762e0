import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from acd.hyperconfig import ConfigError, HyperConfig, config_load


class HyperConfigTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text):
        path = Path(self.tmp.name) / 'run.cfg'
        path.write_text(text)
        return path

    def test_defaults(self):
        cfg = HyperConfig()
        self.assertEqual(cfg.gamma, 0.99)
        self.assertEqual(cfg.gae_lambda, 0.95)
        self.assertEqual(cfg.clip_eps, 0.1)
        self.assertEqual(cfg.minibatch, 32)
        self.assertEqual(cfg.optimizer, 'rmsprop')
        self.assertEqual(cfg.learning_rate, 3e-4)
        self.assertEqual((cfg.n_env, cfg.horizon, cfg.epochs, cfg.latent_dim), (8, 128, 3, 100))
        self.assertEqual((cfg.c1, cfg.c2), (1.0, 0.01))
        self.assertEqual(cfg.samples_per_update, 1024)

    def test_empty_file_gives_defaults(self):
        self.assertEqual(config_load(self.write('')), HyperConfig())
        self.assertEqual(config_load(self.write('# only a comment\n\n')), HyperConfig())

    def test_overrides_aliases_and_comments(self):
        cfg = config_load(self.write(
            "gamma=0.9\n"
            "lambda = 0.8   # alias\n"
            "lr=0.001\n"
            "horizon=16\n"
            "n_env=4\n"
            "minibatch=16\n"
            "generator_step=false\n"
            "curve_metric=discounted\n"
        ))
        self.assertEqual(cfg.gamma, 0.9)
        self.assertEqual(cfg.gae_lambda, 0.8)
        self.assertEqual(cfg.learning_rate, 0.001)
        self.assertEqual((cfg.horizon, cfg.n_env, cfg.minibatch), (16, 4, 16))
        self.assertFalse(cfg.generator_step)
        self.assertEqual(cfg.curve_metric, 'discounted')
        self.assertEqual(cfg.clip_eps, 0.1)

    def test_out_of_range_reports_line(self):
        with self.assertRaises(ConfigError) as ctx:
            config_load(self.write("c_d=0.5\ngamma=1.5\n"))
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn('gamma', str(ctx.exception))

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            config_load(self.write("gamma=0.9\nwarp_speed=9\n"))
        self.assertEqual(ctx.exception.line, 2)

    def test_duplicate_key_via_alias(self):
        with self.assertRaises(ConfigError) as ctx:
            config_load(self.write("gae_lambda=0.9\nlambda=0.8\n"))
        self.assertEqual(ctx.exception.line, 2)

    def test_malformed_line(self):
        with self.assertRaises(ConfigError) as ctx:
            config_load(self.write("gamma 0.9\n"))
        self.assertEqual(ctx.exception.line, 1)

    def test_bad_cast(self):
        with self.assertRaises(ConfigError) as ctx:
            config_load(self.write("horizon=12.5\n"))
        self.assertEqual(ctx.exception.line, 1)
        with self.assertRaises(ConfigError):
            config_load(self.write("gamma=high\n"))

    def test_minibatch_must_divide_samples(self):
        with self.assertRaises(ConfigError):
            HyperConfig(horizon=10, n_env=3, minibatch=32)

    def test_invalid_values_rejected(self):
        for bad in ({'clip_eps': 0.0}, {'c_d': -1.0}, {'learning_rate': 0.0}, {'optimizer': 'adam'},
                    {'curve_metric': 'median'}, {'epochs': 0}):
            with self.assertRaises(ConfigError, msg=bad):
                HyperConfig(**bad)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            config_load(Path(self.tmp.name) / 'absent.cfg')

    def test_text_snapshot_loads_back(self):
        cfg = HyperConfig(gamma=0.97, c_d=0.25, horizon=64, generator_step=False, curve_metric='discounted')
        self.assertEqual(config_load(self.write(cfg.to_text())), cfg)
        self.assertEqual(HyperConfig.from_mapping(cfg.to_dict()), cfg)
