"""
manage.py ae_experiment — autoencoder blur baseline plus standalone GAN pretraining.

    python manage.py ae_experiment --env toy-pong --frames-dataset 10000 --epochs 20 --out runs/ae-pong
"""
import json

from acd.ae_baseline import run_ae_experiment, run_ae_study
from acd.env_core import GameKind
from acd.hyperconfig import HyperConfig, config_load

from ._base import AcdCommand, usage_error


class Command(AcdCommand):
    help = "Collect a random-policy dataset, train the autoencoder and the GAN, report region errors."

    def add_arguments(self, parser):
        parser.add_argument('--env', required=True, choices=[k.value for k in GameKind])
        parser.add_argument('--frames-dataset', type=int, default=10000)
        parser.add_argument('--epochs', type=int, default=20)
        parser.add_argument('--out', required=True)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--repeats', type=int, default=1,
                            help="Run seeds seed..seed+repeats-1 and test the blur ratio across them")
        parser.add_argument('--gan-steps', type=int, default=None,
                            help="Default: as many minibatch steps as the autoencoder gets")
        parser.add_argument('--config', default=None)

    def handle(self, *args, **options):
        for name in ('epochs', 'repeats'):
            if options[name] < 1:
                raise usage_error(f"--{name.replace('_', '-')} must be >= 1, got {options[name]}")
        if options['frames_dataset'] < 2:
            raise usage_error("--frames-dataset must be >= 2 (one frame is held out)")
        if options['gan_steps'] is not None and options['gan_steps'] < 0:
            raise usage_error(f"--gan-steps must be >= 0, got {options['gan_steps']}")

        cfg = config_load(options['config']) if options['config'] else HyperConfig()
        args = (options['env'], options['frames_dataset'], options['epochs'], options['out'])
        if options['repeats'] == 1:
            report = run_ae_experiment(*args, seed=options['seed'], gan_steps=options['gan_steps'], cfg=cfg)
            headline = {**report['region_errors'], **report['discriminator_scores']}
        else:
            seeds = range(options['seed'], options['seed'] + options['repeats'])
            headline = run_ae_study(*args, seeds=seeds, gan_steps=options['gan_steps'], cfg=cfg)

        self.stdout.write(json.dumps(headline, indent=2))
        self.stdout.write(self.style.SUCCESS(f"Report written to {options['out']}"))
