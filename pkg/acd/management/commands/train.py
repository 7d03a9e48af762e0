"""
manage.py train — one PPO or ACD run on a toy game.

    python manage.py train --algo acd --env toy-pong --frames 300000 --seed 0 --out runs/acd-pong-0
"""
from django.core.management.base import CommandError

from acd.env_core import GameKind
from acd.hyperconfig import HyperConfig, config_load
from acd.trainer import ALGORITHMS, train

from ._base import AcdCommand, EXIT_RUNTIME, usage_error


class Command(AcdCommand):
    help = "Train PPO or ACD on a toy game; writes manifest, config, metrics and checkpoint to --out."

    def add_arguments(self, parser):
        parser.add_argument('--algo', required=True, choices=ALGORITHMS)
        parser.add_argument('--env', required=True, choices=[k.value for k in GameKind])
        parser.add_argument('--frames', type=int, default=None,
                            help="Raw frame budget (default: total_frames from the config)")
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--config', default=None, help="key=value hyperparameter file")
        parser.add_argument('--out', required=True, help="Run directory")
        parser.add_argument('--resume', action='store_true',
                            help="Continue from the checkpoint in --out if there is one")

    def handle(self, *args, **options):
        if options['frames'] is not None and options['frames'] < 1:
            raise usage_error(f"--frames must be >= 1, got {options['frames']}")

        cfg = config_load(options['config']) if options['config'] else HyperConfig()
        if options['frames'] is not None:
            cfg = cfg.replace(total_frames=options['frames'])

        try:
            manifest = train(options['algo'], options['env'], cfg.total_frames, options['seed'], cfg,
                             options['out'], resume=options['resume'])
        except KeyboardInterrupt:
            raise CommandError(f"Interrupted; continue with --resume --out {options['out']}",
                               returncode=EXIT_RUNTIME)

        self.stdout.write(self.style.SUCCESS(
            f"{manifest.algorithm} on {manifest.kind}: {manifest.updates} updates, "
            f"{manifest.global_frame} frames, {manifest.episodes_done} episodes -> {options['out']}"
        ))
