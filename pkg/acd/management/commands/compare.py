"""
manage.py compare — averaged learning curves, one per algorithm.

    python manage.py compare --runs runs/ppo-0,runs/ppo-1,runs/acd-0,runs/acd-1 --out pong.png
"""
from acd.reporting import compare

from ._base import AcdCommand, usage_error


class Command(AcdCommand):
    help = "Plot mean_return_100 averaged across seeds per algorithm; summary goes next to the plot as .txt."

    def add_arguments(self, parser):
        parser.add_argument('--runs', required=True, help="Comma-separated run directories")
        parser.add_argument('--out', required=True, help="Plot file (.png, .svg or .pdf)")

    def handle(self, *args, **options):
        run_dirs = [d.strip() for d in options['runs'].split(',') if d.strip()]
        if not run_dirs:
            raise usage_error("--runs needs at least one directory")

        summary = compare(run_dirs, options['out'])
        self.stdout.write(summary)
        self.stdout.write(self.style.SUCCESS(f"Plot written to {options['out']}"))
