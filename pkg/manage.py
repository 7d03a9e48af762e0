#!/usr/bin/env python
"""
ACD command line.

    python manage.py train --algo acd --env toy-pong --frames 300000 --out runs/acd-pong-0
    python manage.py ae_experiment --env toy-pong --out runs/ae-pong
    python manage.py compare --runs runs/ppo-pong-0,runs/acd-pong-0 --out pong.png
    python manage.py test acd
"""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install the requirements (pip install -r requirements.txt) "
            "into the active environment."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
