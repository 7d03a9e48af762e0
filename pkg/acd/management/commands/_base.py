"""
Shared plumbing for the acd management commands.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Under call_command
both failure kinds surface as CommandError with the matching returncode.
"""
import logging
import sys

from django.core.management.base import BaseCommand, CommandError

logger = logging.getLogger('acd.commands')

EXIT_USAGE = 1
EXIT_RUNTIME = 2


def usage_error(message):
    return CommandError(message, returncode=EXIT_USAGE)


class AcdCommand(BaseCommand):
    requires_system_checks = []
    runtime_errors = (ValueError, OSError)

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)

        def error(message):
            if parser.called_from_command_line:
                parser.print_usage(sys.stderr)
                parser.exit(EXIT_USAGE, f"{parser.prog}: error: {message}\n")
            raise usage_error(f"Error: {message}")

        parser.error = error
        return parser

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except CommandError:
            raise
        except self.runtime_errors as e:
            logger.error(f"{type(e).__name__}: {e}")
            raise CommandError(str(e), returncode=EXIT_RUNTIME) from e
