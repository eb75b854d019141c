"""
Shared plumbing for the experiment commands: flag parsing helpers, input
validation through the API serializers, and the exit-code mapping
(2 for bad input or an infeasible/unstable request, 3 for numeric failures).
"""
import logging

from django.core.management.base import BaseCommand, CommandError

from mwnc_app.api.services import (
    ExperimentInputError, ExperimentNumericError, dump_json, first_error, load_json, write_text,
)

logger = logging.getLogger(__name__)

USER_ERROR = 2
NUMERIC_ERROR = 3


def int_list(text):
    """'4,8,12' or '4..24' (inclusive) or a mix such as '4..8,16'."""
    values = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return values


def float_list(text):
    return [float(p) for p in text.split(",") if p.strip()]


def str_list(text):
    return [p.strip() for p in text.split(",") if p.strip()]


class ExperimentCommand(BaseCommand):
    serializer_class = None

    def add_common_arguments(self, parser):
        parser.add_argument("--out", help="Write the result here instead of stdout.")

    def validated(self, data):
        serializer = self.serializer_class(data=data)
        if not serializer.is_valid():
            raise CommandError(first_error(serializer.errors), returncode=USER_ERROR)
        return serializer.validated_data

    def read_spec(self, path):
        return dict(self.guard(load_json, path)) if path else {}

    def parse_list(self, parser, text, name):
        try:
            return parser(text)
        except ValueError:
            raise CommandError(f"Cannot parse --{name} {text!r}.", returncode=USER_ERROR)

    def guard(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ExperimentInputError as e:
            raise CommandError(str(e), returncode=USER_ERROR)
        except ExperimentNumericError as e:
            logger.exception("%s failed", fn.__name__)
            raise CommandError(f"Numeric failure: {e}", returncode=NUMERIC_ERROR)

    def emit(self, text, out=None):
        if out:
            write_text(text, out)
            self.stderr.write(f"Wrote {out}")
        else:
            self.stdout.write(text, ending="")

    def emit_json(self, payload, out=None):
        self.emit(dump_json(payload), out)
