from django.conf import settings
from django.core.management.base import CommandError

from mwnc_app.api.serializers import CompareSerializer
from mwnc_app.api.services import dump_json, frame_to_csv, run_compare, write_text

from ._experiment import USER_ERROR, ExperimentCommand, int_list, str_list


class Command(ExperimentCommand):
    help = (
        "Run the cooperative protocols side by side over generated networks and channel counts; "
        "prints the per-run CSV and optionally writes a summary JSON with the relative gains."
    )
    serializer_class = CompareSerializer

    def add_arguments(self, parser):
        parser.add_argument("--spec", help="JSON file with the comparison settings; flags override it.")
        parser.add_argument("--topology", help="Topology JSON file; otherwise use --grid-n.")
        parser.add_argument("--protocols", help="Comma list; the first one is compared against the rest.")
        parser.add_argument("--grid-n", help="Node counts of generated networks.")
        parser.add_argument("--grid-k", help="Channel counts, e.g. 1,2,3.")
        parser.add_argument("--k", type=int, help="Single channel count; same as a one-element --grid-k.")
        parser.add_argument("--rho", type=float, help="Load of the window protocols.")
        parser.add_argument("--v", help="Fixed window speed such as 3/5 instead of a load.")
        parser.add_argument("--delta", type=float)
        parser.add_argument("--w", type=int)
        parser.add_argument("--block-size", type=int)
        parser.add_argument("--slots", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--summary", help="Write the summary JSON here.")
        parser.add_argument("--progress", action="store_true", help="Show a progress bar on stderr.")
        self.add_common_arguments(parser)

    def handle(self, *args, **options):
        data = self.read_spec(options["spec"])
        if options["topology"]:
            data["topology"] = self.read_spec(options["topology"])
        for flag, parse in (("protocols", str_list), ("grid_n", int_list), ("grid_k", int_list)):
            if options[flag] is not None:
                data[flag] = self.parse_list(parse, options[flag], flag.replace("_", "-"))
        if options["k"] is not None:
            if options["grid_k"] is not None:
                raise CommandError("Give --k or --grid-k, not both.", returncode=USER_ERROR)
            data["grid_k"] = [options["k"]]
        for flag in ("rho", "v", "w", "delta", "block_size", "slots", "seed"):
            if options[flag] is not None:
                data[flag] = options[flag]
        valid = self.validated(data)
        frame, summary = self.guard(run_compare, valid, progress=options["progress"] or settings.MWNC["PROGRESS"])
        self.emit(frame_to_csv(frame), options["out"])
        if options["summary"]:
            write_text(dump_json(summary), options["summary"])
            self.stderr.write(f"Wrote {options['summary']}")
