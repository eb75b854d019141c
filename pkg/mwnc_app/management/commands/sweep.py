from django.conf import settings
from django.core.management.base import CommandError

from mwnc_app.api.serializers import SweepSerializer
from mwnc_app.api.services import frame_to_csv, run_sweep

from ._experiment import USER_ERROR, ExperimentCommand, float_list, int_list, str_list


class Command(ExperimentCommand):
    help = "Simulate a grid of (network, protocol, W, rho) points and print one CSV row per run."
    serializer_class = SweepSerializer

    def add_arguments(self, parser):
        parser.add_argument("--spec", help="JSON file with the sweep settings; flags override it.")
        parser.add_argument("--topology", help="Topology JSON file; otherwise use --grid-n.")
        parser.add_argument("--protocols", help="Comma list, e.g. mwnc,rlnc.")
        parser.add_argument("--grid-n", help="Node counts of generated networks, e.g. 5,10 or 5..8.")
        parser.add_argument("--grid-w", help="Window sizes, e.g. 4..24 or 10,20,30.")
        parser.add_argument("--grid-rho", help="Loads, e.g. 0.5,0.7,0.9.")
        parser.add_argument("--w", type=int, help="Single window size; same as a one-element --grid-w.")
        parser.add_argument("--rho", type=float, help="Single load; same as a one-element --grid-rho.")
        parser.add_argument("--v", help="Fixed window speed such as 3/5; replaces the rho axis.")
        parser.add_argument("--delta", type=float)
        parser.add_argument("--k", type=int)
        parser.add_argument("--block-size", type=int)
        parser.add_argument("--slots", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--progress", action="store_true", help="Show a progress bar on stderr.")
        self.add_common_arguments(parser)

    def handle(self, *args, **options):
        data = self.read_spec(options["spec"])
        if options["topology"]:
            data["topology"] = self.read_spec(options["topology"])
        for flag, parse in (("protocols", str_list), ("grid_n", int_list), ("grid_w", int_list),
                            ("grid_rho", float_list)):
            if options[flag] is not None:
                data[flag] = self.parse_list(parse, options[flag], flag.replace("_", "-"))
        for single, grid in (("w", "grid_w"), ("rho", "grid_rho")):
            if options[single] is not None:
                if options[grid] is not None:
                    raise CommandError(f"Give --{single} or --{grid.replace('_', '-')}, not both.",
                                       returncode=USER_ERROR)
                data[grid] = [options[single]]
        for flag, key in (("k", "K"), ("v", "v"), ("delta", "delta"), ("block_size", "block_size"),
                          ("slots", "slots"), ("seed", "seed")):
            if options[flag] is not None:
                data[key] = options[flag]
        valid = self.validated(data)
        frame = self.guard(run_sweep, valid, progress=options["progress"] or settings.MWNC["PROGRESS"])
        self.emit(frame_to_csv(frame), options["out"])
