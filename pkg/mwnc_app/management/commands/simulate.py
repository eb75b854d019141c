from mwnc_app.api.serializers import SimulateSerializer
from mwnc_app.api.services import simulate_payload

from ._experiment import ExperimentCommand


class Command(ExperimentCommand):
    help = "Run one simulation from a config JSON and/or flags; prints the metrics as JSON."
    serializer_class = SimulateSerializer

    def add_arguments(self, parser):
        parser.add_argument("--config", help="JSON file with the run settings; flags override it.")
        parser.add_argument("--topology", help="Topology JSON file.")
        parser.add_argument("--protocol", help="mwnc, mwncast, rlnc or coop-rlnc.")
        parser.add_argument("--k", type=int)
        parser.add_argument("--w", type=int)
        parser.add_argument("--v", help="Window speed, e.g. 0.6 or 3/5.")
        parser.add_argument("--rho", type=float, help="Target load; sets V = rho * C*.")
        parser.add_argument("--block-size", type=int)
        parser.add_argument("--slots", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--debug", action="store_true", help="Check per-slot invariants.")
        self.add_common_arguments(parser)

    def handle(self, *args, **options):
        data = self.read_spec(options["config"])
        if options["topology"]:
            data["topology"] = self.read_spec(options["topology"])
        for flag, key in (("protocol", "protocol"), ("k", "K"), ("w", "w"), ("v", "v"), ("rho", "rho"),
                          ("block_size", "block_size"), ("slots", "slots"), ("seed", "seed")):
            if options[flag] is not None:
                data[key] = options[flag]
        if options["debug"]:
            data["debug"] = True
        valid = self.validated(data)
        payload = self.guard(simulate_payload, valid["config"])
        self.emit_json(payload, options["out"])
