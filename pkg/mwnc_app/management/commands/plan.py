from mwnc_app.api.serializers import PlanSerializer
from mwnc_app.api.services import plan_payload

from ._experiment import ExperimentCommand


class Command(ExperimentCommand):
    help = "Select relays and split their airtime for a topology file; prints the plan as JSON."
    serializer_class = PlanSerializer

    def add_arguments(self, parser):
        parser.add_argument("--topology", required=True, help="JSON file with {\"prp\": [[...]], \"K\": k}.")
        parser.add_argument("--k", type=int, help="Channel count; overrides the file's K.")
        parser.add_argument("--delta", type=float, help="Binary-search tolerance on the target rate.")
        self.add_common_arguments(parser)

    def handle(self, *args, **options):
        data = {"topology": self.read_spec(options["topology"])}
        if options["k"] is not None:
            data["K"] = options["k"]
        if options["delta"] is not None:
            data["delta"] = options["delta"]
        valid = self.validated(data)
        payload = self.guard(plan_payload, valid["topology"], valid["delta"])
        self.emit_json(payload, options["out"])
