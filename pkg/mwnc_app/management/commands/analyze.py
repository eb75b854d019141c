from mwnc_app.api.serializers import AnalyzeSerializer
from mwnc_app.api.services import analyze_payload

from ._experiment import ExperimentCommand


class Command(ExperimentCommand):
    help = "Evaluate the random-walk loss, delay and complexity models for (c_hat, v, w)."
    serializer_class = AnalyzeSerializer

    def add_arguments(self, parser):
        parser.add_argument("--c-hat", type=float, required=True, help="Equivalent channel capacity.")
        parser.add_argument("--v", type=float, required=True, help="Window speed in packets per slot.")
        parser.add_argument("--w", type=int, required=True, help="Window size in packets.")
        self.add_common_arguments(parser)

    def handle(self, *args, **options):
        valid = self.validated({"c_hat": options["c_hat"], "v": options["v"], "w": options["w"]})
        payload = self.guard(analyze_payload, valid["c_hat"], valid["v"], valid["w"])
        self.emit_json(payload, options["out"])
