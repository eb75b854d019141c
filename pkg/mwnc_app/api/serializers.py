from django.conf import settings
from rest_framework import serializers

from mwnc_app.codec import CodecError, as_rational
from mwnc_app.coopsched import PlanningError
from mwnc_app.simulator import PROTOCOLS, ConfigError, SimConfig, build_topology


def _default(name):
    return lambda: settings.MWNC[name]


class TopologyField(serializers.JSONField):
    """
    Accepts either an explicit {"prp": [[...]], "K": k} matrix or a generated
    layout {"n", "radius", "d0", "alpha", "seed", "K"} and returns a Topology.
    """

    def to_internal_value(self, data):
        data = super().to_internal_value(data)
        try:
            return build_topology(data)
        except PlanningError as e:
            raise serializers.ValidationError(str(e))


class RationalField(serializers.Field):
    """Window speed as an exact rational; accepts 0.6, "0.6" or "3/5"."""

    def to_internal_value(self, data):
        if isinstance(data, bool):
            raise serializers.ValidationError("Expected a number or a fraction string.")
        try:
            value = as_rational(data)
        except CodecError as e:
            raise serializers.ValidationError(str(e))
        if not 0 < value <= 1:
            raise serializers.ValidationError("Must lie in (0, 1].")
        return value

    def to_representation(self, value):
        return float(value)


class PlanSerializer(serializers.Serializer):
    """
    Input of the relay planner: a topology, an optional channel count overriding
    the topology's own K, and the binary-search tolerance.
    """
    topology = TopologyField()
    K = serializers.IntegerField(min_value=1, required=False)
    delta = serializers.FloatField(default=_default("DEFAULT_DELTA"))

    def validate_delta(self, value):
        if not value > 0:
            raise serializers.ValidationError("delta must be positive.")
        return value

    def validate(self, data):
        if data.get("K") is not None:
            data["topology"] = data["topology"].with_k(data["K"])
        return data


class AnalyzeSerializer(serializers.Serializer):
    """
    (c_hat, v, w) triple for the closed-form models. Stability (v < c_hat) is
    left to the analysis itself so its message reaches the caller.
    """
    c_hat = serializers.FloatField(min_value=0.0, max_value=1.0)
    v = serializers.FloatField()
    w = serializers.IntegerField(min_value=2)

    def validate_c_hat(self, value):
        if value <= 0:
            raise serializers.ValidationError("c_hat must be positive.")
        return value

    def validate_v(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError("v must lie in (0, 1).")
        return value


class SimulateSerializer(serializers.Serializer):
    """
    One simulation run. Window protocols take exactly one of v and rho; the
    block baselines use block_size instead.
    """
    topology = TopologyField()
    protocol = serializers.ChoiceField(choices=PROTOCOLS, default="mwnc")
    K = serializers.IntegerField(min_value=1, required=False)
    w = serializers.IntegerField(min_value=1, default=20)
    v = RationalField(required=False, allow_null=True, default=None)
    rho = serializers.FloatField(required=False, allow_null=True, default=None)
    block_size = serializers.IntegerField(min_value=1, default=20)
    slots = serializers.IntegerField(min_value=1, default=_default("DEFAULT_SLOTS"))
    seed = serializers.IntegerField(min_value=0, default=_default("DEFAULT_SEED"))
    payload_len = serializers.IntegerField(min_value=0, default=0)
    delta = serializers.FloatField(default=_default("DEFAULT_DELTA"))
    debug = serializers.BooleanField(default=False)

    def validate(self, data):
        topology = data["topology"]
        if data.get("K") is not None:
            topology = topology.with_k(data["K"])
        try:
            data["config"] = SimConfig(
                topology=topology,
                protocol=data["protocol"],
                W=data["w"],
                V=data.get("v"),
                rho=data.get("rho"),
                block_size=data["block_size"],
                slots=data["slots"],
                seed=data["seed"],
                payload_len=data["payload_len"],
                warmup_fraction=settings.MWNC["WARMUP_FRACTION"],
                delta=data["delta"],
                debug=data["debug"],
            )
        except (ConfigError, CodecError) as e:
            raise serializers.ValidationError({"config": str(e)})
        return data


class GridSerializer(serializers.Serializer):
    """
    Shared part of sweep and compare: the protocol list, the network (a fixed
    topology or generated ones per node count) and the run settings.
    """
    protocols = serializers.ListField(child=serializers.ChoiceField(choices=PROTOCOLS), allow_empty=False)
    topology = TopologyField(required=False)
    grid_n = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    radius = serializers.FloatField(min_value=0.0, default=1.0)
    d0 = serializers.FloatField(min_value=0.0, default=1.0)
    alpha = serializers.FloatField(min_value=0.0, default=2.0)
    w = serializers.IntegerField(min_value=1, default=20)
    block_size = serializers.IntegerField(min_value=1, default=20)
    slots = serializers.IntegerField(min_value=1, default=_default("DEFAULT_SLOTS"))
    seed = serializers.IntegerField(min_value=0, default=_default("DEFAULT_SEED"))
    delta = serializers.FloatField(default=_default("DEFAULT_DELTA"))

    def validate(self, data):
        if data.get("topology") is None and not data.get("grid_n"):
            raise serializers.ValidationError("Give a topology or a nonempty grid_n.")
        if data.get("topology") is not None and data.get("grid_n"):
            raise serializers.ValidationError("Give either a topology or grid_n, not both.")
        for name in ("radius", "d0", "alpha", "delta"):
            if not data[name] > 0:
                raise serializers.ValidationError({name: "Must be positive."})
        return data


class SweepSerializer(GridSerializer):
    """
    Window protocols run over grid_w crossed with either grid_rho or a single
    fixed window speed v.
    """
    protocols = serializers.ListField(child=serializers.ChoiceField(choices=PROTOCOLS), allow_empty=False,
                                      default=lambda: ["mwnc"])
    K = serializers.IntegerField(min_value=1, default=1)
    grid_w = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False)
    grid_rho = serializers.ListField(child=serializers.FloatField(), allow_empty=False, required=False)
    v = RationalField(required=False, allow_null=True, default=None)

    def validate_grid_rho(self, value):
        if any(not 0 < rho <= 1 for rho in value):
            raise serializers.ValidationError("Every rho must lie in (0, 1].")
        return value

    def validate(self, data):
        data = super().validate(data)
        if (data.get("v") is None) == (not data.get("grid_rho")):
            raise serializers.ValidationError("Give exactly one of grid_rho and v.")
        return data


class CompareSerializer(GridSerializer):
    protocols = serializers.ListField(child=serializers.ChoiceField(choices=PROTOCOLS), allow_empty=False,
                                      default=lambda: ["mwncast", "coop-rlnc"])
    grid_k = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False,
                                   default=lambda: [1])
    rho = serializers.FloatField(required=False, allow_null=True, default=None)
    v = RationalField(required=False, allow_null=True, default=None)

    def validate_rho(self, value):
        if value is not None and not 0 < value <= 1:
            raise serializers.ValidationError("rho must lie in (0, 1].")
        return value

    def validate(self, data):
        data = super().validate(data)
        if data.get("rho") is not None and data.get("v") is not None:
            raise serializers.ValidationError("Give either rho or v, not both.")
        if data.get("v") is None and data.get("rho") is None:
            data["rho"] = 0.9
        return data
