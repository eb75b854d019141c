import logging
from django.conf import settings
from rest_framework.views import APIView
from rest_framework.response import Response
from rest_framework import status, permissions

from .serializers import AnalyzeSerializer, PlanSerializer, SimulateSerializer
from .services import ExperimentInputError, analyze_payload, plan_payload, simulate_payload

logger = logging.getLogger(__name__)


def _invalid(serializer):
    return Response({"detail": "Invalid request data.", "errors": serializer.errors},
                    status=status.HTTP_400_BAD_REQUEST)


def _failed(view_name, exc):
    logger.exception("%s failed", view_name)
    msg = f"Internal server error: {exc}" if settings.DEBUG else "Internal server error."
    return Response({"detail": msg}, status=status.HTTP_500_INTERNAL_SERVER_ERROR)


class PlanView(APIView):
    """
    POST /api/plan/
    Computes the relay plan for a topology.
    Expected request data: {"topology": {"prp": [[...]], "K": 2}, "delta": 0.001}
    """
    permission_classes = (permissions.AllowAny,)

    def post(self, request):
        serializer = PlanSerializer(data=request.data)
        if not serializer.is_valid():
            return _invalid(serializer)
        data = serializer.validated_data
        try:
            payload = plan_payload(data["topology"], data["delta"])
        except ExperimentInputError as e:
            return Response({"detail": str(e)}, status=status.HTTP_400_BAD_REQUEST)
        except Exception as e:
            return _failed("PlanView", e)
        return Response(payload, status=status.HTTP_200_OK)


class AnalyzeView(APIView):
    """
    POST /api/analyze/
    Evaluates the closed-form loss, delay and complexity models.
    Expected request data: {"c_hat": 0.8, "v": 0.6, "w": 20}
    """
    permission_classes = (permissions.AllowAny,)

    def post(self, request):
        serializer = AnalyzeSerializer(data=request.data)
        if not serializer.is_valid():
            return _invalid(serializer)
        data = serializer.validated_data
        try:
            payload = analyze_payload(data["c_hat"], data["v"], data["w"])
        except ExperimentInputError as e:
            return Response({"detail": str(e)}, status=status.HTTP_400_BAD_REQUEST)
        except Exception as e:
            return _failed("AnalyzeView", e)
        return Response(payload, status=status.HTTP_200_OK)


class SimulateView(APIView):
    """
    POST /api/simulate/
    Runs one simulation and returns its metrics.
    Expected request data: {"topology": {...}, "protocol": "mwncast", "w": 20, "rho": 0.9, "slots": 10000, "seed": 1}
    """
    permission_classes = (permissions.AllowAny,)

    def post(self, request):
        serializer = SimulateSerializer(data=request.data)
        if not serializer.is_valid():
            return _invalid(serializer)
        try:
            payload = simulate_payload(serializer.validated_data["config"])
        except ExperimentInputError as e:
            return Response({"detail": str(e)}, status=status.HTTP_400_BAD_REQUEST)
        except Exception as e:
            return _failed("SimulateView", e)
        return Response(payload, status=status.HTTP_200_OK)
