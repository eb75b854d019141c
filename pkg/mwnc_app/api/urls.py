from django.urls import path
from .views import AnalyzeView, PlanView, SimulateView


urlpatterns = [
    path('plan/', PlanView.as_view(), name='plan'),
    path('analyze/', AnalyzeView.as_view(), name='analyze'),
    path('simulate/', SimulateView.as_view(), name='simulate'),
]
