"""
URL configuration for core project.

The toolkit exposes its planner, analysis and single-run simulator under /api/.
"""
from django.urls import path, include

urlpatterns = [
    path('api/', include('mwnc_app.api.urls')),
]
