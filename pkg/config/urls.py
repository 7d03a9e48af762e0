"""
Root URL Router

    /api/runs/   read-only views over training run directories (acd app)
"""
from django.urls import path, include

urlpatterns = [
    path('api/runs/', include('acd.urls')),  # All /api/runs/* goes to acd app
]
