"""
Runs URL Router

Read-only views over finished run directories under ACD_RUNS_DIR.
"""
from django.urls import path
from .views import RunListView, RunMetricsView

urlpatterns = [
    path('', RunListView.as_view(), name='run-list'),
    # GET /api/runs/ → RunListView
    path('<str:name>/metrics', RunMetricsView.as_view(), name='run-metrics'),
    # GET /api/runs/<name>/metrics → RunMetricsView
]
