"""
Run Views — read-only JSON over finished training runs

GET /api/runs/
  Every directory under ACD_RUNS_DIR that holds a manifest.json.

GET /api/runs/<name>/metrics
  1. Resolve the run directory (404 if absent)
  2. Read manifest.json + metrics.csv
  3. Return one JSON object per update row
"""
import logging
from dataclasses import asdict
from pathlib import Path

from django.conf import settings
from rest_framework import status
from rest_framework.response import Response
from rest_framework.views import APIView

from .metrics import read_metrics
from .trainer import MANIFEST_FILE, METRICS_FILE, RunManifest

logger = logging.getLogger('acd.views')

ROW_FIELDS = ('global_frame', 'episodes_done', 'mean_return_100', 'policy_loss', 'value_loss', 'entropy',
              'd_loss', 'g_loss', 'mean_real_score', 'mean_fake_score')


def runs_root():
    return Path(settings.ACD_RUNS_DIR)


def run_directory(name):
    """The run's directory, or FileNotFoundError if `name` is not a run under the runs root."""
    root = runs_root().resolve()
    run_dir = (root / name).resolve()
    if run_dir.parent != root or not (run_dir / MANIFEST_FILE).is_file():
        raise FileNotFoundError(f"No run named {name!r}")
    return run_dir


def manifest_summary(name, manifest):
    return {
        "name": name,
        "algorithm": manifest.algorithm,
        "kind": manifest.kind,
        "seed": manifest.seed,
        "total_frames": manifest.total_frames,
        "updates": manifest.updates,
        "global_frame": manifest.global_frame,
        "episodes_done": manifest.episodes_done,
        "started_at": manifest.started_at,
        "finished_at": manifest.finished_at,
    }


class RunListView(APIView):
    """
    GET /api/runs/
    Lists runs, newest name last (sorted by directory name).
    """

    def get(self, request):
        root = runs_root()
        if not root.is_dir():
            logger.info(f"Runs directory {root} does not exist yet")
            return Response({"runs_dir": str(root), "runs": []})

        runs = []
        for run_dir in sorted(p for p in root.iterdir() if (p / MANIFEST_FILE).is_file()):
            try:
                runs.append(manifest_summary(run_dir.name, RunManifest.load(run_dir)))
            except (ValueError, TypeError, KeyError) as e:
                logger.warning(f"Skipping {run_dir}: unreadable manifest ({e})")

        logger.info(f"Listed {len(runs)} runs under {root}")
        return Response({"runs_dir": str(root), "runs": runs})


class RunMetricsView(APIView):
    """
    GET /api/runs/<name>/metrics
    Manifest summary plus every metrics row of one run.
    """

    def get(self, request, name):
        try:
            run_dir = run_directory(name)
            manifest = RunManifest.load(run_dir)
            metrics_path = run_dir / METRICS_FILE
            records = read_metrics(metrics_path) if metrics_path.is_file() else []
        except FileNotFoundError as e:
            logger.warning(f"Metrics request for unknown run: {e}")
            return Response({"error": str(e)}, status=status.HTTP_404_NOT_FOUND)
        except (ValueError, TypeError, KeyError) as e:
            logger.error(f"Run {name} has malformed files: {e}")
            return Response(
                {"error": f"Run {name!r} could not be read: {e}"},
                status=status.HTTP_500_INTERNAL_SERVER_ERROR
            )

        rows = []
        for record in records:
            data = asdict(record)
            rows.append({key: data[key] for key in ROW_FIELDS})

        logger.info(f"Returning {len(rows)} metrics rows for run {name}")
        return Response({**manifest_summary(name, manifest), "rows": rows})
