"""Process-wide prometheus instruments for solver, surrogate and training timing."""

from __future__ import annotations

import logging

from prometheus_client import Counter, Gauge, Histogram, start_http_server

from app.core.config import settings

logger = logging.getLogger(__name__)

_METRICS_SERVER_STARTED = False

SOLVER_STEP_SECONDS = Histogram(
    "urban_fno_solver_step_seconds",
    "Wall time of one semi-Lagrangian solver step.",
)
PROJECTION_FAILURES = Counter(
    "urban_fno_projection_failures_total",
    "Pressure projections that stopped above tolerance.",
)
SURROGATE_FORWARD_SECONDS = Histogram(
    "urban_fno_surrogate_forward_seconds",
    "Wall time of one FNO forward pass.",
)
TRAIN_EPOCH_SECONDS = Histogram(
    "urban_fno_train_epoch_seconds",
    "Wall time of one training epoch.",
    buckets=(1, 5, 15, 30, 60, 120, 300, 600, 1800, float("inf")),
)
TRAIN_LOSS = Gauge(
    "urban_fno_train_loss",
    "Mean layer-wise relative loss of the most recent epoch.",
    ["split"],
)


def start_metrics_server(port: int | None = None, host: str | None = None) -> bool:
    """Start the exporter once per process; returns True when it is running."""

    global _METRICS_SERVER_STARTED
    if _METRICS_SERVER_STARTED:
        return True
    port = port or settings.metrics_port
    host = host or settings.metrics_host
    try:
        start_http_server(port, addr=host)
    except OSError as exc:
        logger.warning("Metrics exporter failed to start on %s:%s: %s", host, port, exc)
        return False
    _METRICS_SERVER_STARTED = True
    logger.info("Metrics exporter listening on %s:%s", host, port)
    return True


__all__ = [
    "PROJECTION_FAILURES",
    "SOLVER_STEP_SECONDS",
    "SURROGATE_FORWARD_SECONDS",
    "TRAIN_EPOCH_SECONDS",
    "TRAIN_LOSS",
    "start_metrics_server",
]
