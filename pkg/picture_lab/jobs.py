"""Celery tasks for scan rows."""

from __future__ import annotations

from collections.abc import Sequence

from celery import group
from loguru import logger

from . import config
from .experiment import compute_scan_row, prepare_context
from .models import ExperimentConfig, ScanRow
from .worker import celery_app


@celery_app.task(name="picture_lab.run_scan_row")
def run_scan_row(config_payload: dict, f: float) -> dict:
    experiment = ExperimentConfig.model_validate(config_payload)
    context = prepare_context(experiment)
    return compute_scan_row(context, f).model_dump(mode="json")


def dispatch_scan_rows(experiment: ExperimentConfig, f_grid: Sequence[float]) -> list[ScanRow]:
    """Fan the f-grid out as one task per row; results come back in grid order."""
    if not f_grid:
        return []
    payload = experiment.model_dump(mode="json")
    logger.info(
        "dispatching {} scan rows (workers={}, eager={})",
        len(f_grid),
        config.settings.workers,
        celery_app.conf.task_always_eager,
    )
    result = group(run_scan_row.s(payload, float(f)) for f in f_grid).apply_async()
    return [ScanRow.model_validate(item) for item in result.get()]
