"""Celery application instance."""

from __future__ import annotations

from celery import Celery

from . import config

celery_app = Celery(
    "picture_lab",
    broker=config.settings.broker_url,
    backend=config.settings.result_backend,
    include=["picture_lab.jobs"],
)
celery_app.conf.update(
    task_serializer="json",
    result_serializer="json",
    accept_content=["json"],
    timezone="UTC",
    enable_utc=True,
    task_always_eager=config.settings.celery_task_always_eager,
    task_eager_propagates=True,
    worker_concurrency=config.settings.workers,
)


__all__ = ["celery_app"]
