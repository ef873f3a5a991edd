"""Celery application and trial execution.

Without ``POLYATTN_BROKER_URL`` the app runs eagerly and trials execute
in-process on a thread pool of ``polyattn_threads`` workers. With a broker
the trials of a cell are split into chunks of ``polyattn_chunk_size`` and
dispatched as a Celery group; start workers with

    POLYATTN_BROKER_URL=amqp://... celery -A polyattn.tasks worker

Either way the returned rows are sorted by trial index, so the result does
not depend on how the trials were scheduled.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional

from celery import Celery, group
from celery.utils.log import get_logger, get_task_logger

from polyattn.trials import TrialCell, run_trial

logger = get_logger(__name__)
task_logger = get_task_logger(__name__)

app = Celery("polyattn")
app.conf.update(
    polyattn_threads=int(os.getenv("POLYATTN_THREADS", "1")),
    polyattn_chunk_size=64,
    polyattn_result_timeout=600,
    surrealdb_url=os.getenv("POLYATTN_SURREALDB_URL", "ws://localhost:8000/rpc"),
    surrealdb_namespace="polyattn",
    surrealdb_database="reports",
    surrealdb_username="root",
    surrealdb_password="root",
    result_expires=7 * 86400,
    task_serializer="json",
    result_serializer="json",
    accept_content=["json"],
)

_broker_url = os.getenv("POLYATTN_BROKER_URL")
if _broker_url:
    app.conf.update(broker_url=_broker_url, result_backend="rpc://")
else:
    app.conf.update(task_always_eager=True, task_eager_propagates=True)


@app.task(name="polyattn.run_trial_chunk")
def run_trial_chunk(cell: Dict[str, Any], indices: List[int]) -> List[Dict[str, Any]]:
    """Run the given trial indices of one cell."""
    trial_cell = TrialCell.from_dict(cell)
    task_logger.debug("running %d trials of %s/%s n=%d", len(indices), trial_cell.label, trial_cell.regime, trial_cell.n)
    return [run_trial(trial_cell, i) for i in indices]


def chunked(trials: int, size: int) -> List[List[int]]:
    size = max(1, int(size))
    return [list(range(start, min(start + size, trials))) for start in range(0, trials, size)]


def run_trials(
    cell: TrialCell,
    trials: int,
    celery_app: Optional[Celery] = None,
    threads: Optional[int] = None,
) -> List[Dict[str, Any]]:
    """Run trials 0..trials-1 of a cell, locally or through the broker.

    Args:
        cell: the fixed parameters of the cell
        trials: number of trials
        celery_app: app whose configuration decides local vs broker
            execution and, with a broker, the app the chunks are sent
            through by task name (defaults to ``polyattn.tasks.app``)
        threads: local worker count, overriding ``polyattn_threads``

    Returns:
        One row per trial, sorted by ``trial_index``
    """
    target = celery_app or app
    conf = target.conf
    if conf.get("task_always_eager"):
        workers = threads if threads is not None else conf.get("polyattn_threads", 1)
        with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
            rows = list(pool.map(lambda i: run_trial(cell, i), range(trials)))
    else:
        chunks = chunked(trials, conf.get("polyattn_chunk_size", 64))
        logger.info("dispatching %d trials in %d chunks", trials, len(chunks))
        job = group(
            [target.signature(run_trial_chunk.name, args=(cell.to_dict(), chunk)) for chunk in chunks],
            app=target,
        )
        result = job.apply_async()
        rows = [row for part in result.get(timeout=conf.get("polyattn_result_timeout", 600)) for row in part]
    return sorted(rows, key=lambda row: row["trial_index"])
