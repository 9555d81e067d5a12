"""Minimal thread-backed job registry for long-running training runs.

Jobs run on a small thread pool owned by the app (training itself may fan
out to process workers); status and log lines are polled over HTTP.
"""

from __future__ import annotations

import threading
import traceback
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional


@dataclass
class Job:
    job_id: str
    state: str = "pending"  # pending | running | done | failed
    log: list[str] = field(default_factory=list)
    error: Optional[str] = None
    result: Optional[object] = None


class JobRegistry:
    def __init__(self, max_workers: int = 2):
        self._executor = ThreadPoolExecutor(max_workers=max_workers,
                                            thread_name_prefix="job")
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def submit(self, fn: Callable[[Callable[[str], None]], object]) -> str:
        """Schedule fn(log_fn); returns the job id immediately."""
        job = Job(job_id=uuid.uuid4().hex[:12])
        with self._lock:
            self._jobs[job.job_id] = job

        def log(line: str) -> None:
            with self._lock:
                job.log.append(line)

        def run() -> None:
            with self._lock:
                job.state = "running"
            try:
                result = fn(log)
            except Exception as exc:  # surfaced through the status endpoint
                with self._lock:
                    job.state = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"
                    job.log.append(traceback.format_exc())
            else:
                with self._lock:
                    job.state = "done"
                    job.result = result

        self._executor.submit(run)
        return job.job_id

    def status(self, job_id: str, since: int = 0):
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                return None
            return {
                "job_id": job.job_id,
                "state": job.state,
                "log_lines": job.log[since:],
                "log_cursor": len(job.log),
                "error": job.error,
                "result": job.result,
            }

    def shutdown(self) -> None:
        self._executor.shutdown(wait=False, cancel_futures=True)
