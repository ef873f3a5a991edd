"""SurrealDB archive of experiment reports."""

import json
from datetime import timedelta
from typing import Any, Dict, List, Optional

from celery import Celery
from celery.utils.log import get_logger
from surrealdb import Surreal

from polyattn.report import ExperimentReport, config_id

logger = get_logger(__name__)


class ReportStore:
    """Keeps experiment reports in SurrealDB, keyed by the hash of their config.

    Configuration options (via app.conf):
        - surrealdb_url: WebSocket URL (default: ws://localhost:8000/rpc)
        - surrealdb_namespace: Namespace to use (default: polyattn)
        - surrealdb_database: Database to use (default: reports)
        - surrealdb_username: Username for authentication (default: root)
        - surrealdb_password: Password for authentication (default: root)
        - result_expires: age after which ``cleanup`` drops a report
    """

    def __init__(self, app: Optional[Celery] = None):
        if app is None:
            from polyattn.tasks import app
        self.app = app

        conf = self.app.conf
        self._url = conf.get('surrealdb_url', 'ws://localhost:8000/rpc')
        self._namespace = conf.get('surrealdb_namespace', 'polyattn')
        self._database = conf.get('surrealdb_database', 'reports')
        self._username = conf.get('surrealdb_username', 'root')
        self._password = conf.get('surrealdb_password', 'root')

        # connected lazily on first use
        self._client = None
        self._connected = False

    def _ensure_connected(self):
        if self._connected and self._client:
            return

        self._client = Surreal(self._url)
        self._client.signin({
            "username": self._username,
            "password": self._password
        })
        self._client.use(
            namespace=self._namespace,
            database=self._database
        )
        self._connected = True
        logger.debug("connected to SurrealDB at %s", self._url)

    def save_report(self, report: ExperimentReport) -> str:
        """Upsert a report and return its id.

        The id is the SHA-256 of the report's configuration, so re-running
        the same configuration overwrites the previous record.
        """
        self._ensure_connected()

        report_id = config_id(report.config)
        data = {
            "kind": report.kind,
            "passed": report.passed,
            # full report as JSON text; source of truth
            "report": json.dumps(report.to_dict(), sort_keys=True),
            "date_done": self.app.now().isoformat(),
        }
        self._client.query(
            "UPSERT type::thing('report', $report_id) CONTENT $data;",
            {
                "report_id": report_id,
                "data": data
            }
        )
        logger.info("stored %s report %s", report.kind, report_id)
        return report_id

    def load_report(self, report_id: str) -> Optional[ExperimentReport]:
        """The stored report, or None when no record has this id."""
        self._ensure_connected()

        result = self._client.query(
            "SELECT * FROM type::thing('report', $report_id);",
            {"report_id": report_id}
        )
        if not result:
            return None

        encoded = result[0]["report"]
        # SurrealDB may hand back parsed JSON
        if isinstance(encoded, dict):
            return ExperimentReport.from_dict(encoded)
        return ExperimentReport.from_dict(json.loads(encoded))

    def list_reports(self, kind: Optional[str] = None) -> List[Dict[str, Any]]:
        """id, kind, passed and date_done of every stored report."""
        self._ensure_connected()

        if kind is None:
            rows = self._client.query("SELECT id, kind, passed, date_done FROM report;")
        else:
            rows = self._client.query(
                "SELECT id, kind, passed, date_done FROM report WHERE kind = $kind;",
                {"kind": kind}
            )
        return list(rows or [])

    def delete_report(self, report_id: str) -> None:
        self._ensure_connected()

        self._client.query(
            "DELETE type::thing('report', $report_id);",
            {"report_id": report_id}
        )

    def cleanup(self):
        """Remove reports older than ``result_expires``.

        Nothing is removed when ``result_expires`` is None or 0.
        """
        self._ensure_connected()

        expires = self.app.conf.get('result_expires')
        if expires is None or expires == 0:
            return

        if hasattr(expires, 'total_seconds'):
            expire_seconds = int(expires.total_seconds())
        else:
            expire_seconds = int(expires)

        cutoff_time = (self.app.now() - timedelta(seconds=expire_seconds)).isoformat()
        # both sides come from app.now(), so ISO strings compare in time order
        self._client.query(
            "DELETE FROM report WHERE date_done < $cutoff_time;",
            {"cutoff_time": cutoff_time}
        )

    def close(self):
        """Close the database connection."""
        if self._client and self._connected:
            self._client.close()
            self._connected = False
            self._client = None
