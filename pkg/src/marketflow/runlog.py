"""Append-only log of pipeline stages."""

from __future__ import annotations

import contextlib
import datetime as dt
import warnings
from dataclasses import dataclass, field

from marketflow.errors import MarketflowWarning


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="milliseconds")


@dataclass(frozen=True)
class StageRecord:
    stage: str
    parameters: dict[str, object] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    started: str = ""
    finished: str = ""
    status: str = "ok"

    def to_text(self) -> str:
        params = " ".join(f"{k}={v}" for k, v in self.parameters.items())
        head = f"{self.started} {self.finished} {self.stage} [{self.status}]"
        lines = [f"{head} {params}".rstrip()]
        lines += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(lines)


class RunLog:
    """Ordered stage records; records can be added but never removed."""

    def __init__(self):
        self._records: list[StageRecord] = []

    @property
    def records(self) -> tuple[StageRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def append(self, record: StageRecord) -> None:
        self._records.append(record)

    @contextlib.contextmanager
    def stage(self, name: str, **parameters):
        """Time a stage and collect the MarketflowWarnings it emits.

        Exactly one record is appended, also when the stage raises.
        """
        started = _now()
        status = "ok"
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", MarketflowWarning)
            try:
                yield
            except BaseException as exc:
                status = f"failed: {exc}"
                raise
            finally:
                messages = tuple(
                    str(w.message) for w in caught if issubclass(w.category, MarketflowWarning)
                )
                self.append(
                    StageRecord(name, dict(parameters), messages, started, _now(), status)
                )

    def to_text(self) -> str:
        return "".join(r.to_text() + "\n" for r in self._records)
