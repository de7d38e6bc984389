import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, TextIO, Type, Union

from dataclasses_json import dataclass_json


@dataclass
class DataRecord:
    pass


@dataclass_json
@dataclass
class RoundMetrics(DataRecord):
    """
    One metrics row. Site rows carry the site id; server, coordinator and pooled rows carry `site_id = None`. Losses
    that a node does not compute stay `None`.
    """
    round: int
    site_id: Optional[int]
    role: str
    train_loss: Optional[float] = None
    val_loss: Optional[float] = None
    test_loss: Optional[float] = None
    test_accuracy: Optional[float] = None
    bytes_sent: int = 0
    bytes_received: int = 0
    wall_ms: float = 0.0


@dataclass_json
@dataclass
class TrafficRecord(DataRecord):
    """
    Coordinator traffic entry: direction, message type and peer, never a payload.
    """
    direction: str
    message_type: str
    round: Optional[int]
    site_id: Optional[int]


class DataContainer:
    """
    Datacontainer class for collecting experiment data. Every record is one JSON object per line, so partial files of
    crashed runs stay readable; use `pandas.read_json(path, lines=True)` for analysis. Without an output location
    the container only keeps records in memory.
    """
    records: List[DataRecord]
    file_name: str
    file_handle: Optional[TextIO]
    file_path: Optional[Path]
    append_mode: bool
    record_type: Type[DataRecord]
    name: str

    def __init__(self, name: str, output_location: Optional[Union[str, Path]], record_type: Type[DataRecord],
                 append_mode: bool = False):
        self.records = []
        self.file_name = f'{name}.jsonl'
        self.name = name
        self.record_type = record_type
        self.append_mode = append_mode
        self.file_handle = None
        self.file_path = None
        if output_location is not None:
            output_location = Path(output_location)
            output_location.mkdir(parents=True, exist_ok=True)
            self.file_path = output_location / self.file_name
            if self.append_mode:
                self.file_handle = open(self.file_path, 'w')

    def append(self, record: DataRecord):
        self.records.append(record)
        if self.append_mode and self.file_handle:
            self.file_handle.write(_to_line(record))
            self.file_handle.flush()

    def extend(self, records: Iterable[DataRecord]):
        for record in records:
            self.append(record)

    def save(self):
        """
        Function to save the encapsulated data to the experiment file. In append mode the rows are already on disk and
        only the handle is closed.
        @return: None
        @rtype: None
        """
        if self.file_path is None:
            return
        if self.append_mode:
            if self.file_handle:
                self.file_handle.close()
                self.file_handle = None
            return
        with open(self.file_path, 'w') as file_handle:
            for record in self.records:
                file_handle.write(_to_line(record))


def _to_line(record: DataRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=False) + '\n'  # type: ignore[attr-defined]


def load_records(path: Union[str, Path], record_type: Type[DataRecord] = RoundMetrics) -> List[DataRecord]:
    """
    Read back a JSONL file written by a `DataContainer`.
    """
    records = []
    with open(path) as file_handle:
        for line in file_handle:
            if line.strip():
                records.append(record_type.from_dict(json.loads(line)))  # type: ignore[attr-defined]
    return records


def record_rows(records: Iterable[DataRecord], **extra: Any) -> List[Dict[str, Any]]:
    return [{**record.to_dict(), **extra} for record in records]  # type: ignore[attr-defined]
