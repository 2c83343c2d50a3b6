import csv
import os
from typing import Iterable, List, Type

from pydantic import BaseModel

from models.records import MetricsRow


def write_records(path: str, rows: Iterable[BaseModel], model: Type[BaseModel], append: bool = False):
    """Write pydantic records as an RFC-4180 CSV with the model's field order as header.

    With `append` the rows go after the existing content and no header is written.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fields = list(model.model_fields)
    with open(path, "a" if append else "w", encoding="utf-8", newline="") as file:
        writer = csv.DictWriter(file, fieldnames=fields, lineterminator="\r\n")
        if not append:
            writer.writeheader()
        for row in rows:
            writer.writerow({key: _format(value) for key, value in row.model_dump().items()})


def read_records(path: str, model: Type[BaseModel]) -> List[BaseModel]:
    with open(path, "r", encoding="utf-8", newline="") as file:
        return [model(**{key: (value if value != "" else None) for key, value in row.items()}) for row in csv.DictReader(file)]


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return value


class MetricsRepository:
    """Append-only training metrics log flushed to a CSV file.

    The first flush truncates the file and writes the header; later flushes
    append only the rows buffered since the previous one.
    """

    def __init__(self, path: str, model: Type[BaseModel] = MetricsRow):
        self.path = path
        self.model = model
        self.pending: List[BaseModel] = []
        self.started = False

    def append(self, row: BaseModel):
        self.pending.append(row)

    def flush(self):
        if not self.pending and self.started:
            return
        write_records(self.path, self.pending, self.model, append=self.started)
        self.started = True
        self.pending = []

    def load(self) -> List[BaseModel]:
        return read_records(self.path, self.model)
