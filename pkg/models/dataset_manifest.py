from typing import List

from pydantic import BaseModel

DATASET_FORMAT_VERSION = 1


class DatasetManifest(BaseModel):
    name: str
    task_id: str
    n_q: int
    n_p: int
    episodes: List[str]
    format_version: int = DATASET_FORMAT_VERSION
