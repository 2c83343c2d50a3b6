from .checkpoint_repository import CheckpointFormatException, CheckpointRepository, load_checkpoint, save_checkpoint
from .demo_repository import DatasetException, DemoRepository
from .metrics_repository import MetricsRepository, read_records, write_records
