from .checkpoint import Checkpoint
from .config import (ENCODER_PRESETS, TASK_PRESETS, AugmentConfig, Config, ConfigValidationException, DecoderConfig, DiffusionConfig, EncoderConfig,
                     PretrainConfig, TaskSpec, TrainConfig, config_from_dict)
from .dataset_manifest import DatasetManifest
from .env_state import Distractor, EnvState
from .episode import ActionChunk, Episode, Observation, Window
from .point_cloud import Aabb, PointCloud, PointCloudException, RigidTransform
from .records import EpisodeRecord, GradCheckRow, MetricsRow, PretrainMetricsRow, SweepRow
from .task_type import SegmentClass, TaskType
