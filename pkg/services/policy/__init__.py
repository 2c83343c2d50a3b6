from .agents import BaseAgent, DiffusionAgent, ExpertAgent, ZeroAgent
from .dataset import ObservationBatch, WindowDataset, build_windows, filter_static_frames, make_windows, split_episodes
from .evaluator import EvaluationResult, PolicyEvaluator, act, evaluate
from .model import ObsContext, R3DPolicy, build_policy, load_policy_weights, policy_from_checkpoint, policy_to_checkpoint
from .normalizer import ChannelRange, NormalizationStats, canonical_quaternions
from .trainer import PolicyTrainer, TrainResult, learning_rate, train
