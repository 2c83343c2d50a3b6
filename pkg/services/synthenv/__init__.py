from .base_task import BaseTask, PlacementException, home_pose
from .demo_generator import DemoGenerator, ExpertFailureException, gen_pretrain_scenes, rollout_expert
from .environment import forward_kinematics, goal_distance, initialize_task, render_cloud, reset, step
from .expert import scripted_expert
from .push_task import PushTask
from .reach_task import ReachTask
