from .base_agent import BaseAgent
from .diffusion_agent import DiffusionAgent
from .oracle_agents import ExpertAgent, ZeroAgent
