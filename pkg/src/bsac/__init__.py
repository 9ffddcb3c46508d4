"""Bayesian soft actor-critic with chain-rule factored policies."""

from .agent import Agent, AgentConfig, UpdateMetrics, train_step
from .bsn import BsnGraph, BsnNode, gather_parent_actions, load_bsn, parse_bsn, topo_order
from .critic import CriticEnsemble, polyak_update, q_eval, soft_value
from .envs import make_env
from .policy import JointPolicy, entropy_estimate, joint_log_prob, joint_sample
from .replay import ReplayBuffer, Transition
from .sac import FlatSacAgent

__all__ = [
    "Agent", "AgentConfig", "UpdateMetrics", "train_step",
    "BsnGraph", "BsnNode", "gather_parent_actions", "load_bsn", "parse_bsn", "topo_order",
    "CriticEnsemble", "polyak_update", "q_eval", "soft_value",
    "make_env",
    "JointPolicy", "entropy_estimate", "joint_log_prob", "joint_sample",
    "ReplayBuffer", "Transition",
    "FlatSacAgent",
]
