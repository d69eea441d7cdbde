"""Selfish mining with multiple private forks: model, solver, bounds, simulation."""
from .baselines import honest_errev, single_tree_errev
from .errors import (ConvergenceError, ResourceLimitError, SelfishForksError,
                     StrategyMismatchError, StructuralError, ValidationError)
from .mdp import InducedChain, PositionalStrategy, SparseMdp, induce_chain, scalarize_reward
from .model import Action, AttackParams, ChainState, build_model
from .revenue import RevenueReport, chain_quality, compute_errev, exact_errev, mp_at_beta
from .sim import SimReport, simulate
from .solver import GainPair, SolveResult, evaluate_strategy, solve_mean_payoff, stationary_distribution

__version__ = "0.1.0"
