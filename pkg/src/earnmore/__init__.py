"""Reinforcement-learning portfolio management over customizable stock pools.

A stock universe is trained once; at inference any non-empty subset can be
traded by masking the rest with a learnable token, and the pool can change
mid-backtest. See README.md for the pipeline walkthrough.
"""
from .evaluator import (BacktestResult, MetricsReport, ReturnSeries, backtest,
                        compute_metrics, emit_report, run_baseline)
from .marketdata import (FeatureWindow, MarketDataset, OhlcvBar, build_dataset,
                         build_windows, compute_indicators, load_ohlcv,
                         parse_splits)
from .portfolio_env import (EnvState, PoolEvent, PoolMask, PortfolioEnv,
                            PortfolioVector, load_pool_events)
from .representation import (MaskableRepresentation, MaskPlan,
                             ReconstructionOutput, StockLevelEmbedding, decode,
                             embed_stocks, encode, fill_mask, plan_mask,
                             represent_window, sample_mask_ratio)
from .sac_agent import (CriticPair, EntropyTuner, PolicyOutput, act,
                        actor_loss, alpha_loss, critic_loss, re_weight,
                        update_targets)
from .steering import SteeringService, make_server
from .trainer import (ReplayBuffer, TrainConfig, TrainResult, load_checkpoint,
                      save_checkpoint, train)

__version__ = "0.1.0"
