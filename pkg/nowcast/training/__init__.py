from nowcast.training.ablation import AblationSummary, run_ablation
from nowcast.training.baseline import BaselinePredictor, LinearForecaster
from nowcast.training.evaluation import (
    EVALUATION_MODES,
    NetworkPredictor,
    evaluate,
    evaluate_predictor,
)
from nowcast.training.losses import loss_rpe, loss_rpf, total_loss
from nowcast.training.rollout import Predictor, RolloutState, RolloutStep, new_state, rollout
from nowcast.training.trainer import TrainConfig, TrainResult, WindowDataset, learning_rate_at, train
