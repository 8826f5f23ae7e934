from .checkpoint import load_checkpoint, save_checkpoint
from .graph import Graph
from .layers import ConcatChannels, Conv2D, Dense, Dropout, GlobalAvgPoolTime, Layer, ReLU
from .train import TrainConfig, mse_grad, mse_loss, predict_batches, sgd_step, train

__all__ = [
    "ConcatChannels", "Conv2D", "Dense", "Dropout", "GlobalAvgPoolTime", "Graph", "Layer", "ReLU",
    "TrainConfig", "load_checkpoint", "mse_grad", "mse_loss", "predict_batches", "save_checkpoint",
    "sgd_step", "train",
]
