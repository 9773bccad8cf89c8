"""AWFNet: adaptive wavelet filter blocks, balanced-confidence loss and a numpy autodiff core."""
from .data import Dataset, DatasetSpec, generate_synthetic, ingest_images, load_dataset
from .estimator import AWFNetClassifier
from .exceptions import (AWFError, ConfigError, ContractError, CorruptCheckpointError, DatasetError,
                         DeterminismError, DimensionError, DivergenceError, GeometryError,
                         IncompatibleCheckpointError, InsufficientStatisticsError, LabelError,
                         UndefinedMetricError)
from .gradcheck import GradReport, gradcheck
from .losses import LossConfig, LossOutput, bc_loss, ce_loss, compute_loss, cs_loss, focal_loss
from .metrics import MetricReport, PredictionSet, metric_report
from .network import AWFBlock, AWFNet, AwfConfig, NetworkSpec, build_awfnet, forward
from .tensor import Parameter, Tensor, backward, no_grad
from .training import RunRecord, TrainConfig, evaluate, train
from .wavelet import HaarBasis, SubbandSet, dwt2, idwt2

__version__ = "0.1.0"

__all__ = [
    "AWFBlock", "AWFError", "AWFNet", "AWFNetClassifier", "AwfConfig", "ConfigError", "ContractError",
    "CorruptCheckpointError", "Dataset", "DatasetError", "DatasetSpec", "DeterminismError",
    "DimensionError", "DivergenceError", "GeometryError", "GradReport", "HaarBasis",
    "IncompatibleCheckpointError", "InsufficientStatisticsError", "LabelError", "LossConfig",
    "LossOutput", "MetricReport", "NetworkSpec", "Parameter", "PredictionSet", "RunRecord",
    "SubbandSet", "Tensor", "TrainConfig", "UndefinedMetricError", "backward", "bc_loss",
    "build_awfnet", "ce_loss", "compute_loss", "cs_loss", "dwt2", "evaluate", "focal_loss",
    "forward", "generate_synthetic", "gradcheck", "idwt2", "ingest_images", "load_dataset",
    "metric_report", "no_grad", "train",
]
