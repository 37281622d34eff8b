__version__ = "1.0.0"
__description__ = "Cross-lingual any-to-one voice conversion with SSL features and an information bottleneck"

from .main import main
from .pipeline import ConversionPipeline, PipelineConfig, convert, convert_batch
from .training import TrainConfig, fine_tune, pretrain_crosslingual, train_standard

__all__ = [
    "main",
    "PipelineConfig",
    "ConversionPipeline",
    "convert",
    "convert_batch",
    "TrainConfig",
    "train_standard",
    "pretrain_crosslingual",
    "fine_tune",
]
