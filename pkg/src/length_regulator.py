"""Non-parametric length regulation between the 20 ms feature grid and the mel grid."""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np
import torch

from .errors import ContractViolation, EmptyFeaturesError


class RegulatorMode(str, Enum):
    NEAREST = "nearest"
    LINEAR = "linear"


@dataclass(frozen=True)
class RegulationPlan:
    """Maps ``output_len`` target frames onto ``input_len`` source frames."""

    input_len: int
    output_len: int
    mode: RegulatorMode = RegulatorMode.NEAREST

    def __post_init__(self):
        if self.input_len < 1:
            raise EmptyFeaturesError(f"Cannot regulate {self.input_len} input frames")
        if self.output_len < 1:
            raise ContractViolation(f"output_len must be >= 1, got {self.output_len}")
        object.__setattr__(self, "mode", RegulatorMode(self.mode))

    @property
    def is_identity(self) -> bool:
        return self.input_len == self.output_len

    def source_positions(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per output frame: lower source index, upper source index, upper weight."""
        j = np.arange(self.output_len, dtype=np.int64)
        if self.mode is RegulatorMode.NEAREST:
            # floor(j * in / out), the nearest-neighbour rule of torch.nn.functional.interpolate
            lower = (j * self.input_len) // self.output_len
            return lower, lower, np.zeros(self.output_len, dtype=np.float64)

        # endpoints aligned: output 0 -> input 0, output -1 -> input -1
        if self.output_len == 1:
            pos = np.zeros(1, dtype=np.float64)
        else:
            pos = j * (self.input_len - 1) / (self.output_len - 1)
        lower = np.minimum(np.floor(pos).astype(np.int64), self.input_len - 1)
        upper = np.minimum(lower + 1, self.input_len - 1)
        weight = pos - lower
        return lower, upper, weight


def target_length(audio_samples: int, feature_hop: int, mel_hop: int, mel_rate: int,
                  feature_rate: int) -> int:
    """Number of mel frames the regulator has to produce for an utterance.

    Args:
        audio_samples: Utterance length in samples at ``feature_rate``
        feature_hop: Content-encoder stride in samples
        mel_hop: Mel hop length in samples at ``mel_rate``
        mel_rate: Sample rate of the mel front-end
        feature_rate: Sample rate the encoder consumes

    Returns:
        Mel frame count, at least 1
    """
    for name, value in (("audio_samples", audio_samples), ("feature_hop", feature_hop),
                        ("mel_hop", mel_hop), ("mel_rate", mel_rate), ("feature_rate", feature_rate)):
        if value <= 0:
            raise ContractViolation(f"{name} must be positive, got {value}")

    if mel_rate == feature_rate and mel_hop == feature_hop:
        # same grid: one mel frame per feature frame
        return max(1, audio_samples // feature_hop)
    numerator = audio_samples * mel_rate
    denominator = feature_rate * mel_hop
    return max(1, -(-numerator // denominator))


def regulate(f, output_len: int, mode: Union[str, RegulatorMode] = RegulatorMode.NEAREST):
    """Resample an SSLFeatureMatrix along time to ``output_len`` frames."""
    if f.num_frames < 1:
        raise EmptyFeaturesError("Cannot regulate an empty feature matrix")
    plan = RegulationPlan(f.num_frames, output_len, mode)
    if plan.is_identity:
        return f
    lower, upper, weight = plan.source_positions()
    x = f.vectors.astype(np.float64)
    w = weight[:, None]
    out = (1.0 - w) * x[lower] + w * x[upper]
    return f.replace(out)


def regulate_tensor(x: torch.Tensor, output_len: int,
                    mode: Union[str, RegulatorMode] = RegulatorMode.NEAREST) -> torch.Tensor:
    """Differentiable counterpart of :func:`regulate` for a (T, C) tensor."""
    plan = RegulationPlan(int(x.shape[0]), output_len, mode)
    if plan.is_identity:
        return x
    lower, upper, weight = plan.source_positions()
    lower_t = torch.from_numpy(lower).to(x.device)
    if plan.mode is RegulatorMode.NEAREST:
        return x.index_select(0, lower_t)
    upper_t = torch.from_numpy(upper).to(x.device)
    w = torch.from_numpy(weight).to(device=x.device, dtype=x.dtype).unsqueeze(1)
    return (1.0 - w) * x.index_select(0, lower_t) + w * x.index_select(0, upper_t)


def mel_frames_for(f, dsp) -> int:
    """Mel frames to produce for a feature matrix, measured on its own sample grid."""
    return target_length(f.num_frames * f.frame_hop_samples, f.frame_hop_samples,
                         dsp.hop_length, dsp.sample_rate, f.source_sample_rate)
