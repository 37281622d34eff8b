"""Bottleneck acoustic model: pre-net, IN conv encoder, autoregressive LSTM decoder.

No attention and no stop token: the decoder runs exactly one step per
(regulated) encoder frame.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .audio import DspConfig, MelSpectrogram
from .config import ACOUSTIC_PRESETS
from .errors import ConfigError, ContractViolation, EmptyInputError
from .length_regulator import RegulatorMode, regulate_tensor

logger = logging.getLogger(__name__)

IN_EPSILON = 1e-5

LSTMState = List[Tuple[Tensor, Tensor]]


@dataclass(frozen=True)
class AcousticConfig:
    """Shape hyper-parameters of the acoustic model."""

    s: int = 1024
    d: int = 256
    prenet_units: int = 256
    prenet_layers: int = 2
    prenet_dropout: float = 0.5
    enc_channels: int = 512
    enc_layers: int = 3
    enc_kernel: int = 5
    dec_lstm_units: int = 768
    dec_lstm_layers: int = 3
    n_mels: int = 128
    init_seed: int = 1234

    def __post_init__(self):
        counts = {k: v for k, v in asdict(self).items() if k not in ("prenet_dropout", "init_seed")}
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.d >= self.s:
            raise ConfigError(f"Bottleneck requires d < s, got d={self.d}, s={self.s}")
        if self.enc_kernel % 2 == 0:
            raise ConfigError(f"enc_kernel must be odd, got {self.enc_kernel}")
        if not 0.0 <= self.prenet_dropout < 1.0:
            raise ConfigError(f"prenet_dropout must be in [0, 1), got {self.prenet_dropout}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def architecture(self) -> Dict[str, Any]:
        """Every field except ``init_seed``, which only matters for a fresh model."""
        return {k: v for k, v in asdict(self).items() if k != "init_seed"}

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "AcousticConfig":
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"Bad acoustic config: {e}") from e

    @classmethod
    def preset(cls, name: str, **overrides) -> "AcousticConfig":
        values = dict(ACOUSTIC_PRESETS[name])
        values.update(overrides)
        return cls(**values)


def _dropout(x: Tensor, p: float, active: bool, generator: Optional[torch.Generator]) -> Tensor:
    if not active or p == 0.0:
        return x
    keep = torch.bernoulli(torch.full_like(x, 1.0 - p), generator=generator)
    return x * keep / (1.0 - p)


class Prenet(nn.Module):
    """Stack of Linear + ReLU + dropout layers."""

    def __init__(self, in_dim: int, sizes: Sequence[int], dropout: float, always_dropout: bool):
        super().__init__()
        dims = [in_dim] + list(sizes)
        self.layers = nn.ModuleList(nn.Linear(i, o) for i, o in zip(dims[:-1], dims[1:]))
        self.dropout = dropout
        # decoder pre-net keeps dropout at inference
        self.always_dropout = always_dropout

    def forward(self, x: Tensor, generator: Optional[torch.Generator] = None) -> Tensor:
        active = self.training or self.always_dropout
        for linear in self.layers:
            x = _dropout(F.relu(linear(x)), self.dropout, active, generator)
        return x


class InstanceNorm(nn.Module):
    """Per-utterance, per-channel normalization over time, no affine parameters.

    Padded frames (mask == 0) are excluded from the statistics and zeroed.
    """

    def __init__(self, eps: float = IN_EPSILON):
        super().__init__()
        self.eps = eps

    def forward(self, x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        # x: (B, C, T), mask: (B, 1, T)
        if mask is None:
            mask = torch.ones_like(x[:, :1, :])
        count = mask.sum(dim=2, keepdim=True).clamp_min(1.0)
        mean = (x * mask).sum(dim=2, keepdim=True) / count
        centered = (x - mean) * mask
        var = (centered ** 2).sum(dim=2, keepdim=True) / count
        return centered / torch.sqrt(var + self.eps)


class ConvEncoder(nn.Module):
    """Conv1d -> ReLU -> InstanceNorm, repeated; stride 1, 'same' padding."""

    def __init__(self, cfg: AcousticConfig):
        super().__init__()
        channels = [cfg.d] + [cfg.enc_channels] * cfg.enc_layers
        self.convs = nn.ModuleList(
            nn.Conv1d(i, o, kernel_size=cfg.enc_kernel, stride=1, padding=cfg.enc_kernel // 2)
            for i, o in zip(channels[:-1], channels[1:])
        )
        self.norm = InstanceNorm()

    def forward(self, h: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        # h: (B, T, d) -> (B, T, enc_channels)
        x = h.transpose(1, 2)
        if mask is not None:
            x = x * mask
        for conv in self.convs:
            x = self.norm(F.relu(conv(x)), mask)
        return x.transpose(1, 2)


class Decoder(nn.Module):
    """Autoregressive decoder: pre-net(prev frame) ++ encoder frame -> LSTM stack -> linear."""

    def __init__(self, cfg: AcousticConfig):
        super().__init__()
        self.cfg = cfg
        self.prenet = Prenet(cfg.n_mels, [cfg.prenet_units] * cfg.prenet_layers,
                             cfg.prenet_dropout, always_dropout=True)
        in_sizes = [cfg.prenet_units + cfg.enc_channels] + [cfg.dec_lstm_units] * (cfg.dec_lstm_layers - 1)
        self.lstms = nn.ModuleList(nn.LSTMCell(i, cfg.dec_lstm_units) for i in in_sizes)
        self.proj = nn.Linear(cfg.dec_lstm_units, cfg.n_mels)

    def initial_state(self, batch: int, like: Tensor) -> LSTMState:
        zeros = like.new_zeros(batch, self.cfg.dec_lstm_units)
        return [(zeros, zeros) for _ in self.lstms]

    def check_state(self, state: LSTMState, batch: int) -> None:
        expected = (batch, self.cfg.dec_lstm_units)
        if len(state) != len(self.lstms):
            raise ContractViolation(f"Decoder state has {len(state)} layers, expected {len(self.lstms)}")
        for h, c in state:
            if tuple(h.shape) != expected or tuple(c.shape) != expected:
                raise ContractViolation(
                    f"Decoder state shape {tuple(h.shape)}/{tuple(c.shape)}, expected {expected}"
                )

    def step(self, prev_frame: Tensor, enc_frame: Tensor, state: LSTMState,
             generator: Optional[torch.Generator] = None) -> Tuple[Tensor, LSTMState]:
        x = torch.cat([self.prenet(prev_frame, generator), enc_frame], dim=-1)
        new_state = []
        for lstm, (h, c) in zip(self.lstms, state):
            h, c = lstm(x, (h, c))
            new_state.append((h, c))
            x = h
        return self.proj(x), new_state

    def forward(self, enc: Tensor, teacher: Optional[Tensor] = None,
                generator: Optional[torch.Generator] = None) -> Tensor:
        # enc: (B, T, C); teacher: (B, T, n_mels)
        batch, steps, _ = enc.shape
        prev = enc.new_zeros(batch, self.cfg.n_mels)
        state = self.initial_state(batch, enc)
        outputs = []
        for t in range(steps):
            frame, state = self.step(prev, enc[:, t], state, generator)
            outputs.append(frame)
            prev = teacher[:, t] if teacher is not None else frame
        return torch.stack(outputs, dim=1)


class AcousticModel(nn.Module):
    """Pre-net (bottleneck) + IN conv encoder + length regulator + LSTM decoder."""

    def __init__(self, cfg: AcousticConfig):
        super().__init__()
        self.cfg = cfg
        sizes = [cfg.prenet_units] * (cfg.prenet_layers - 1) + [cfg.d]
        self.prenet = Prenet(cfg.s, sizes, cfg.prenet_dropout, always_dropout=False)
        self.encoder = ConvEncoder(cfg)
        self.decoder = Decoder(cfg)
        self.dropout_generator = torch.Generator()
        self.dropout_generator.manual_seed(cfg.init_seed)
        self.reset_parameters(cfg.init_seed)

    def reset_parameters(self, seed: int) -> None:
        """Fan-in uniform weights, orthogonal recurrent matrices, zero biases."""
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            for module in self.modules():
                if isinstance(module, (nn.Linear, nn.Conv1d)):
                    fan_in = module.weight[0].numel()
                    bound = 1.0 / math.sqrt(fan_in)
                    nn.init.uniform_(module.weight, -bound, bound)
                    nn.init.zeros_(module.bias)
                elif isinstance(module, nn.LSTMCell):
                    bound = 1.0 / math.sqrt(module.input_size)
                    nn.init.uniform_(module.weight_ih, -bound, bound)
                    for gate in module.weight_hh.data.chunk(4, dim=0):
                        nn.init.orthogonal_(gate)
                    nn.init.zeros_(module.bias_ih)
                    nn.init.zeros_(module.bias_hh)

    def seed_dropout(self, seed: int) -> None:
        self.dropout_generator.manual_seed(seed)

    def forward(self, features: Tensor, lengths: Sequence[int], output_lengths: Sequence[int],
                teacher: Optional[Tensor] = None,
                mode: Union[str, RegulatorMode] = RegulatorMode.NEAREST,
                regulate_after_encoder: bool = True) -> Tensor:
        """Predict a padded batch of mel spectrograms.

        Args:
            features: (B, T_in, s) zero-padded SSL features
            lengths: Valid input frames per item
            output_lengths: Mel frames to produce per item
            teacher: (B, T_out, n_mels) ground truth for teacher forcing
            mode: Regulator interpolation mode
            regulate_after_encoder: Regulate encoder outputs (True) or raw features (False)

        Returns:
            (B, max(output_lengths), n_mels); frames past an item's length are undefined
        """
        gen = self.dropout_generator
        if not regulate_after_encoder:
            features = _pad_stack([regulate_tensor(x[:n], m, mode)
                                   for x, n, m in zip(features, lengths, output_lengths)])
            lengths = output_lengths

        h = self.prenet(features, gen)
        mask = _length_mask(lengths, h.shape[1], h)
        enc = self.encoder(h, mask)

        if regulate_after_encoder:
            enc = _pad_stack([regulate_tensor(x[:n], m, mode)
                              for x, n, m in zip(enc, lengths, output_lengths)])
        return self.decoder(enc, teacher, gen)


def _length_mask(lengths: Sequence[int], max_len: int, like: Tensor) -> Tensor:
    ids = torch.arange(max_len, device=like.device)
    lens = torch.as_tensor(list(lengths), device=like.device)
    return (ids[None, :] < lens[:, None]).to(like.dtype).unsqueeze(1)


def _pad_stack(items: List[Tensor]) -> Tensor:
    return nn.utils.rnn.pad_sequence(items, batch_first=True)


# Single-utterance entry points on the domain types


def _as_tensor(array: np.ndarray, model: AcousticModel) -> Tensor:
    param = next(model.parameters())
    return torch.as_tensor(np.asarray(array), dtype=param.dtype, device=param.device)


def prenet_forward(v, model: AcousticModel) -> np.ndarray:
    """Project features (T, s) into the bottleneck space (T, d)."""
    if v.s != model.cfg.s:
        raise ContractViolation(f"Feature dim {v.s} does not match model input dim {model.cfg.s}")
    with torch.no_grad():
        out = model.prenet(_as_tensor(v.vectors, model)[None], model.dropout_generator)
    return out[0].cpu().numpy()


def encoder_forward(h: np.ndarray, model: AcousticModel) -> np.ndarray:
    """Run the IN conv encoder on bottleneck features (T, d) -> (T, enc_channels)."""
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] < 1:
        raise EmptyInputError("Encoder input needs at least one frame")
    if h.shape[1] != model.cfg.d:
        raise ContractViolation(f"Encoder input dim {h.shape[1]} does not match d={model.cfg.d}")
    with torch.no_grad():
        out = model.encoder(_as_tensor(h, model)[None])
    return out[0].cpu().numpy()


def decoder_step(prev_frame: np.ndarray, enc_frame: np.ndarray, state: Optional[LSTMState],
                 model: AcousticModel) -> Tuple[np.ndarray, LSTMState]:
    """One autoregressive step; ``state=None`` starts from zeros."""
    cfg = model.cfg
    prev = _as_tensor(prev_frame, model).reshape(1, -1)
    enc = _as_tensor(enc_frame, model).reshape(1, -1)
    if prev.shape[1] != cfg.n_mels:
        raise ContractViolation(f"Previous frame dim {prev.shape[1]} != n_mels {cfg.n_mels}")
    if enc.shape[1] != cfg.enc_channels:
        raise ContractViolation(f"Encoder frame dim {enc.shape[1]} != enc_channels {cfg.enc_channels}")
    if state is None:
        state = model.decoder.initial_state(1, prev)
    model.decoder.check_state(state, 1)
    with torch.no_grad():
        frame, new_state = model.decoder.step(prev, enc, state, model.dropout_generator)
    return frame[0].cpu().numpy(), new_state


def acoustic_forward(v, model: AcousticModel, teacher_mels: Optional[MelSpectrogram] = None,
                     output_len: Optional[int] = None, dsp: Optional[DspConfig] = None,
                     mode: Union[str, RegulatorMode] = RegulatorMode.NEAREST,
                     regulate_after_encoder: bool = True,
                     seed: Optional[int] = None) -> MelSpectrogram:
    """Predict the target-speaker mel spectrogram of one utterance.

    Args:
        v: SSLFeatureMatrix (T, s)
        model: Acoustic model parameters
        teacher_mels: Ground truth for teacher forcing; sets the output length
        output_len: Mel frames to produce in free-running mode (default T)
        dsp: Mel parameters of the output (taken from teacher_mels when given)
        mode: Regulator mode
        regulate_after_encoder: Where the regulator sits
        seed: Reseeds decoder pre-net dropout for reproducible inference

    Returns:
        MelSpectrogram of shape (output_len, n_mels)
    """
    cfg = model.cfg
    if v.s != cfg.s:
        raise ContractViolation(f"Feature dim {v.s} does not match model input dim {cfg.s}")
    if v.num_frames < 1:
        raise EmptyInputError("acoustic_forward needs at least one feature frame")

    teacher = None
    if teacher_mels is not None:
        if output_len is not None and output_len != teacher_mels.num_frames:
            raise ContractViolation(
                f"Teacher mel has {teacher_mels.num_frames} frames, regulated length is {output_len}"
            )
        if teacher_mels.n_mels != cfg.n_mels:
            raise ContractViolation(f"Teacher mel has {teacher_mels.n_mels} bands, model {cfg.n_mels}")
        output_len = teacher_mels.num_frames
        teacher = _as_tensor(teacher_mels.frames, model)[None]
    elif output_len is None:
        output_len = v.num_frames

    if seed is not None:
        model.seed_dropout(seed)
    with torch.no_grad():
        pred = model(_as_tensor(v.vectors, model)[None], [v.num_frames], [output_len],
                     teacher, mode, regulate_after_encoder)
    frames = pred[0].cpu().numpy()

    if teacher_mels is not None:
        return MelSpectrogram(frames=frames.astype(np.float32), n_mels=cfg.n_mels,
                              hop_length=teacher_mels.hop_length, win_length=teacher_mels.win_length,
                              n_fft=teacher_mels.n_fft, sample_rate=teacher_mels.sample_rate)
    if dsp is None:
        raise ConfigError("acoustic_forward needs a DspConfig in free-running mode")
    return MelSpectrogram.from_frames(frames, dsp)
