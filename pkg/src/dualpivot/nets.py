"""Token-conditioned denoiser, guiding encoder, and the restoration system bundle.

The denoiser is a small U-Net (one ResBlock per resolution level, group
normalization, SiLU) predicting the noise component of a noised image. A
timestep embedding is injected into every block; the prompt is a single
token id whose learned embedding is summed into the timestep embedding
(the null token's embedding is zero at init, so it reduces to pure-time
conditioning).

The encoder is the U-Net's downsampling half applied to a conditioning
image. Its per-level features pass through zero-initialized 1x1
projections and are added to the denoiser decoder's skip connections, so a
freshly initialized encoder is an exact no-op on the denoiser output.

Parameter inventory (used by the closed-form count check):
  ResBlock(cin,cout,E): 2*cin + (9*cin*cout + cout) + (E*cout + cout)
                        + 2*cout + (9*cout*cout + cout)
                        + (cin*cout + cout if cin != cout)
  Denoiser(widths w ofL levels, emb E, C channels, n tokens):
      time MLP 2*(E*E+E); token table n*E; conv_in 9*C*w0 + w0;
      down ResBlock(w_i,w_i) each level; downsample conv 9*w_i*w_{i+1}+w_{i+1}
      for i<L-1; mid ResBlock(w_{L-1},w_{L-1}); up ResBlock(2*w_i,w_i) each
      level; upsample conv 9*w_i*w_{i-1}+w_{i-1} for i>0; out GN 2*w0 and
      conv 9*w0*C + C.
  Encoder: time MLP, conv_in, one ResBlock per level, downsample convs,
      plus a zero 1x1 projection (w_i*w_i + w_i) per level.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import (
    InvalidArgumentError,
    TokenConflictError,
    UnknownTokenError,
)
from .images import check_image, to_torch, from_torch
from .schedule import NoiseSchedule, NoisyState, make_schedule

NULL_TOKEN = "NULL"
CLASS_TOKEN = "CLASS"
CHECKPOINT_VERSION = 1

_TOKEN_INIT_STD = 0.1


@dataclass(frozen=True)
class ArchConfig:
    """Shared architecture hyperparameters for denoiser and encoder."""

    image_size: int = 64
    in_channels: int = 3
    widths: tuple[int, ...] = (32, 64, 128)
    emb_dim: int = 128
    groups: int = 8

    def __post_init__(self):
        if len(self.widths) < 2:
            raise InvalidArgumentError("need at least 2 resolution levels")
        if any(w <= 0 for w in self.widths):
            raise InvalidArgumentError("widths must be positive")
        if any(w % self.groups for w in self.widths):
            raise InvalidArgumentError("widths must be divisible by `groups`")
        if self.emb_dim % 2:
            raise InvalidArgumentError("emb_dim must be even")
        if self.image_size % (1 << (len(self.widths) - 1)):
            raise InvalidArgumentError("image_size must be divisible by 2^(levels-1)")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    @property
    def levels(self) -> int:
        return len(self.widths)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal features of the (1-indexed) timestep."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / half
    )
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, emb_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, cout)
        self.norm2 = nn.GroupNorm(groups, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb_proj(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class _TimeMLP(nn.Module):
    def __init__(self, emb_dim: int):
        super().__init__()
        self.lin1 = nn.Linear(emb_dim, emb_dim)
        self.lin2 = nn.Linear(emb_dim, emb_dim)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.lin2(F.silu(self.lin1(timestep_embedding(t, self.lin1.in_features))))


@dataclass
class GuidanceFeatures:
    """Per-decoder-level guidance maps (finest level first) from the encoder."""

    maps: list[torch.Tensor]
    cond_shape: tuple[int, ...]


class DenoiserNet(nn.Module):
    """Noise-prediction U-Net with token + timestep conditioning."""

    def __init__(self, arch: ArchConfig, n_tokens: int = 2):
        super().__init__()
        if n_tokens < 2:
            raise InvalidArgumentError("token table needs at least NULL and CLASS rows")
        self.arch = arch
        w = arch.widths
        self.time_mlp = _TimeMLP(arch.emb_dim)
        self.token_emb = nn.Embedding(n_tokens, arch.emb_dim)
        self.conv_in = nn.Conv2d(arch.in_channels, w[0], 3, padding=1)
        self.down_blocks = nn.ModuleList(
            [ResBlock(w[i], w[i], arch.emb_dim, arch.groups) for i in range(arch.levels)]
        )
        self.down_samples = nn.ModuleList(
            [nn.Conv2d(w[i], w[i + 1], 3, stride=2, padding=1) for i in range(arch.levels - 1)]
        )
        self.mid_block = ResBlock(w[-1], w[-1], arch.emb_dim, arch.groups)
        self.up_blocks = nn.ModuleList(
            [ResBlock(2 * w[i], w[i], arch.emb_dim, arch.groups) for i in range(arch.levels)]
        )
        self.up_samples = nn.ModuleList(
            [nn.Conv2d(w[i], w[i - 1], 3, padding=1) for i in range(1, arch.levels)]
        )
        self.out_norm = nn.GroupNorm(arch.groups, w[0])
        self.out_conv = nn.Conv2d(w[0], arch.in_channels, 3, padding=1)

    @property
    def n_tokens(self) -> int:
        return self.token_emb.num_embeddings

    def forward(
        self,
        x: torch.Tensor,
        t: torch.Tensor,
        token_ids: torch.Tensor,
        features: list[torch.Tensor] | None = None,
    ) -> torch.Tensor:
        if token_ids.min() < 0 or token_ids.max() >= self.n_tokens:
            raise UnknownTokenError(f"token ids must be in [0, {self.n_tokens})")
        emb = self.time_mlp(t.to(x.dtype)) + self.token_emb(token_ids)
        h = self.conv_in(x)
        skips = []
        for i, block in enumerate(self.down_blocks):
            h = block(h, emb)
            skips.append(h)
            if i < len(self.down_samples):
                h = self.down_samples[i](h)
        if features is not None:
            if len(features) != len(skips):
                raise InvalidArgumentError(
                    f"expected {len(skips)} guidance maps, got {len(features)}"
                )
            skips = [s + f for s, f in zip(skips, features)]
        h = self.mid_block(h, emb)
        for i in range(self.arch.levels - 1, -1, -1):
            h = self.up_blocks[i](torch.cat([h, skips[i]], dim=1), emb)
            if i > 0:
                h = F.interpolate(h, scale_factor=2, mode="nearest")
                h = self.up_samples[i - 1](h)
        return self.out_conv(F.silu(self.out_norm(h)))


class EncoderNet(nn.Module):
    """Downsampling half of the U-Net over a conditioning image.

    Outputs one zero-projected feature map per denoiser decoder level
    (finest first), shape-matched to the decoder's skip connections.
    """

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        w = arch.widths
        self.time_mlp = _TimeMLP(arch.emb_dim)
        self.conv_in = nn.Conv2d(arch.in_channels, w[0], 3, padding=1)
        self.blocks = nn.ModuleList(
            [ResBlock(w[i], w[i], arch.emb_dim, arch.groups) for i in range(arch.levels)]
        )
        self.down_samples = nn.ModuleList(
            [nn.Conv2d(w[i], w[i + 1], 3, stride=2, padding=1) for i in range(arch.levels - 1)]
        )
        self.projections = nn.ModuleList(
            [nn.Conv2d(w[i], w[i], 1) for i in range(arch.levels)]
        )

    def forward(self, cond: torch.Tensor, t: torch.Tensor) -> list[torch.Tensor]:
        if cond.shape[-2:] != (self.arch.image_size, self.arch.image_size):
            raise InvalidArgumentError(
                f"conditioning image must be {self.arch.image_size}px square, "
                f"got {tuple(cond.shape[-2:])}"
            )
        emb = self.time_mlp(t.to(cond.dtype))
        h = self.conv_in(cond)
        out = []
        for i, block in enumerate(self.blocks):
            h = block(h, emb)
            out.append(self.projections[i](h))
            if i < len(self.down_samples):
                h = self.down_samples[i](h)
        return out


@dataclass
class RestorationSystem:
    """Bundle of denoiser G, encoder E, schedule, and the token name table."""

    denoiser: DenoiserNet
    encoder: EncoderNet
    schedule: NoiseSchedule
    token_map: dict[str, int] = field(
        default_factory=lambda: {NULL_TOKEN: 0, CLASS_TOKEN: 1}
    )

    def __post_init__(self):
        if self.denoiser.arch != self.encoder.arch:
            raise InvalidArgumentError(
                "denoiser and encoder were built against different arch configs"
            )
        for name in (NULL_TOKEN, CLASS_TOKEN):
            if name not in self.token_map:
                raise InvalidArgumentError(f"token_map must contain {name}")
        if len(set(self.token_map.values())) != len(self.token_map):
            raise InvalidArgumentError("token ids must be unique")

    @property
    def arch(self) -> ArchConfig:
        return self.denoiser.arch

    @property
    def dtype(self) -> torch.dtype:
        return self.denoiser.out_conv.weight.dtype

    def resolve_token(self, token: int | str) -> int:
        if isinstance(token, str):
            if token not in self.token_map:
                raise UnknownTokenError(f"unregistered token name {token!r}")
            return self.token_map[token]
        if token not in self.token_map.values():
            raise UnknownTokenError(f"unregistered token id {token}")
        return int(token)


def _init_params(module: nn.Module, seed: int) -> None:
    """Deterministic parameter init from a numpy generator, independent of
    torch global RNG state.

    Convolution/linear weights are fan-in-scaled normals; norms are (1, 0);
    biases zero. The second conv of every ResBlock and the output conv are
    zero-initialized (residual branches start as identities).
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x5EED, seed]))
    zero_names = {"conv2.weight", "out_conv.weight"}
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if p.ndim == 1:
                # GroupNorm weight -> 1, every bias/GN-bias -> 0.
                if name.endswith("norm1.weight") or name.endswith("norm2.weight") or name.endswith("out_norm.weight"):
                    p.fill_(1.0)
                else:
                    p.zero_()
            elif any(name.endswith(z) for z in zero_names):
                p.zero_()
            else:
                fan_in = int(np.prod(p.shape[1:]))
                std = math.sqrt(1.0 / max(fan_in, 1))
                vals = rng.standard_normal(tuple(p.shape)) * std
                p.copy_(torch.from_numpy(vals).to(p.dtype))


def init_denoiser(
    arch: ArchConfig,
    seed: int,
    n_tokens: int = 2,
    dtype: torch.dtype = torch.float32,
) -> DenoiserNet:
    """Build a denoiser with reproducible parameters.

    Token row 0 (null prompt) is zero; row 1 (class prompt) and any extra
    rows are small random vectors.
    """
    net = DenoiserNet(arch, n_tokens=n_tokens).to(dtype)
    _init_params(net, seed)
    rng = np.random.default_rng(np.random.SeedSequence([0x70CE, seed]))
    with torch.no_grad():
        net.token_emb.weight.zero_()
        for row in range(1, n_tokens):
            vals = rng.standard_normal(arch.emb_dim) * _TOKEN_INIT_STD
            net.token_emb.weight[row] = torch.from_numpy(vals).to(dtype)
    return net


def init_encoder(
    arch: ArchConfig, seed: int, dtype: torch.dtype = torch.float32
) -> EncoderNet:
    """Build an encoder with reproducible parameters and exactly-zero projections."""
    net = EncoderNet(arch).to(dtype)
    _init_params(net, seed)
    with torch.no_grad():
        for proj in net.projections:
            proj.weight.zero_()
            proj.bias.zero_()
    return net


def build_system(
    arch: ArchConfig,
    schedule: NoiseSchedule,
    seed: int,
    dtype: torch.dtype = torch.float32,
) -> RestorationSystem:
    return RestorationSystem(
        denoiser=init_denoiser(arch, seed, dtype=dtype),
        encoder=init_encoder(arch, seed + 1, dtype=dtype),
        schedule=schedule,
    )


def encode(
    encoder: EncoderNet, cond_image: np.ndarray, t: int
) -> GuidanceFeatures:
    """Extract guidance features from a conditioning image at timestep t.

    Accepts a single (H, W, C) image or a (B, H, W, C) batch; feature maps
    keep the batch order.
    """
    arr = np.asarray(cond_image)
    x = to_torch(arr, dtype=next(encoder.parameters()).dtype)
    tt = torch.full((x.shape[0],), float(t))
    with torch.no_grad():
        maps = encoder(x, tt)
    return GuidanceFeatures(maps=maps, cond_shape=arr.shape)


def denoise(
    denoiser: DenoiserNet,
    state: NoisyState,
    prompt_token: int,
    features: GuidanceFeatures | None = None,
) -> np.ndarray:
    """Predict the noise component of state.x_t under the given prompt token.

    With features=None this is the unconditional/text-only branch.
    """
    x = check_image(state.x_t)
    dtype = next(denoiser.parameters()).dtype
    xt = to_torch(x, dtype=dtype)
    tt = torch.full((1,), float(state.t))
    ids = torch.full((1,), int(prompt_token), dtype=torch.long)
    maps = None
    if features is not None:
        maps = [m.to(dtype) for m in features.maps]
    with torch.no_grad():
        eps = denoiser(xt, tt, ids, maps)
    return from_torch(eps)[0]


def add_identity_token(
    system: RestorationSystem, name: str, init: str = "class-copy"
) -> int:
    """Register a new identity token and return its id.

    init="class-copy" starts the new embedding at the class token's current
    row; init="random" draws a small vector from a seed derived from the
    token name (so registration stays reproducible). Existing rows are
    copied bit-exactly.
    """
    if init not in ("class-copy", "random"):
        raise InvalidArgumentError(f"init must be 'class-copy' or 'random', got {init!r}")
    if name in system.token_map:
        raise TokenConflictError(f"token {name!r} already registered")
    table = system.denoiser.token_emb
    n, dim = table.num_embeddings, table.embedding_dim
    new = nn.Embedding(n + 1, dim).to(table.weight.dtype)
    with torch.no_grad():
        new.weight[:n] = table.weight
        if init == "class-copy":
            new.weight[n] = table.weight[system.token_map[CLASS_TOKEN]]
        else:
            digest = hashlib.sha256(name.encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vals = rng.standard_normal(dim) * _TOKEN_INIT_STD
            new.weight[n] = torch.from_numpy(vals).to(table.weight.dtype)
    system.denoiser.token_emb = new
    system.token_map[name] = n
    return n


def param_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def params_hash(module: nn.Module) -> str:
    """Deterministic digest of all named parameters (order-independent)."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        h.update(name.encode())
        arr = p.detach().cpu().contiguous().numpy()
        h.update(str(arr.dtype).encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


_DTYPE_NAMES = {torch.float32: "float32", torch.float64: "float64"}
_NAME_DTYPES = {v: k for k, v in _DTYPE_NAMES.items()}


def save_system(system: RestorationSystem, path: str | Path) -> None:
    """Write a versioned checkpoint: manifest + named parameter tensors."""
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "arch": asdict(system.arch),
        "schedule": {"kind": system.schedule.kind, "T": system.schedule.T},
        "token_map": system.token_map,
        "dtype": _DTYPE_NAMES[system.dtype],
    }
    torch.save(
        {
            "manifest": manifest,
            "denoiser": system.denoiser.state_dict(),
            "encoder": system.encoder.state_dict(),
        },
        path,
    )


def load_system(path: str | Path) -> RestorationSystem:
    """Load a checkpoint, validating manifest/architecture agreement."""
    blob = torch.load(path, map_location="cpu", weights_only=True)
    manifest = blob.get("manifest")
    if not manifest or manifest.get("format_version") != CHECKPOINT_VERSION:
        raise InvalidArgumentError(f"unsupported checkpoint format in {path}")
    arch_d = dict(manifest["arch"])
    arch_d["widths"] = tuple(arch_d["widths"])
    arch = ArchConfig(**arch_d)
    token_map = {str(k): int(v) for k, v in manifest["token_map"].items()}
    dtype = _NAME_DTYPES[manifest["dtype"]]
    denoiser = DenoiserNet(arch, n_tokens=len(token_map)).to(dtype)
    encoder = EncoderNet(arch).to(dtype)
    try:
        denoiser.load_state_dict(blob["denoiser"])
        encoder.load_state_dict(blob["encoder"])
    except RuntimeError as e:
        raise InvalidArgumentError(f"checkpoint tensors disagree with manifest arch: {e}")
    sched = make_schedule(manifest["schedule"]["T"], manifest["schedule"]["kind"])
    return RestorationSystem(
        denoiser=denoiser, encoder=encoder, schedule=sched, token_map=token_map
    )


def checkpoint_hash(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_summary(system: RestorationSystem) -> dict:
    """Deterministic metadata snapshot (used by logs and provenance)."""
    return {
        "arch": asdict(system.arch),
        "schedule": {"kind": system.schedule.kind, "T": system.schedule.T},
        "token_map": dict(sorted(system.token_map.items())),
        "denoiser_params": param_count(system.denoiser),
        "encoder_params": param_count(system.encoder),
    }


def system_copy(system: RestorationSystem) -> RestorationSystem:
    """Deep copy (used by the tuning stages so inputs stay untouched)."""
    import copy

    return RestorationSystem(
        denoiser=copy.deepcopy(system.denoiser),
        encoder=copy.deepcopy(system.encoder),
        schedule=system.schedule,
        token_map=dict(system.token_map),
    )
