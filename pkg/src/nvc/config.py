"""Codec architecture description and validation.

A CodecConfig lists the convolution stacks of the intra codec, the
motion and residual codecs, and their hyper paths, as architecture-only
LayerDefs.  Quantized parameters live in ModelWeights; the two are bound
into executable ConvLayerSpecs at load time.

The wiring is fixed by the graph itself:

* every main analysis path applies four stride-2 stages (input/16 latent)
  and every hyper analysis path two more (input/64 hyperlatent), so a
  frame must be a multiple of 64 on each side;
* synthesis paths mirror the downsampling with stride-2 transposed
  convolutions;
* the motion synthesis stack is split around its fusion point: the first
  half upsamples the decoded motion latent to the feature resolution,
  where previous-frame features are concatenated, and the second half
  synthesizes the prediction.
"""

import json
from dataclasses import dataclass, field, replace

from .entropy import ScaleQuantParams
from .errors import ConfigError

PIXEL_SCALE = 1.0
PIXEL_ZERO_POINT = -128

FRAME_MULTIPLE = 64

# canonical subnet order; serialization and checksums depend on it
SUBNET_ORDER = (
    "intra_analysis",
    "intra_hyper_analysis",
    "intra_hyper_synthesis",
    "intra_synthesis",
    "prev_features",
    "curr_features",
    "motion_fusion",
    "motion_hyper_analysis",
    "motion_hyper_synthesis",
    "motion_synthesis_pre",
    "motion_synthesis_post",
    "residual_analysis",
    "residual_hyper_analysis",
    "residual_hyper_synthesis",
    "residual_synthesis",
)

RECEIVER_SUBNETS = frozenset(
    {
        "intra_synthesis",
        "intra_hyper_synthesis",
        "prev_features",
        "motion_synthesis_pre",
        "motion_synthesis_post",
        "motion_hyper_synthesis",
        "residual_synthesis",
        "residual_hyper_synthesis",
    }
)

PRIOR_STREAMS = ("intra", "motion", "residual")


@dataclass(frozen=True)
class LayerDef:
    in_channels: int
    out_channels: int
    kernel: tuple
    stride: int
    mode: str = "forward"
    activation: str = "relu"

    def __post_init__(self):
        if self.in_channels < 0 or self.out_channels < 1:
            raise ConfigError("channel counts must be positive")
        if self.stride not in (1, 2):
            raise ConfigError(f"stride must be 1 or 2, got {self.stride}")
        if self.mode not in ("forward", "transposed"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "transposed" and self.stride != 2:
            raise ConfigError("transposed layers must use stride 2")
        if self.activation not in ("relu", "none"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    def out_dims(self, h: int, w: int) -> tuple:
        if self.mode == "forward":
            return -(-h // self.stride), -(-w // self.stride)
        return 2 * h, 2 * w

    @property
    def param_count(self) -> int:
        kh, kw = self.kernel
        return self.out_channels * (self.in_channels * kh * kw + 1)

    def macs(self, in_h: int, in_w: int) -> int:
        """out_h * out_w * out_c * in_c * kh * kw."""
        oh, ow = self.out_dims(in_h, in_w)
        kh, kw = self.kernel
        return oh * ow * self.out_channels * self.in_channels * kh * kw


def _downsample_count(layers) -> int:
    return sum(1 for l in layers if l.mode == "forward" and l.stride == 2)


def _upsample_count(layers) -> int:
    return sum(1 for l in layers if l.mode == "transposed")


@dataclass(frozen=True)
class CodecConfig:
    subnets: dict = field(default_factory=dict)
    gop_length: int = 8
    partitions: int = 8
    scale_params: ScaleQuantParams = field(default_factory=ScaleQuantParams)
    residual_scale: float = 2.0
    residual_zero_point: int = 0

    def __post_init__(self):
        self.validate()

    # -- derived channel counts ------------------------------------------
    @property
    def latent_channels(self) -> int:
        return self.subnets["intra_analysis"][-1].out_channels

    @property
    def motion_latent_channels(self) -> int:
        return self.subnets["motion_fusion"][-1].out_channels

    @property
    def residual_latent_channels(self) -> int:
        return self.subnets["residual_analysis"][-1].out_channels

    def hyper_channels(self, stream: str) -> int:
        return self.subnets[f"{stream}_hyper_analysis"][-1].out_channels

    def param_count(self, name: str) -> int:
        return sum(l.param_count for l in self.subnets[name])

    # -- validation -------------------------------------------------------
    def validate(self):
        if not 1 <= self.gop_length <= 0xFFFF:
            raise ConfigError("GoP length must be in [1, 65535]")
        if not 1 <= self.partitions <= 0xFFFF:
            raise ConfigError("partition count must be in [1, 65535]")
        if not self.residual_scale > 0:
            raise ConfigError("residual scale must be positive")
        missing = [n for n in SUBNET_ORDER if n not in self.subnets]
        if missing:
            raise ConfigError(f"missing sub-networks: {missing}")
        for name in SUBNET_ORDER:
            layers = self.subnets[name]
            if not layers:
                raise ConfigError(f"sub-network {name} is empty")
            for prev, cur in zip(layers, layers[1:]):
                if prev.out_channels != cur.in_channels:
                    raise ConfigError(
                        f"{name}: channel chain breaks "
                        f"({prev.out_channels} -> {cur.in_channels})"
                    )
        s = self.subnets
        # four stride-2 stages per main analysis path, two per hyper path
        mains = {
            "intra_analysis": _downsample_count(s["intra_analysis"]),
            "curr_features+motion_fusion": _downsample_count(s["curr_features"])
            + _downsample_count(s["motion_fusion"]),
            "residual_analysis": _downsample_count(s["residual_analysis"]),
        }
        for label, n in mains.items():
            if n != 4:
                raise ConfigError(f"{label} must apply 4 stride-2 stages, found {n}")
        if _downsample_count(s["prev_features"]) != _downsample_count(
            s["curr_features"]
        ):
            raise ConfigError("previous/current feature stacks must match in stride")
        for stream in PRIOR_STREAMS:
            n = _downsample_count(s[f"{stream}_hyper_analysis"])
            if n != 2:
                raise ConfigError(
                    f"{stream}_hyper_analysis must apply 2 stride-2 stages, found {n}"
                )
            if _upsample_count(s[f"{stream}_hyper_synthesis"]) != 2:
                raise ConfigError(f"{stream}_hyper_synthesis must upsample twice")
        if _upsample_count(s["intra_synthesis"]) != 4:
            raise ConfigError("intra_synthesis must upsample four times")
        if _upsample_count(s["residual_synthesis"]) != 4:
            raise ConfigError("residual_synthesis must upsample four times")
        if (
            _upsample_count(s["motion_synthesis_pre"])
            + _upsample_count(s["motion_synthesis_post"])
            != 4
        ):
            raise ConfigError("motion synthesis must upsample four times in total")
        # cross-subnet channel wiring
        checks = [
            ("intra_analysis first", s["intra_analysis"][0].in_channels, 3),
            ("prev_features first", s["prev_features"][0].in_channels, 3),
            ("curr_features first", s["curr_features"][0].in_channels, 3),
            ("residual_analysis first", s["residual_analysis"][0].in_channels, 3),
            (
                "motion_fusion input",
                s["motion_fusion"][0].in_channels,
                s["prev_features"][-1].out_channels
                + s["curr_features"][-1].out_channels,
            ),
            (
                "motion_synthesis_pre input",
                s["motion_synthesis_pre"][0].in_channels,
                s["motion_fusion"][-1].out_channels,
            ),
            (
                "motion_synthesis_post input",
                s["motion_synthesis_post"][0].in_channels,
                s["prev_features"][-1].out_channels
                + s["motion_synthesis_pre"][-1].out_channels,
            ),
            ("intra_synthesis output", s["intra_synthesis"][-1].out_channels, 3),
            (
                "motion_synthesis_post output",
                s["motion_synthesis_post"][-1].out_channels,
                3,
            ),
            ("residual_synthesis output", s["residual_synthesis"][-1].out_channels, 3),
            (
                "intra_synthesis input",
                s["intra_synthesis"][0].in_channels,
                self.latent_channels,
            ),
            (
                "residual_synthesis input",
                s["residual_synthesis"][0].in_channels,
                self.residual_latent_channels,
            ),
        ]
        for stream, latent_ch in (
            ("intra", self.latent_channels),
            ("motion", self.motion_latent_channels),
            ("residual", self.residual_latent_channels),
        ):
            checks.append(
                (
                    f"{stream}_hyper_analysis input",
                    s[f"{stream}_hyper_analysis"][0].in_channels,
                    latent_ch,
                )
            )
            checks.append(
                (
                    f"{stream}_hyper_synthesis input",
                    s[f"{stream}_hyper_synthesis"][0].in_channels,
                    self.hyper_channels(stream),
                )
            )
            checks.append(
                (
                    f"{stream}_hyper_synthesis output",
                    s[f"{stream}_hyper_synthesis"][-1].out_channels,
                    latent_ch,
                )
            )
        for label, got, want in checks:
            if got != want:
                raise ConfigError(f"{label}: {got} channels, expected {want}")
        sender = sum(self.param_count(n) for n in SUBNET_ORDER)
        receiver = sum(self.param_count(n) for n in RECEIVER_SUBNETS)
        if not receiver < sender:
            raise ConfigError(
                "receiver-side parameter count must be below the sender total"
            )

    # -- dimension bookkeeping ---------------------------------------------
    def latent_dims(self, frame_h: int, frame_w: int) -> tuple:
        return frame_h // 16, frame_w // 16

    def hyper_dims(self, frame_h: int, frame_w: int) -> tuple:
        h, w = self.latent_dims(frame_h, frame_w)
        for layer in self.subnets["intra_hyper_analysis"]:
            h, w = layer.out_dims(h, w)
        return h, w

    def feature_dims(self, frame_h: int, frame_w: int) -> tuple:
        h, w = frame_h, frame_w
        for layer in self.subnets["prev_features"]:
            h, w = layer.out_dims(h, w)
        return h, w

    # -- serialization ------------------------------------------------------
    def to_json(self) -> str:
        doc = {
            "gop_length": self.gop_length,
            "partitions": self.partitions,
            "gamma": self.scale_params.gamma,
            "theta": self.scale_params.theta,
            "residual_grid": {
                "scale": self.residual_scale,
                "zero_point": self.residual_zero_point,
            },
            "subnets": {
                name: [
                    {
                        "in": l.in_channels,
                        "out": l.out_channels,
                        "kernel": list(l.kernel),
                        "stride": l.stride,
                        "mode": l.mode,
                        "activation": l.activation,
                    }
                    for l in self.subnets[name]
                ]
                for name in SUBNET_ORDER
            },
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "CodecConfig":
        try:
            doc = json.loads(text)
            subnets = {
                name: tuple(
                    LayerDef(
                        in_channels=l["in"],
                        out_channels=l["out"],
                        kernel=tuple(l["kernel"]),
                        stride=l["stride"],
                        mode=l["mode"],
                        activation=l["activation"],
                    )
                    for l in layers
                )
                for name, layers in doc["subnets"].items()
            }
            return cls(
                subnets=subnets,
                gop_length=doc["gop_length"],
                partitions=doc["partitions"],
                scale_params=ScaleQuantParams(
                    gamma=doc["gamma"], theta=doc["theta"]
                ),
                residual_scale=doc["residual_grid"]["scale"],
                residual_zero_point=doc["residual_grid"]["zero_point"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config document: {exc}") from exc

    def with_overrides(self, gop_length=None, partitions=None) -> "CodecConfig":
        cfg = self
        if gop_length is not None:
            cfg = replace(cfg, gop_length=gop_length)
        if partitions is not None:
            cfg = replace(cfg, partitions=partitions)
        return cfg


def _analysis_stack(width: int, latent: int) -> tuple:
    return (
        LayerDef(3, width, (5, 5), 2),
        LayerDef(width, width, (5, 5), 2),
        LayerDef(width, width, (5, 5), 2),
        LayerDef(width, latent, (5, 5), 2, activation="none"),
    )


def _synthesis_stack(latent: int, width: int) -> tuple:
    return (
        LayerDef(latent, width, (5, 5), 2, mode="transposed"),
        LayerDef(width, width, (5, 5), 2, mode="transposed"),
        LayerDef(width, width, (5, 5), 2, mode="transposed"),
        LayerDef(width, 3, (5, 5), 2, mode="transposed", activation="none"),
    )


def _hyper_analysis_stack(latent: int, width: int, hyper: int) -> tuple:
    return (
        LayerDef(latent, width, (3, 3), 1),
        LayerDef(width, width, (5, 5), 2),
        LayerDef(width, hyper, (5, 5), 2, activation="none"),
    )


def _hyper_synthesis_stack(hyper: int, width: int, latent: int) -> tuple:
    return (
        LayerDef(hyper, width, (5, 5), 2, mode="transposed"),
        LayerDef(width, width, (5, 5), 2, mode="transposed"),
        LayerDef(width, latent, (3, 3), 1, activation="none"),
    )


def default_config(
    sender_width: int = 96,
    receiver_width: int = 64,
    latent_channels: int = 128,
    hyper_channels: int = 64,
    gop_length: int = 8,
    partitions: int = 8,
) -> CodecConfig:
    """Reference architecture; every width is overridable.

    Analysis stacks use four stride-2 5x5 convolutions, hyper stacks one
    stride-1 3x3 plus two stride-2 5x5, synthesis mirrors with transposed
    convolutions.  The receiver-side stacks are narrower than the
    sender-side ones.
    """
    w, rw, lat, hyp = sender_width, receiver_width, latent_channels, hyper_channels
    subnets = {
        "intra_analysis": _analysis_stack(w, lat),
        "intra_synthesis": _synthesis_stack(lat, rw),
        "intra_hyper_analysis": _hyper_analysis_stack(lat, rw, hyp),
        "intra_hyper_synthesis": _hyper_synthesis_stack(hyp, rw, lat),
        "prev_features": (
            LayerDef(3, rw, (5, 5), 2),
            LayerDef(rw, rw, (5, 5), 2, activation="none"),
        ),
        "curr_features": (
            LayerDef(3, w, (5, 5), 2),
            LayerDef(w, w, (5, 5), 2, activation="none"),
        ),
        "motion_fusion": (
            LayerDef(rw + w, w, (5, 5), 2),
            LayerDef(w, lat, (5, 5), 2, activation="none"),
        ),
        "motion_hyper_analysis": _hyper_analysis_stack(lat, rw, hyp),
        "motion_hyper_synthesis": _hyper_synthesis_stack(hyp, rw, lat),
        "motion_synthesis_pre": (
            LayerDef(lat, rw, (5, 5), 2, mode="transposed"),
            LayerDef(rw, rw, (5, 5), 2, mode="transposed", activation="none"),
        ),
        "motion_synthesis_post": (
            LayerDef(2 * rw, rw, (5, 5), 2, mode="transposed"),
            LayerDef(rw, 3, (5, 5), 2, mode="transposed", activation="none"),
        ),
        "residual_analysis": _analysis_stack(w, lat),
        "residual_synthesis": _synthesis_stack(lat, rw),
        "residual_hyper_analysis": _hyper_analysis_stack(lat, rw, hyp),
        "residual_hyper_synthesis": _hyper_synthesis_stack(hyp, rw, lat),
    }
    return CodecConfig(
        subnets=subnets, gop_length=gop_length, partitions=partitions
    )
