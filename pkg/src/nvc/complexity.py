"""Parameter and MAC accounting per codec module, sender vs receiver.

Convolution cost is out_h * out_w * out_channels * in_channels * kh * kw
multiply-accumulates (transposed layers are charged at their upsampled
output size), normalized by input pixels so figures compare across
resolutions.  The sender runs every stack; the receiver runs only the
synthesis and hyper-synthesis stacks plus the feature extractor for the
previous frame.
"""

from dataclasses import dataclass

from .config import CodecConfig

MODULE_SUBNETS = {
    "I-frame net": (
        "intra_analysis",
        "intra_synthesis",
        "intra_hyper_analysis",
        "intra_hyper_synthesis",
    ),
    "Motion net": (
        "prev_features",
        "curr_features",
        "motion_fusion",
        "motion_hyper_analysis",
        "motion_hyper_synthesis",
        "motion_synthesis_pre",
        "motion_synthesis_post",
    ),
    "Residual net": (
        "residual_analysis",
        "residual_synthesis",
        "residual_hyper_analysis",
        "residual_hyper_synthesis",
    ),
}

RECEIVER_MODULE_SUBNETS = {
    "I-frame receiver": ("intra_synthesis", "intra_hyper_synthesis"),
    "Motion receiver": (
        "prev_features",
        "motion_hyper_synthesis",
        "motion_synthesis_pre",
        "motion_synthesis_post",
    ),
    "Residual receiver": ("residual_synthesis", "residual_hyper_synthesis"),
}


@dataclass(frozen=True)
class ModuleCost:
    label: str
    params: int
    kmacs_per_pixel: float


@dataclass(frozen=True)
class ComplexityReport:
    """Per-module costs plus totals, in the layout of the complexity table."""

    sender: tuple  # of ModuleCost
    receiver: tuple  # of ModuleCost

    @property
    def sender_params(self) -> int:
        return sum(m.params for m in self.sender)

    @property
    def receiver_params(self) -> int:
        return sum(m.params for m in self.receiver)

    @property
    def sender_kmacs(self) -> float:
        return sum(m.kmacs_per_pixel for m in self.sender)

    @property
    def receiver_kmacs(self) -> float:
        return sum(m.kmacs_per_pixel for m in self.receiver)

    def format_table(self) -> str:
        lines = [
            f"{'Module':<20}{'Parameters':>12}{'':>8}{'KMACs/pixel':>14}{'':>8}"
        ]
        lines.append("-" * len(lines[0]))

        def section(rows, total_label):
            tot_p = sum(m.params for m in rows)
            tot_k = sum(m.kmacs_per_pixel for m in rows)
            for m in rows:
                pp = 100.0 * m.params / tot_p if tot_p else 0.0
                pk = 100.0 * m.kmacs_per_pixel / tot_k if tot_k else 0.0
                lines.append(
                    f"{m.label:<20}{m.params / 1e6:>10.3f}M{pp:>7.1f}%"
                    f"{m.kmacs_per_pixel:>14.1f}{pk:>7.1f}%"
                )
            lines.append(
                f"{total_label:<20}{tot_p / 1e6:>10.3f}M{100.0:>7.1f}%"
                f"{tot_k:>14.1f}{100.0:>7.1f}%"
            )

        section(self.sender, "Total")
        lines.append("-" * len(lines[0]))
        section(self.receiver, "Total receiver")
        return "\n".join(lines)


def _subnet_cost(cfg: CodecConfig, name: str, frame_h: int, frame_w: int):
    """(params, macs) of one stack at the given frame size."""
    if name in ("intra_analysis", "prev_features", "curr_features",
                "residual_analysis"):
        h, w = frame_h, frame_w
    elif name == "motion_fusion":
        h, w = cfg.feature_dims(frame_h, frame_w)
    elif name == "motion_synthesis_pre":
        h, w = cfg.latent_dims(frame_h, frame_w)
    elif name == "motion_synthesis_post":
        h, w = cfg.feature_dims(frame_h, frame_w)
    elif name.endswith("hyper_analysis"):
        h, w = cfg.latent_dims(frame_h, frame_w)
    elif name.endswith("hyper_synthesis"):
        h, w = cfg.hyper_dims(frame_h, frame_w)
    else:  # synthesis stacks start at the latent
        h, w = cfg.latent_dims(frame_h, frame_w)
    params = 0
    macs = 0
    for layer in cfg.subnets[name]:
        params += layer.param_count
        macs += layer.macs(h, w)
        h, w = layer.out_dims(h, w)
    return params, macs


def count_complexity(
    cfg: CodecConfig, frame_h: int = 768, frame_w: int = 1280
) -> ComplexityReport:
    """Cost report at a reference frame size (multiples of 64 recommended:
    KMACs/pixel is then independent of the size chosen)."""
    pixels = frame_h * frame_w

    def module_rows(groups):
        rows = []
        for label, subnets in groups.items():
            params = 0
            macs = 0
            for name in subnets:
                p, m = _subnet_cost(cfg, name, frame_h, frame_w)
                params += p
                macs += m
            rows.append(
                ModuleCost(
                    label=label,
                    params=params,
                    kmacs_per_pixel=macs / pixels / 1000.0,
                )
            )
        return tuple(rows)

    return ComplexityReport(
        sender=module_rows(MODULE_SUBNETS),
        receiver=module_rows(RECEIVER_MODULE_SUBNETS),
    )
