"""Whole-network assembly: shared encoder, attention, twin decoders.

``build_model`` turns a :class:`ModelConfig` into a static plan of typed
layer nodes with deterministic path names; ``forward`` executes the plan
against a weight store.  The encoder downsamples exactly 8x (stride-2
stem, two stride-2 EPM modules); each decoder recovers full resolution
with three DBU blocks, the first two taking encoder skips at matching
resolutions, and ends in a 1x1 two-logit head per task.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .blocks import (
    DbuSpec,
    DbuWeights,
    EpmModuleSpec,
    EpmModuleWeights,
    EpmUnitSpec,
    EpmUnitWeights,
    PcaaLiteSpec,
    PcaaLiteWeights,
    StepHook,
    dbu,
    epm_module,
    make_epm_module_spec,
    pcaa_lite,
)
from .errors import ConfigError, ShapeError
from .kernels import BnActParams, ConvSpec, ConvWeights, bn_act, conv2d, same_padding
from .tensor import DTYPE, check_nchw

BN_EPS = 1e-5
_ACTIVATIONS = ("none", "relu", "prelu")

LayerWeights = ConvWeights | BnActParams
WeightStore = dict[str, LayerWeights]


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    stem_channels: int
    stage_widths: tuple[int, int]
    epm_repeats: tuple[int, int]
    branch_count: int
    stage_dilations: tuple[tuple[int, ...], tuple[int, ...]]
    group_cap: int = 8
    decoder_widths: tuple[int, int, int] = (32, 16, 8)
    pcaa_maps: int = 2
    encoder_activation: str = "prelu"
    decoder_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "stage_widths", tuple(self.stage_widths))
        object.__setattr__(self, "epm_repeats", tuple(self.epm_repeats))
        object.__setattr__(self, "decoder_widths", tuple(self.decoder_widths))
        object.__setattr__(
            self, "stage_dilations", tuple(tuple(d) for d in self.stage_dilations))
        k = self.branch_count
        if self.stem_channels < 1:
            raise ConfigError("stem: stem_channels must be positive")
        if len(self.stage_widths) != 2 or min(self.stage_widths) < 1:
            raise ConfigError("encoder: stage_widths must be two positive ints")
        if len(self.epm_repeats) != 2 or min(self.epm_repeats) < 0:
            raise ConfigError("encoder: epm_repeats must be two non-negative ints")
        if k < 1:
            raise ConfigError("encoder: branch_count must be positive")
        for stage, (width, dil) in enumerate(zip(self.stage_widths, self.stage_dilations), 1):
            if width % k:
                raise ConfigError(
                    f"enc{stage}: stage width {width} not divisible by branch_count {k}")
            if len(dil) != k:
                raise ConfigError(
                    f"enc{stage}: needs {k} dilation rates, got {list(dil)}")
            if min(dil) < 1:
                raise ConfigError(f"enc{stage}: dilation rates must be positive")
        if self.group_cap < 1:
            raise ConfigError("encoder: group_cap must be positive")
        if len(self.decoder_widths) != 3 or min(self.decoder_widths) < 1:
            raise ConfigError("decoder: decoder_widths must be three positive ints")
        if self.pcaa_maps < 1:
            raise ConfigError("attn: pcaa_maps must be positive")
        for which, act in (("encoder", self.encoder_activation),
                           ("decoder", self.decoder_activation)):
            if act not in _ACTIVATIONS:
                raise ConfigError(f"{which} activation {act!r} not one of {_ACTIVATIONS}")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "stem_channels": self.stem_channels,
            "stage_widths": list(self.stage_widths),
            "epm_repeats": list(self.epm_repeats),
            "branch_count": self.branch_count,
            "stage_dilations": [list(d) for d in self.stage_dilations],
            "group_cap": self.group_cap,
            "decoder_widths": list(self.decoder_widths),
            "pcaa_maps": self.pcaa_maps,
            "activations": {"encoder": self.encoder_activation,
                            "decoder": self.decoder_activation},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            acts = d.get("activations", {})
            return cls(
                variant=d["variant"],
                stem_channels=d["stem_channels"],
                stage_widths=tuple(d["stage_widths"]),
                epm_repeats=tuple(d["epm_repeats"]),
                branch_count=d["branch_count"],
                stage_dilations=tuple(tuple(s) for s in d["stage_dilations"]),
                group_cap=d.get("group_cap", 8),
                decoder_widths=tuple(d.get("decoder_widths", (32, 16, 8))),
                pcaa_maps=d.get("pcaa_maps", 2),
                encoder_activation=acts.get("encoder", "prelu"),
                decoder_activation=acts.get("decoder", "relu"),
            )
        except KeyError as exc:
            raise ConfigError(f"config missing required field {exc}") from exc


PRESETS = ("tiny", "base", "large")


def load_config(path_or_preset: str) -> ModelConfig:
    """Load a config JSON file, or one of the bundled presets by name."""
    if os.path.exists(path_or_preset):
        with open(path_or_preset, "r", encoding="utf-8") as fh:
            return ModelConfig.from_dict(json.load(fh))
    if path_or_preset in PRESETS:
        ref = resources.files("twinmixing").joinpath(f"configs/{path_or_preset}.json")
        return ModelConfig.from_dict(json.loads(ref.read_text(encoding="utf-8")))
    raise FileNotFoundError(f"config file not found: {path_or_preset}")


def save_config(config: ModelConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Layer nodes and block plans


@dataclass(frozen=True)
class ConvNode:
    path: str
    spec: ConvSpec
    in_channels: int
    out_channels: int
    transposed: bool = False

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        kh, kw = self.spec.kernel
        if self.transposed:
            return (self.in_channels, self.out_channels, kh, kw)
        return (self.out_channels, self.in_channels // self.spec.groups, kh, kw)


@dataclass(frozen=True)
class BnNode:
    path: str
    channels: int
    activation: str


@dataclass(frozen=True)
class UnitPlan:
    path: str
    spec: EpmUnitSpec
    activation: str

    def nodes(self):
        s, p = self.spec, self.path
        yield ConvNode(f"{p}.pw1", s.pw1_spec(), s.in_channels, s.out_channels)
        yield BnNode(f"{p}.pw1_bn", s.out_channels, self.activation)
        yield ConvNode(f"{p}.dw", s.dw_spec(), s.out_channels, s.out_channels)
        yield BnNode(f"{p}.dw_bn", s.out_channels, self.activation)
        yield ConvNode(f"{p}.pw2", s.pw2_spec(), s.out_channels, s.out_channels)
        # no activation before the shortcut join
        yield BnNode(f"{p}.pw2_bn", s.out_channels, "none")

    def bind(self, store: WeightStore) -> EpmUnitWeights:
        p = self.path
        return EpmUnitWeights(
            pw1=_fetch(store, f"{p}.pw1", ConvWeights),
            pw1_bn=_fetch(store, f"{p}.pw1_bn", BnActParams),
            dw=_fetch(store, f"{p}.dw", ConvWeights),
            dw_bn=_fetch(store, f"{p}.dw_bn", BnActParams),
            pw2=_fetch(store, f"{p}.pw2", ConvWeights),
            pw2_bn=_fetch(store, f"{p}.pw2_bn", BnActParams),
        )


@dataclass(frozen=True)
class ModulePlan:
    path: str
    spec: EpmModuleSpec
    activation: str

    @property
    def reduce(self) -> UnitPlan:
        return UnitPlan(f"{self.path}.reduce", self.spec.reduce, self.activation)

    @property
    def branches(self) -> tuple[UnitPlan, ...]:
        return tuple(
            UnitPlan(f"{self.path}.b{i}", s, self.activation)
            for i, s in enumerate(self.spec.branches)
        )

    def nodes(self):
        yield from self.reduce.nodes()
        for b in self.branches:
            yield from b.nodes()

    def bind(self, store: WeightStore) -> EpmModuleWeights:
        return EpmModuleWeights(
            reduce=self.reduce.bind(store),
            branches=tuple(b.bind(store) for b in self.branches),
        )


@dataclass(frozen=True)
class StemPlan:
    path: str
    in_channels: int
    out_channels: int
    activation: str

    def conv_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(3, 3), stride=(2, 2), padding=same_padding((3, 3)))

    def nodes(self):
        yield ConvNode(f"{self.path}.conv", self.conv_spec(), self.in_channels, self.out_channels)
        yield BnNode(f"{self.path}.bn", self.out_channels, self.activation)


@dataclass(frozen=True)
class PcaaPlan:
    path: str
    spec: PcaaLiteSpec

    def nodes(self):
        s, p = self.spec, self.path
        yield ConvNode(f"{p}.score", s.score_spec(), s.channels, s.maps)
        yield ConvNode(f"{p}.project", s.project_spec(), s.channels, s.channels)

    def bind(self, store: WeightStore) -> PcaaLiteWeights:
        return PcaaLiteWeights(
            score=_fetch(store, f"{self.path}.score", ConvWeights),
            project=_fetch(store, f"{self.path}.project", ConvWeights),
        )


@dataclass(frozen=True)
class DbuPlan:
    path: str
    spec: DbuSpec
    activation: str

    def nodes(self):
        s, p = self.spec, self.path
        yield ConvNode(f"{p}.tconv", s.tconv_spec(), s.in_channels, s.out_channels,
                       transposed=True)
        yield BnNode(f"{p}.tconv_bn", s.out_channels, self.activation)
        if s.has_skip:
            yield ConvNode(f"{p}.refine", s.refine_spec(),
                           s.out_channels + s.skip_channels, s.out_channels)
            yield BnNode(f"{p}.refine_bn", s.out_channels, self.activation)
        yield ConvNode(f"{p}.coarse", s.coarse_spec(), s.in_channels, s.out_channels)
        yield BnNode(f"{p}.coarse_bn", s.out_channels, self.activation)

    def bind(self, store: WeightStore) -> DbuWeights:
        p, s = self.path, self.spec
        return DbuWeights(
            tconv=_fetch(store, f"{p}.tconv", ConvWeights),
            tconv_bn=_fetch(store, f"{p}.tconv_bn", BnActParams),
            refine=_fetch(store, f"{p}.refine", ConvWeights) if s.has_skip else None,
            refine_bn=_fetch(store, f"{p}.refine_bn", BnActParams) if s.has_skip else None,
            coarse=_fetch(store, f"{p}.coarse", ConvWeights),
            coarse_bn=_fetch(store, f"{p}.coarse_bn", BnActParams),
        )


@dataclass(frozen=True)
class HeadPlan:
    path: str
    in_channels: int
    out_channels: int = 2

    def conv_spec(self) -> ConvSpec:
        return ConvSpec(kernel=(1, 1), has_bias=True)

    def nodes(self):
        yield ConvNode(f"{self.path}.head", self.conv_spec(), self.in_channels,
                       self.out_channels)


@dataclass(frozen=True)
class DecoderPlan:
    name: str
    ups: tuple[DbuPlan, DbuPlan, DbuPlan]
    head: HeadPlan

    def nodes(self):
        for up in self.ups:
            yield from up.nodes()
        yield from self.head.nodes()


@dataclass(frozen=True)
class ModelGraph:
    config: ModelConfig
    stem: StemPlan
    stage1: tuple[ModulePlan, ...]     # stride-2 module first, then repeats
    stage2: tuple[ModulePlan, ...]
    attn: PcaaPlan
    decoders: tuple[DecoderPlan, DecoderPlan]   # (drivable, lane)

    def encoder_modules(self):
        yield from self.stage1
        yield from self.stage2

    def nodes(self):
        """All weighted layers in execution order."""
        yield from self.stem.nodes()
        for m in self.encoder_modules():
            yield from m.nodes()
        yield from self.attn.nodes()
        for dec in self.decoders:
            yield from dec.nodes()

    def layer_paths(self) -> list[str]:
        return [n.path for n in self.nodes()]


def _fetch(store: WeightStore, path: str, kind) -> LayerWeights:
    try:
        entry = store[path]
    except KeyError:
        raise ConfigError(f"weight store missing entry '{path}'") from None
    if not isinstance(entry, kind):
        raise ConfigError(f"weight store entry '{path}' is {type(entry).__name__}, "
                          f"expected {kind.__name__}")
    return entry


def build_model(config: ModelConfig) -> ModelGraph:
    """Assemble the static network plan for a configuration."""
    c1, c2 = config.stage_widths
    r1, r2 = config.epm_repeats
    k = config.branch_count
    cap = config.group_cap
    enc_act = config.encoder_activation
    dec_act = config.decoder_activation

    def stage(name, cin, cout, repeats, dilations):
        mods = [ModulePlan(f"{name}.down",
                           make_epm_module_spec(cin, cout, branch_count=k,
                                                dilations=dilations, stride=2,
                                                group_cap=cap),
                           enc_act)]
        for i in range(repeats):
            mods.append(ModulePlan(f"{name}.mix{i}",
                                   make_epm_module_spec(cout, cout, branch_count=k,
                                                        dilations=dilations, stride=1,
                                                        group_cap=cap),
                                   enc_act))
        return tuple(mods)

    try:
        stage1 = stage("enc1", config.stem_channels, c1, r1, config.stage_dilations[0])
        stage2 = stage("enc2", c1, c2, r2, config.stage_dilations[1])
    except ShapeError as exc:
        raise ConfigError(f"encoder: {exc}") from exc

    d1, d2, d3 = config.decoder_widths

    def decoder(name):
        return DecoderPlan(
            name=name,
            ups=(
                DbuPlan(f"{name}.up1", DbuSpec(c2, c1, d1), dec_act),
                DbuPlan(f"{name}.up2", DbuSpec(d1, config.stem_channels, d2), dec_act),
                DbuPlan(f"{name}.up3", DbuSpec(d2, 0, d3), dec_act),
            ),
            head=HeadPlan(name, d3),
        )

    return ModelGraph(
        config=config,
        stem=StemPlan("stem", 3, config.stem_channels, enc_act),
        stage1=stage1,
        stage2=stage2,
        attn=PcaaPlan("attn", PcaaLiteSpec(c2, config.pcaa_maps)),
        decoders=(decoder("da"), decoder("lane")),
    )


# ---------------------------------------------------------------------------
# Execution


def _thread_count() -> int:
    raw = os.environ.get("TWMX_THREADS", "0")
    try:
        v = int(raw)
    except ValueError:
        v = 0
    if v <= 0:
        return os.cpu_count() or 1
    return v


def _make_hook(trace: dict | None) -> StepHook:
    if trace is None:
        return None

    def hook(path: str, out: np.ndarray) -> None:
        trace[path] = tuple(out.shape)

    return hook


def run_encoder(graph: ModelGraph, store: WeightStore, image: np.ndarray,
                trace: dict | None = None):
    """Run the shared encoder; returns (features, stage1_out, stem_out)."""
    check_nchw(image, "image")
    n, c, h, w = image.shape
    if c != 3:
        raise ShapeError(f"expected 3 input channels, got {c}")
    if h % 8 or w % 8:
        raise ShapeError(f"input spatial dims must be divisible by 8, got {h}x{w}")

    hook = _make_hook(trace)
    x = conv2d(image, _fetch(store, "stem.conv", ConvWeights), graph.stem.conv_spec())
    if hook:
        hook("stem.conv", x)
    x = bn_act(x, _fetch(store, "stem.bn", BnActParams))
    if hook:
        hook("stem.bn", x)
    stem_out = x

    for m in graph.stage1:
        x = epm_module(x, m.spec, m.bind(store), hook, m.path)
    stage1_out = x
    for m in graph.stage2:
        x = epm_module(x, m.spec, m.bind(store), hook, m.path)

    feat = pcaa_lite(x, graph.attn.spec, graph.attn.bind(store), hook, graph.attn.path)
    return feat, stage1_out, stem_out


def _run_decoder(dec: DecoderPlan, store: WeightStore, feat: np.ndarray,
                 skips: tuple, hook: StepHook) -> np.ndarray:
    x = feat
    for up, skip in zip(dec.ups, skips):
        x = dbu(x, skip, up.spec, up.bind(store), hook, up.path)
    logits = conv2d(x, _fetch(store, f"{dec.name}.head", ConvWeights),
                    dec.head.conv_spec())
    if hook:
        hook(f"{dec.name}.head", logits)
    return logits


def forward(graph: ModelGraph, weights: WeightStore, image: np.ndarray,
            trace: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Full inference: returns (drivable_logits, lane_logits), each
    (n, 2, h, w) at input resolution."""
    feat, stage1_out, stem_out = run_encoder(graph, weights, image, trace)
    skips = (stage1_out, stem_out, None)
    hook = _make_hook(trace)

    da_dec, lane_dec = graph.decoders
    if trace is None and _thread_count() >= 2:
        # task decoders are independent; numpy releases the GIL in matmul
        with ThreadPoolExecutor(max_workers=2) as pool:
            fa = pool.submit(_run_decoder, da_dec, weights, feat, skips, None)
            fb = pool.submit(_run_decoder, lane_dec, weights, feat, skips, None)
            return fa.result(), fb.result()
    da = _run_decoder(da_dec, weights, feat, skips, hook)
    lane = _run_decoder(lane_dec, weights, feat, skips, hook)
    return da, lane


# ---------------------------------------------------------------------------
# Weight initialization


def random_init(config: ModelConfig, seed: int) -> WeightStore:
    """Reproducible fan-in-scaled uniform init.

    Conv weights are U(-b, b) with b = 1/sqrt(fan_in); fan_in is
    (in_channels/groups * kh * kw) for convolutions and
    (in_channels * kh * kw) for transposed convolutions.  Norm layers
    start as the identity (gamma 1, beta 0, mean 0, var 1), PReLU slopes
    at 0.25, biases at zero.
    """
    rng = np.random.default_rng(seed)
    graph = build_model(config)
    store: WeightStore = {}
    for node in graph.nodes():
        if isinstance(node, ConvNode):
            kh, kw = node.spec.kernel
            if node.transposed:
                fan_in = node.in_channels * kh * kw
            else:
                fan_in = (node.in_channels // node.spec.groups) * kh * kw
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=node.weight_shape).astype(DTYPE)
            bias = np.zeros(node.out_channels, dtype=DTYPE) if node.spec.has_bias else None
            store[node.path] = ConvWeights(weights=w, bias=bias)
        else:
            c = node.channels
            store[node.path] = BnActParams(
                gamma=np.ones(c, dtype=DTYPE),
                beta=np.zeros(c, dtype=DTYPE),
                mean=np.zeros(c, dtype=DTYPE),
                var=np.ones(c, dtype=DTYPE),
                eps=BN_EPS,
                activation=node.activation,
                slope=np.full(c, 0.25, dtype=DTYPE) if node.activation == "prelu" else None,
            )
    return store


def zero_init(config: ModelConfig) -> WeightStore:
    """All learnable tensors zero; every block collapses to its shortcut."""
    store = random_init(config, seed=0)
    graph = build_model(config)
    out: WeightStore = {}
    for node in graph.nodes():
        entry = store[node.path]
        if isinstance(entry, ConvWeights):
            out[node.path] = ConvWeights(
                weights=np.zeros_like(entry.weights),
                bias=None if entry.bias is None else np.zeros_like(entry.bias),
            )
        else:
            out[node.path] = replace(
                entry,
                gamma=np.zeros_like(entry.gamma),
                beta=np.zeros_like(entry.beta),
                mean=np.zeros_like(entry.mean),
                var=np.ones_like(entry.var),
                slope=None if entry.slope is None else np.zeros_like(entry.slope),
            )
    return out


def validate_store(graph: ModelGraph, store: WeightStore) -> None:
    """Check completeness and per-layer shape consistency; first problem wins."""
    seen = set()
    for node in graph.nodes():
        seen.add(node.path)
        if isinstance(node, ConvNode):
            entry = _fetch(store, node.path, ConvWeights)
            if entry.weights.shape != node.weight_shape:
                raise ConfigError(
                    f"layer '{node.path}': weight shape {entry.weights.shape} "
                    f"!= expected {node.weight_shape}")
            if node.spec.has_bias and (entry.bias is None or
                                       entry.bias.shape != (node.out_channels,)):
                raise ConfigError(f"layer '{node.path}': bad or missing bias")
            if not node.spec.has_bias and entry.bias is not None:
                raise ConfigError(f"layer '{node.path}': unexpected bias")
        else:
            entry = _fetch(store, node.path, BnActParams)
            if entry.channels != node.channels:
                raise ConfigError(
                    f"layer '{node.path}': {entry.channels} channels != expected {node.channels}")
            if entry.activation != node.activation:
                raise ConfigError(
                    f"layer '{node.path}': activation {entry.activation!r} "
                    f"!= expected {node.activation!r}")
    orphans = [p for p in store if p not in seen]
    if orphans:
        raise ConfigError(f"weight store has entries for unknown layers: {sorted(orphans)}")
