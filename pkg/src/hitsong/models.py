"""Builders for the six hit-score regressors.

m1  dense 256 -> 1 over mean/std log-mel summary
m2  fully convolutional net over the log-mel spectrogram
m3  m2 with a three-branch multi-scale first stage
m4  dense 50 -> 1 over tag activations
m5  joint blend of m2 and m4 with a trainable weight
m6  joint blend of m3 and m4
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .audio import summarize_mean_std
from .errors import InputError, StateError
from .nn import ConcatChannels, Conv2D, Dense, Dropout, GlobalAvgPoolTime, Graph, ReLU
from .nn.checkpoint import load_checkpoint, save_checkpoint

METHODS = ("m1", "m2", "m3", "m4", "m5", "m6")
TAG_DIM = 50
FIRST_KERNEL_WIDTH = 4


@dataclass(frozen=True)
class ModelSpec:
    method: str
    # early branch maps, second conv maps, then the three 1x1 layers
    feature_maps: tuple = (32, 32, 64, 64, 1)
    w_init: float = 0.5
    n_mels: int = 128
    tag_dim: int = TAG_DIM
    dropout_rate: float = 0.25
    # (height, width) per multi-scale branch; heights beyond n_mels are zero-padded
    branch_kernels: tuple = ((128, 4), (132, 8), (140, 16))

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method '{self.method}', expected one of {METHODS}")
        if len(self.feature_maps) != 5 or self.feature_maps[-1] != 1:
            raise ValueError("feature_maps must list 5 counts ending with a single output map")
        object.__setattr__(self, "feature_maps", tuple(int(v) for v in self.feature_maps))
        object.__setattr__(self, "branch_kernels", tuple(tuple(int(v) for v in k) for k in self.branch_kernels))

    @property
    def audio_method(self) -> str | None:
        return {"m2": "m2", "m3": "m3", "m5": "m2", "m6": "m3"}.get(self.method)

    @property
    def input_kinds(self) -> tuple[str, ...]:
        return {
            "m1": ("mean_std",), "m2": ("mel",), "m3": ("mel",), "m4": ("tags",),
            "m5": ("mel", "tags"), "m6": ("mel", "tags"),
        }[self.method]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["feature_maps"] = list(self.feature_maps)
        d["branch_kernels"] = [list(k) for k in self.branch_kernels]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["feature_maps"] = tuple(d["feature_maps"])
        d["branch_kernels"] = tuple(tuple(k) for k in d["branch_kernels"])
        return cls(**d)


def _init(g: Graph, rng):
    if rng is not None:
        g.init_params(rng)
    return g


def build_m1(spec: ModelSpec, rng=None) -> Graph:
    g = Graph((2 * spec.n_mels,), "mean_std")
    g.add("dense", Dense(2 * spec.n_mels, 1))
    return _init(g, rng)


def build_m4(spec: ModelSpec, rng=None) -> Graph:
    g = Graph((spec.tag_dim,), "tags")
    g.add("dense", Dense(spec.tag_dim, 1))
    return _init(g, rng)


def _conv_tail(g: Graph, in_maps: int, spec: ModelSpec) -> None:
    _, second, l1, l2, l3 = spec.feature_maps
    g.add("conv2", Conv2D(in_maps, second, (1, FIRST_KERNEL_WIDTH)))
    g.add("relu2", ReLU())
    g.add("late1", Conv2D(second, l1, (1, 1)))
    g.add("relu3", ReLU())
    g.add("drop1", Dropout(spec.dropout_rate))
    g.add("late2", Conv2D(l1, l2, (1, 1)))
    g.add("relu4", ReLU())
    g.add("drop2", Dropout(spec.dropout_rate))
    g.add("late3", Conv2D(l2, l3, (1, 1)))
    g.add("pool", GlobalAvgPoolTime())


def build_m2(spec: ModelSpec, rng=None) -> Graph:
    early = spec.feature_maps[0]
    g = Graph((1, spec.n_mels, None), "mel")
    g.add("conv1", Conv2D(1, early, (spec.n_mels, FIRST_KERNEL_WIDTH)))
    g.add("relu1", ReLU())
    _conv_tail(g, early, spec)
    return _init(g, rng)


def branch_padding(kernel: tuple[int, int], n_mels: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Zero padding so a branch emits height 1 and time length ``T - 3``.

    Frequency padding is ``kh - n_mels`` rows, time padding ``kw - 4``
    columns, each split evenly (any odd remainder goes bottom / right).
    """
    kh, kw = kernel
    fpad, tpad = kh - n_mels, kw - FIRST_KERNEL_WIDTH
    if fpad < 0 or tpad < 0:
        raise ValueError(f"branch kernel {kernel} smaller than ({n_mels}, {FIRST_KERNEL_WIDTH})")
    return (fpad // 2, fpad - fpad // 2), (tpad // 2, tpad - tpad // 2)


def build_m3(spec: ModelSpec, rng=None) -> Graph:
    early = spec.feature_maps[0]
    g = Graph((1, spec.n_mels, None), "mel")
    names = []
    for i, kernel in enumerate(spec.branch_kernels):
        names.append(g.add(f"branch{i}", Conv2D(1, early, kernel, branch_padding(kernel, spec.n_mels)), Graph.INPUT))
    g.add("concat", ConcatChannels(), tuple(names))
    g.add("relu1", ReLU())
    _conv_tail(g, early * len(names), spec)
    return _init(g, rng)


class JointModel:
    """``w * audio(x) + (1 - w) * tag_lr(t)`` with ``w`` trainable.

    When ``tagger`` is given and no ``tags`` feature is supplied, tag vectors
    are computed from the spectrogram by the tagger. The tagger is never
    part of the trainable parameter set.
    """

    def __init__(self, audio: Graph, tag_lr: Graph, w_init: float = 0.5, tagger=None):
        self.audio = audio
        self.tag_lr = tag_lr
        self.w = np.array(float(w_init))
        self.tagger = tagger
        self._cache = None

    def _tags(self, inputs: dict) -> np.ndarray:
        if "tags" in inputs:
            return inputs["tags"]
        if self.tagger is None:
            raise InputError("joint model needs a 'tags' input")
        return np.stack([self.tagger(m[0]) for m in inputs["mel"]])

    def forward(self, inputs: dict, mode: str = "eval", rng=None) -> np.ndarray:
        a = self.audio.forward(inputs, mode, rng)
        t = self.tag_lr.forward({"tags": self._tags(inputs)}, mode, rng)
        self._cache = (a, t)
        return self.w * a + (1.0 - self.w) * t

    def backward(self, loss_grad) -> dict[str, np.ndarray]:
        if self._cache is None:
            raise StateError("backward called without a preceding forward")
        a, t = self._cache
        g = np.broadcast_to(np.asarray(loss_grad, dtype=np.float64), a.shape)
        grads = {"w": np.array(np.sum(g * (a - t)))}
        grads.update({f"audio.{k}": v for k, v in self.audio.backward(self.w * g).items()})
        grads.update({f"tag.{k}": v for k, v in self.tag_lr.backward((1.0 - self.w) * g).items()})
        return grads

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return (
            [("w", self.w)]
            + [(f"audio.{k}", v) for k, v in self.audio.parameters()]
            + [(f"tag.{k}", v) for k, v in self.tag_lr.parameters()]
        )

    def set_parameter(self, name: str, value) -> None:
        if name == "w":
            self.w = np.array(float(np.asarray(value)))
        elif name.startswith("audio."):
            self.audio.set_parameter(name[6:], value)
        elif name.startswith("tag."):
            self.tag_lr.set_parameter(name[4:], value)
        else:
            raise KeyError(name)

    def clear(self) -> None:
        self._cache = None
        self.audio.clear()
        self.tag_lr.clear()

    def layers(self, kind=None):
        return self.audio.layers(kind) + self.tag_lr.layers(kind)


def build_joint(audio: Graph, tag_lr: Graph, w_init: float = 0.5, tagger=None) -> JointModel:
    return JointModel(audio, tag_lr, w_init, tagger)


def build_model(spec: ModelSpec, rng=None):
    if spec.method == "m1":
        return build_m1(spec, rng)
    if spec.method == "m2":
        return build_m2(spec, rng)
    if spec.method == "m3":
        return build_m3(spec, rng)
    if spec.method == "m4":
        return build_m4(spec, rng)
    audio = (build_m2 if spec.method == "m5" else build_m3)(spec, rng)
    return build_joint(audio, build_m4(spec, rng), spec.w_init)


def required_inputs(model) -> tuple[str, ...]:
    if isinstance(model, JointModel):
        return (model.audio.input_kind,) if model.tagger is not None else (model.audio.input_kind, "tags")
    return (model.input_kind,)


def predict(model, features: dict) -> float:
    """Eval-mode hit-score estimate for one song given ``{kind: array}`` features."""
    batch = {}
    for kind in required_inputs(model):
        if kind not in features:
            raise InputError(f"missing required feature '{kind}'")
        batch[kind] = np.asarray(features[kind], dtype=np.float64)[None]
    return float(model.forward(batch, mode="eval")[0])


class StubTagger:
    """Deterministic stand-in for an external auto-tagger.

    Maps a log-mel spectrogram to 50 sigmoid activations through a fixed
    random projection of its per-song standardized mean/std summary.
    """

    def __init__(self, n_mels: int = 128, n_tags: int = TAG_DIM, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.projection = rng.normal(0.0, 1.0 / np.sqrt(2 * n_mels), size=(n_tags, 2 * n_mels))
        self.bias = rng.normal(0.0, 0.5, size=n_tags)

    def __call__(self, mel) -> np.ndarray:
        s = summarize_mean_std(mel)
        z = (s - s.mean()) / (s.std() + 1e-12)
        return 1.0 / (1.0 + np.exp(-(self.projection @ z + self.bias)))


# -- checkpoints ----------------------------------------------------------------

def save_model(path, model, spec: ModelSpec, extra: dict | None = None) -> None:
    header = {"format": "hitsong-checkpoint/1", "spec": spec.to_dict()}
    if isinstance(model, JointModel):
        header["graph"] = {"audio": model.audio.describe(), "tag": model.tag_lr.describe()}
    else:
        header["graph"] = model.describe()
    header.update(extra or {})
    save_checkpoint(path, header, model.parameters())


def load_model(path):
    header, params = load_checkpoint(path)
    spec = ModelSpec.from_dict(header["spec"])
    if spec.method in ("m5", "m6"):
        model = JointModel(Graph.from_description(header["graph"]["audio"]),
                           Graph.from_description(header["graph"]["tag"]))
    else:
        model = Graph.from_description(header["graph"])
    for name, value in params:
        model.set_parameter(name, value)
    return model, spec, header


def with_method(spec: ModelSpec, method: str) -> ModelSpec:
    return replace(spec, method=method)
