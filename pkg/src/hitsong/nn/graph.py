"""A small DAG of layers with one input and one scalar-per-example output."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, StateError
from .layers import Layer, layer_from_hyper


@dataclass
class Node:
    name: str
    layer: Layer
    inputs: tuple[str, ...]


class Graph:
    """Layers wired by name; the last node added is the output head.

    ``input_shape`` is the per-example shape; ``None`` entries match any size
    (used for the time axis of spectrogram inputs). ``input_kind`` names the
    feature the graph consumes when fed a dict of features.
    """

    INPUT = "input"

    def __init__(self, input_shape, input_kind: str = "x"):
        self.input_shape = tuple(input_shape)
        self.input_kind = input_kind
        self.nodes: list[Node] = []
        self._by_name: dict[str, Node] = {}
        self._outputs: dict[str, np.ndarray] | None = None
        self._batch = None

    def add(self, name: str, layer: Layer, inputs=None) -> str:
        if name in self._by_name or name == self.INPUT:
            raise ValueError(f"duplicate node name '{name}'")
        if inputs is None:
            inputs = (self.nodes[-1].name if self.nodes else self.INPUT,)
        elif isinstance(inputs, str):
            inputs = (inputs,)
        for src in inputs:
            if src != self.INPUT and src not in self._by_name:
                raise ValueError(f"node '{name}' reads unknown node '{src}'")
        layer.name = name
        node = Node(name, layer, tuple(inputs))
        self.nodes.append(node)
        self._by_name[name] = node
        return name

    def __getitem__(self, name: str) -> Layer:
        return self._by_name[name].layer

    def layers(self, kind: str | None = None) -> list[Layer]:
        return [n.layer for n in self.nodes if kind is None or n.layer.kind == kind]

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{n.name}.{k}", v) for n in self.nodes for k, v in n.layer.params.items()]

    def set_parameter(self, name: str, value) -> None:
        node, key = name.rsplit(".", 1)
        old = self._by_name[node].layer.params[key]
        value = np.array(value, dtype=np.float64)
        if value.shape != old.shape:
            raise ShapeError(f"parameter '{name}': shape {value.shape} != {old.shape}")
        self._by_name[node].layer.params[key] = value

    def init_params(self, rng: np.random.Generator) -> None:
        for n in self.nodes:
            n.layer.init_params(rng)

    def n_parameters(self) -> int:
        return sum(v.size for _, v in self.parameters())

    # -- computation --------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> None:
        per_example = x.shape[1:]
        ok = len(per_example) == len(self.input_shape) and all(
            d is None or d == s for d, s in zip(self.input_shape, per_example)
        )
        if not ok:
            raise ShapeError(f"graph input: expected (batch, *{self.input_shape}), got {x.shape}")

    def forward(self, x, mode: str = "eval", rng: np.random.Generator | None = None) -> np.ndarray:
        if isinstance(x, dict):
            x = x[self.input_kind]
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        train = mode == "train"
        outs = {self.INPUT: x}
        for n in self.nodes:
            args = [outs[s] for s in n.inputs]
            outs[n.name] = n.layer.forward(args if len(args) > 1 else args[0], train, rng)
        y = outs[self.nodes[-1].name]
        if y.size != x.shape[0]:
            raise ShapeError(f"output head '{self.nodes[-1].name}' is not scalar per example: {y.shape}")
        self._outputs = outs
        self._batch = x.shape[0]
        return y.reshape(x.shape[0])

    def backward(self, loss_grad, input_grad: bool = False) -> dict[str, np.ndarray]:
        """Gradients of the loss w.r.t. every parameter given dL/dprediction per example.

        With ``input_grad`` the gradient w.r.t. the graph input is kept in
        ``self.input_grad``.
        """
        if self._outputs is None:
            raise StateError("backward called without a preceding forward")
        out_name = self.nodes[-1].name
        g = np.asarray(loss_grad, dtype=np.float64)
        if g.ndim == 0:
            g = np.full(self._batch, float(g))
        pending = {out_name: g.reshape(self._outputs[out_name].shape)}
        grads: dict[str, np.ndarray] = {}
        for n in reversed(self.nodes):
            if n.name not in pending:
                continue
            g_out = pending.pop(n.name)
            if n.layer.kind == "conv2d" and not input_grad and all(s == self.INPUT for s in n.inputs):
                gin, pgrads = n.layer.backward(g_out, need_input_grad=False)
                gin = [None] * len(n.inputs) if len(n.inputs) > 1 else None
            else:
                gin, pgrads = n.layer.backward(g_out)
            for k, v in pgrads.items():
                grads[f"{n.name}.{k}"] = v
            gins = gin if len(n.inputs) > 1 else [gin]
            for src, gi in zip(n.inputs, gins):
                if gi is None:
                    continue
                pending[src] = pending[src] + gi if src in pending else gi
        self.input_grad = pending.get(self.INPUT)
        for name, v in self.parameters():
            grads.setdefault(name, np.zeros_like(v))
        return grads

    def intermediate(self, name: str) -> np.ndarray:
        if self._outputs is None:
            raise StateError("no forward pass recorded")
        return self._outputs[name]

    def clear(self) -> None:
        self._outputs = None
        for n in self.nodes:
            n.layer._cache = None

    # -- serialization ------------------------------------------------------

    def describe(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "input_kind": self.input_kind,
            "nodes": [
                {"name": n.name, "kind": n.layer.kind, "hyper": n.layer.hyper(), "inputs": list(n.inputs)}
                for n in self.nodes
            ],
        }

    @classmethod
    def from_description(cls, desc: dict) -> "Graph":
        g = cls(tuple(desc["input_shape"]), desc["input_kind"])
        for nd in desc["nodes"]:
            g.add(nd["name"], layer_from_hyper(nd["kind"], nd["hyper"]), tuple(nd["inputs"]))
        return g
