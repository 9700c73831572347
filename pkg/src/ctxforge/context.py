"""Object-context pairing and context recycling.

`biregular` draws an exact-degree bipartite multigraph between object and
context indices; `sparse_ci_sample` turns it into labeled composites;
`context_update` implements the keep-composite-or-resample rule that chains
training images into their successors' backgrounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .imageops import Image, uniform_noise_image


@dataclass
class SamplerConfig:
    n: int  # object count
    m: int  # context count
    e: int  # objects per context
    p: float = 0.5  # resample probability

    def validate(self) -> "SamplerConfig":
        if self.n < 1 or self.m < 1 or self.e < 1:
            raise InputError(f"n, m, e must be >= 1, got ({self.n}, {self.m}, {self.e})")
        if (self.m * self.e) % self.n != 0:
            raise InputError(
                f"n must divide m*e (n={self.n}, m*e={self.m * self.e}); "
                f"degrees m*e/n would not be integral"
            )
        if not 0.0 <= self.p <= 1.0:
            raise InputError(f"resample probability must be in [0, 1], got {self.p}")
        return self


@dataclass
class BiregularGraph:
    """Edge multiset where every context has degree e and every object m*e/n."""

    n: int
    m: int
    e: int
    edges: list = field(default_factory=list)  # (object_index, context_index)

    @property
    def object_degree(self) -> int:
        return self.m * self.e // self.n

    def check_degrees(self) -> "BiregularGraph":
        obj_deg = np.zeros(self.n, dtype=int)
        ctx_deg = np.zeros(self.m, dtype=int)
        for o, c in self.edges:
            obj_deg[o] += 1
            ctx_deg[c] += 1
        if not (ctx_deg == self.e).all():
            raise AssertionError(f"context degrees {ctx_deg} != {self.e}")
        if not (obj_deg == self.object_degree).all():
            raise AssertionError(f"object degrees {obj_deg} != {self.object_degree}")
        return self


def biregular(n: int, object_degree: int, m: int, e: int, rng: np.random.Generator) -> BiregularGraph:
    """Sample an exact-degree object-context pairing.

    The slot list is a concatenation of m*e/n independent uniform
    permutations of the objects, dealt e consecutive slots per context.
    Degrees hold exactly; parallel edges can occur across permutation
    boundaries. When e is a multiple of n, every context run covers whole
    permutations, so each context sees every object equally often and the
    empirical label-context association vanishes identically.
    """
    cfg = SamplerConfig(n, m, e).validate()
    if object_degree * n != m * e:
        raise InputError(f"object_degree {object_degree} != m*e/n = {m * e // n}")
    blocks = [rng.permutation(n) for _ in range(m * e // n)]
    slots = np.concatenate(blocks)
    edges = [(int(slots[k * e + i]), k) for k in range(m) for i in range(e)]
    return BiregularGraph(n, m, e, edges).check_degrees()


def sparse_ci_sample(object_source, context_source, gamma, cfg: SamplerConfig, rng: np.random.Generator) -> list:
    """Draw n objects and m contexts, pair them biregularly, and emit one
    observation per edge.

    `object_source(rng)` must yield (object, label), `context_source(rng)` a
    context, and `gamma(object, context)` the observed input. Returns m*e
    (input, label) pairs ordered context by context.
    """
    cfg.validate()
    objects = [object_source(rng) for _ in range(cfg.n)]
    contexts = [context_source(rng) for _ in range(cfg.m)]
    graph = biregular(cfg.n, cfg.m * cfg.e // cfg.n, cfg.m, cfg.e, rng)
    out = []
    for o_idx, c_idx in graph.edges:
        obj, label = objects[o_idx]
        out.append((gamma(obj, contexts[c_idx]), label))
    return out


def context_update(current_contexts: list, last_composites: list, p: float, rng: np.random.Generator) -> list:
    """Per slot: with probability p keep the slot's last composite as the new
    context, otherwise draw a fresh uniform-noise image."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"resample probability must be in [0, 1], got {p}")
    if len(current_contexts) != len(last_composites):
        raise InputError(
            f"context/composite list lengths differ: {len(current_contexts)} vs {len(last_composites)}"
        )
    out = []
    for ctx, comp in zip(current_contexts, last_composites):
        if rng.random() < p:
            out.append(Image(comp.pixels.copy(), None))
        else:
            out.append(uniform_noise_image(ctx.height, ctx.width, ctx.channels, rng))
    return out
