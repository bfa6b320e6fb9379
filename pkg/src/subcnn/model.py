"""Model construction, forward and backward for MSR / SSR / BCNN.

A model is a flat dict of named parameter arrays plus the static topology
derived from its config:

    frontend/node{i}/U            depthwise decomposition filters
    path{p}/conv{j}/W, .../b      per-path conv stacks (4^M paths for MSR)
    fc{j}/W, fc{j}/b              shared fully connected head

Conv layers are 3x3-style same-size (pad k//2, stride 1) and are each
followed by a leaky ReLU; 2x2 max pools terminate blocks. Within each
pool-terminated block an identity skip adds the activation of the
earliest earlier conv whose output channel count equals the block's final
channel count onto the block output right before pooling (no projection
convs, so blocks without such a conv simply have no skip). Hidden FC
layers use leaky ReLU and dropout; the final FC emits logits.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .frontend import FrontendSpec, FrontendState, frontend_init, decompose, frontend_backward

LEAK = 0.1


class ConfigError(ValueError):
    """Model configuration is internally inconsistent."""


@dataclass
class LayerSpec:
    kind: str                 # 'conv' | 'pool'
    k: int = 0
    out_ch: int = 0


@dataclass
class ModelConfig:
    name: str
    arch: str                       # 'msr' | 'ssr' | 'bcnn'
    input_shape: tuple              # (c, h, w)
    classes: int
    layers: list                    # list[LayerSpec]; conv out counts are per-path
    fc_hidden: list
    dropout: float = 0.5
    frontend: FrontendSpec | None = None
    fc_input: int | None = None     # optional declared FC-1 in-dim, checked at build

    def __post_init__(self):
        if self.arch not in ("msr", "ssr", "bcnn"):
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.arch == "bcnn" and self.frontend is not None:
            raise ConfigError("bcnn takes no decomposition frontend")
        if self.arch != "bcnn" and self.frontend is None:
            raise ConfigError(f"{self.arch} requires a frontend spec")

    @property
    def num_paths(self):
        return 4 ** self.frontend.depth if self.arch == "msr" else 1

    def path_in_channels(self):
        c = self.input_shape[0]
        if self.arch == "ssr":
            return c * 4 ** self.frontend.depth
        return c

    def conv_chain(self):
        """[(k, in_ch, out_ch) or ('pool',)] with channel chain resolved."""
        chain, ch = [], self.path_in_channels()
        for ls in self.layers:
            if ls.kind == "pool":
                chain.append(("pool",))
            else:
                chain.append(("conv", ls.k, ch, ls.out_ch))
                ch = ls.out_ch
        return chain

    def spatial_chain(self):
        """(h, w) entering each layer plus the final feature size."""
        h, w = self.input_shape[1:]
        if self.frontend is not None:
            h >>= self.frontend.depth
            w >>= self.frontend.depth
        sizes = []
        for ls in self.layers:
            sizes.append((h, w))
            if ls.kind == "pool":
                if h % 2 or w % 2:
                    raise ConfigError(f"pool on odd feature map {h}x{w}")
                h, w = h // 2, w // 2
        sizes.append((h, w))
        return sizes

    def flattened_dim(self):
        h, w = self.spatial_chain()[-1]
        out_ch = next(c[3] for c in reversed(self.conv_chain()) if c[0] == "conv")
        return h * w * out_ch * self.num_paths


def residual_sources(chain):
    """Skip source per block: {last-conv index: source conv index}."""
    sources = {}
    block = []
    for i, unit in enumerate(chain):
        if unit[0] == "conv":
            block.append(i)
        else:
            if len(block) >= 2:
                final_ch = chain[block[-1]][3]
                for j in block[:-1]:
                    if chain[j][3] == final_ch:
                        sources[block[-1]] = j
                        break
            block = []
    return sources


@dataclass
class Model:
    config: ModelConfig
    params: dict = field(default_factory=dict)
    frontend_state: FrontendState | None = None
    training: bool = True

    def frontend_param_names(self):
        return [n for n in sorted(self.params) if n.startswith("frontend/")]

    def main_param_names(self):
        return [n for n in sorted(self.params) if not n.startswith("frontend/")]


def build_model(cfg: ModelConfig, seed, dtype=np.float32):
    """Instantiate parameters: weights ~ N(0, 0.01^2), biases = 1."""
    expected = cfg.flattened_dim()
    if cfg.fc_input is not None and cfg.fc_input != expected:
        raise ConfigError(f"declared FC input dim {cfg.fc_input} inconsistent with "
                          f"architecture; expected flattened size {expected}")
    in_h, in_w = cfg.input_shape[1:]
    depth = cfg.frontend.depth if cfg.frontend else 0
    pools = sum(1 for ls in cfg.layers if ls.kind == "pool")
    div = 2 ** (depth + pools)
    if in_h % div or in_w % div:
        raise ConfigError(f"input {in_h}x{in_w} not divisible by 2^{depth + pools}")

    m = Model(cfg)
    rng = np.random.default_rng(seed)

    if cfg.frontend is not None:
        fe_spec = cfg.frontend
        if fe_spec.channels != cfg.input_shape[0]:
            raise ConfigError("frontend channel count must match the input")
        m.frontend_state = frontend_init(fe_spec, rng.integers(2 ** 63), dtype)
        for name, arr in m.frontend_state.params.items():
            m.params[f"frontend/{name}"] = arr

    chain = cfg.conv_chain()
    for p in range(cfg.num_paths):
        for j, unit in enumerate(chain):
            if unit[0] != "conv":
                continue
            _, k, ci, co = unit
            m.params[f"path{p}/conv{j}/W"] = (rng.standard_normal((co, ci, k, k)) * 0.01).astype(dtype)
            m.params[f"path{p}/conv{j}/b"] = np.ones(co, dtype=dtype)

    dims = [expected] + list(cfg.fc_hidden) + [cfg.classes]
    for j in range(len(dims) - 1):
        m.params[f"fc{j}/W"] = (rng.standard_normal((dims[j + 1], dims[j])) * 0.01).astype(dtype)
        m.params[f"fc{j}/b"] = np.ones(dims[j + 1], dtype=dtype)
    return m


def _sync_frontend(m):
    # frontend params live both in m.params (optimizer view) and in the
    # FrontendState (decompose view); keep them the same objects
    if m.frontend_state is not None:
        for name in m.frontend_state.params:
            m.frontend_state.params[name] = m.params[f"frontend/{name}"]


def _path_forward(x, m, p, chain, sources):
    caches = []
    acts = {}
    for j, unit in enumerate(chain):
        if unit[0] == "pool":
            if j - 1 in sources:
                skip = acts[sources[j - 1]]
                x = x + skip
            y, idx = ops.maxpool2x2(x)
            caches.append(("pool", x.shape, idx, j - 1 in sources))
            x = y
        else:
            w = m.params[f"path{p}/conv{j}/W"]
            b = m.params[f"path{p}/conv{j}/b"]
            cp = ops.ConvParams(w, b, padding=unit[1] // 2)
            pre = ops.conv2d_forward(x, cp)
            caches.append(("conv", x, pre))
            x = ops.leaky_relu(pre, LEAK)
            acts[j] = x
    return x, caches


def _path_backward(dy, m, p, chain, sources, caches):
    grads = {}
    pending = {}
    for j in reversed(range(len(chain))):
        c = caches[j]
        if c[0] == "pool":
            _, x_shape, idx, has_skip = c
            dy = ops.maxpool2x2_backward(dy, idx, x_shape)
            if has_skip:
                src = sources[j - 1]
                pending[src] = pending.get(src, 0) + dy
        else:
            _, x_in, pre = c
            if j in pending:
                dy = dy + pending.pop(j)
            dpre = ops.leaky_relu_backward(pre, dy, LEAK)
            cp = ops.ConvParams(m.params[f"path{p}/conv{j}/W"],
                                m.params[f"path{p}/conv{j}/b"], padding=chain[j][1] // 2)
            dy, dw, db = ops.conv2d_backward(x_in, cp, dpre)
            grads[f"path{p}/conv{j}/W"] = dw
            grads[f"path{p}/conv{j}/b"] = db
    return dy, grads


def _dropout_rng(seed, layer):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2 ** 63 - 1),
                                                        spawn_key=(layer,)))


def model_forward(m: Model, x, seed=0):
    """Returns (logits, cache). Dropout is active only when m.training."""
    cfg = m.config
    _sync_frontend(m)
    chain = cfg.conv_chain()
    sources = residual_sources(chain)
    cache = {"chain": chain, "sources": sources, "x_shape": x.shape}

    if cfg.frontend is not None:
        subbands, fe_cache = decompose(x, m.frontend_state)
        cache["fe_cache"] = fe_cache
        if cfg.arch == "ssr":
            path_inputs = [ops.concat_channels(subbands)]
            cache["subband_channels"] = [s.shape[1] for s in subbands]
        else:
            path_inputs = subbands
    else:
        path_inputs = [x]

    feats, path_caches = [], []
    for p, xin in enumerate(path_inputs):
        f, pc = _path_forward(xin, m, p, chain, sources)
        feats.append(f)
        path_caches.append(pc)
    cache["path_caches"] = path_caches
    cache["feat_channels"] = [f.shape[1] for f in feats]
    cache["feat_shape"] = feats[0].shape

    h = ops.concat_channels(feats) if len(feats) > 1 else feats[0]
    n_fc = len(cfg.fc_hidden) + 1
    fc_caches = []
    for j in range(n_fc):
        w, b = m.params[f"fc{j}/W"], m.params[f"fc{j}/b"]
        pre = ops.fully_connected(h, w, b)
        if j < n_fc - 1:
            act = ops.leaky_relu(pre, LEAK)
            out, mask = ops.dropout(act, cfg.dropout, _dropout_rng(seed, j), m.training)
            fc_caches.append((h, pre, mask))
            h = out
        else:
            fc_caches.append((h, pre, None))
            h = pre
    cache["fc_caches"] = fc_caches
    return h, cache


def model_backward(m: Model, cache, dlogits):
    """Gradients for every trainable parameter; WSD frontends get none."""
    cfg = m.config
    grads = {}
    n_fc = len(cfg.fc_hidden) + 1
    dy = dlogits
    for j in reversed(range(n_fc)):
        h, pre, mask = cache["fc_caches"][j]
        if j < n_fc - 1:
            dy = ops.dropout_backward(dy, mask)
            dy = ops.leaky_relu_backward(pre, dy, LEAK)
        dy, dw, db = ops.fully_connected_backward(h, m.params[f"fc{j}/W"], dy)
        grads[f"fc{j}/W"] = dw
        grads[f"fc{j}/b"] = db

    dy = dy.reshape(cache["feat_shape"][0], -1, *cache["feat_shape"][2:])
    if len(cache["path_caches"]) > 1:
        dfeats = ops.concat_channels_backward(dy, cache["feat_channels"])
    else:
        dfeats = [dy]

    dpaths = []
    for p, df in enumerate(dfeats):
        dxin, pg = _path_backward(df, m, p, cache["chain"], cache["sources"], cache["path_caches"][p])
        grads.update(pg)
        dpaths.append(dxin)

    if cfg.frontend is not None:
        if cfg.arch == "ssr":
            dsubs = ops.concat_channels_backward(dpaths[0], cache["subband_channels"])
        else:
            dsubs = dpaths
        dx, fe_grads = frontend_backward(dsubs, m.frontend_state, cache["fe_cache"])
        for name, g in fe_grads.items():
            grads[f"frontend/{name}"] = g
    else:
        dx = dpaths[0]
    return grads, dx


def parameter_count(m: Model):
    count = sum(a.size for a in m.params.values())
    return count, count * 4
