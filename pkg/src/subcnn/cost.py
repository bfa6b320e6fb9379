"""Analytic op-count model over model configs.

Counting convention (applied uniformly, so reductions are insensitive to
it): a convolution or FC output costs one mult per tap and one add per
tap, the last add being the bias (taps - 1 accumulations + 1 bias add).
Bias-less frontend filters cost taps - 1 adds; the complementary branch
subtraction costs one add per sample. Pool comparisons and activation
selects are tallied in a separate aux column so the formula-only totals
stay checkable against an instrumented run.

Training-iteration totals model the backward pass as two extra
conv-equivalent sweeps (input gradient + weight gradient) over every conv
and FC layer, plus the per-parameter update arithmetic.
"""

from dataclasses import dataclass, field

from .frontend import node_layout, wavelet_taps
from .model import ModelConfig


@dataclass
class CostRow:
    layer: str
    mults: int = 0
    adds: int = 0
    aux_adds: int = 0  # comparisons/selects (pooling, activations)

    @property
    def macs(self):
        return self.mults


@dataclass
class CostReport:
    config_name: str
    rows: list = field(default_factory=list)
    update_mults: int = 0
    update_adds: int = 0

    @property
    def inference_mults(self):
        return sum(r.mults for r in self.rows)

    @property
    def inference_adds(self):
        return sum(r.adds for r in self.rows)

    @property
    def inference_aux(self):
        return sum(r.aux_adds for r in self.rows)

    def training_totals(self):
        """(mults, adds) for one iteration: forward + 2x backward + update.

        Pool rows carry only aux ops, so the 2x backward sweep over conv,
        FC and frontend rows equals 2x the inference totals.
        """
        return (3 * self.inference_mults + self.update_mults,
                3 * self.inference_adds + self.update_adds)

    def to_csv(self):
        lines = ["layer,mults,adds,macs,aux_adds"]
        for r in self.rows:
            lines.append(f"{r.layer},{r.mults},{r.adds},{r.macs},{r.aux_adds}")
        lines.append(f"TOTAL,{self.inference_mults},{self.inference_adds},"
                     f"{self.inference_mults},{self.inference_aux}")
        tm, ta = self.training_totals()
        lines.append(f"TRAIN_ITER,{tm},{ta},{tm},{self.inference_aux * 3}")
        return "\n".join(lines) + "\n"

    def to_text(self, baseline=None):
        w = max(len(r.layer) for r in self.rows) + 2
        out = [f"{'layer':<{w}}{'mults':>16}{'adds':>16}{'aux':>12}"]
        for r in self.rows:
            out.append(f"{r.layer:<{w}}{r.mults:>16,}{r.adds:>16,}{r.aux_adds:>12,}")
        out.append(f"{'TOTAL (inference)':<{w}}{self.inference_mults:>16,}"
                   f"{self.inference_adds:>16,}{self.inference_aux:>12,}")
        tm, ta = self.training_totals()
        out.append(f"{'TOTAL (train iter)':<{w}}{tm:>16,}{ta:>16,}")
        if baseline is not None:
            ra = reduction(baseline.inference_adds, self.inference_adds)
            rm = reduction(baseline.inference_mults, self.inference_mults)
            out.append(f"reduction vs {baseline.config_name}: "
                       f"adds {ra:.2f}%  mults {rm:.2f}%")
        return "\n".join(out) + "\n"


def reduction(baseline, candidate):
    """Percentage reduction, 100*(1 - candidate/baseline)."""
    return 100.0 * (1.0 - candidate / baseline)


def conv_cost(f_prev, s, f, p_h, p_w=None):
    """(mults, adds) for one conv layer: f_prev s^2 f p^2 taps, bias add."""
    p_w = p_h if p_w is None else p_w
    taps = f_prev * s * s
    outputs = f * p_h * p_w
    return taps * outputs, taps * outputs  # adds = (taps - 1) + 1 bias


def fc_cost(d_in, d_out):
    return d_in * d_out, d_in * d_out


def frontend_costs(cfg: ModelConfig):
    """Per-node rows for the decomposition tree (pre-decimation extents)."""
    fe = cfg.frontend
    rows = []
    if fe is None:
        return rows
    c = fe.channels
    taps = len(wavelet_taps(fe.wavelet)[0]) if fe.mode == "wsd" else fe.order ** 2
    h, w = cfg.input_shape[1:]
    extents = {}

    def walk(idx_iter, level, hh, ww):
        if level == 2 * fe.depth:
            return
        idx = next(idx_iter)
        extents[idx] = (hh, ww)
        nh, nw = (hh // 2, ww) if level % 2 == 0 else (hh, ww // 2)
        walk(idx_iter, level + 1, nh, nw)
        walk(idx_iter, level + 1, nh, nw)

    layout = node_layout(fe.depth)
    walk(iter(i for i, _, _ in layout), 0, h, w)
    for idx, _, axis in layout:
        hh, ww = extents[idx]
        per_filter_m = c * taps * hh * ww
        per_filter_a = c * (taps - 1) * hh * ww
        if fe.mode == "casd":
            rows.append(CostRow(f"frontend/node{idx}", per_filter_m,
                                per_filter_a + c * hh * ww))  # + X - Y1
        else:
            rows.append(CostRow(f"frontend/node{idx}", 2 * per_filter_m, 2 * per_filter_a))
    return rows


def model_cost(cfg: ModelConfig):
    report = CostReport(cfg.name)
    report.rows.extend(frontend_costs(cfg))
    paths = cfg.num_paths
    chain = cfg.conv_chain()
    sizes = cfg.spatial_chain()
    for j, unit in enumerate(chain):
        h, w = sizes[j]
        if unit[0] == "pool":
            windows = paths * chain_out_ch(chain, j) * (h // 2) * (w // 2)
            report.rows.append(CostRow(f"pool{j}", aux_adds=3 * windows))
        else:
            _, k, ci, co = unit
            m, a = conv_cost(ci, k, co, h, w)
            report.rows.append(CostRow(f"conv{j}", m * paths, a * paths,
                                       aux_adds=co * h * w * paths))
    dims = [cfg.flattened_dim()] + list(cfg.fc_hidden) + [cfg.classes]
    for j in range(len(dims) - 1):
        m, a = fc_cost(dims[j], dims[j + 1])
        aux = dims[j + 1] if j < len(dims) - 2 else 0
        report.rows.append(CostRow(f"fc{j}", m, a, aux_adds=aux))

    n_params = _parameter_count(cfg)
    report.update_mults = 3 * n_params
    report.update_adds = 3 * n_params
    return report


def chain_out_ch(chain, upto):
    ch = 0
    for unit in chain[:upto]:
        if unit[0] == "conv":
            ch = unit[3]
    return ch


def _parameter_count(cfg: ModelConfig):
    n = 0
    if cfg.frontend is not None:
        fe = cfg.frontend
        per = fe.channels * fe.order ** 2
        n += fe.num_filters * per
    for unit in cfg.conv_chain():
        if unit[0] == "conv":
            _, k, ci, co = unit
            n += (ci * k * k * co + co) * cfg.num_paths
    dims = [cfg.flattened_dim()] + list(cfg.fc_hidden) + [cfg.classes]
    for j in range(len(dims) - 1):
        n += dims[j] * dims[j + 1] + dims[j + 1]
    return n


def mac_total(cfg: ModelConfig):
    """Total multiplies (one MAC per mult) over frontend, convs and FCs."""
    return model_cost(cfg).inference_mults


def config_parameter_count(cfg: ModelConfig):
    return _parameter_count(cfg)
