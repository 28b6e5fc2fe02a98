"""The four gait-classifier architectures: construction, exact parameter
and MAC accounting, and the float / fake-quant / integer forward paths.

A `Model` holds float weights (as autodiff tensors) plus batch-norm
running statistics. `freeze()` folds batch norm, calibrates activation
ranges on sample windows, and attaches an integer-only twin whose
fake-quant and integer paths agree bit-for-bit (see the quantized-twin
module for the mechanics).
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import quant as Q
from . import tensor as T
from .errors import ConfigError
from .tensor import Tensor

ARCH_CNN = "cnn1d"
ARCH_SEPCNN = "sepcnn1d"
ARCH_LSTM = "lstm"
ARCH_TRANSFORMER = "transformer"
ARCHITECTURES = (ARCH_CNN, ARCH_SEPCNN, ARCH_LSTM, ARCH_TRANSFORMER)

VALID_H_SIZES = tuple(range(8, 65, 8))
VALID_D_MODELS = (8, 16, 24, 32)
CONV_KERNEL = 3
FORMAT_VERSION = 1

CLASS_NAMES = ("forefoot", "heel")  # class index 0, 1


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    n: int = 25
    c_in: int = 3
    classes: int = 2
    bitwidth: int = 8
    num_blocks: int = None
    h_size: int = None
    d_model: int = None

    def __post_init__(self):
        object.__setattr__(self, "arch", str(self.arch).lower())
        validate_config(self)

    @property
    def variable(self):
        """The architecture's free structural parameter."""
        if self.arch in (ARCH_CNN, ARCH_SEPCNN):
            return self.num_blocks
        if self.arch == ARCH_LSTM:
            return self.h_size
        return self.d_model


def validate_config(cfg):
    if cfg.arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {cfg.arch!r}; expected one of {ARCHITECTURES}")
    if not (isinstance(cfg.n, int) and cfg.n >= 1):
        raise ConfigError(f"input length n must be a positive integer, got {cfg.n}")
    if not (isinstance(cfg.c_in, int) and cfg.c_in >= 1):
        raise ConfigError(f"c_in must be a positive integer, got {cfg.c_in}")
    if not (isinstance(cfg.classes, int) and cfg.classes >= 2):
        raise ConfigError(f"classes must be >= 2, got {cfg.classes}")
    if cfg.bitwidth not in Q.SUPPORTED_BITWIDTHS:
        raise ConfigError(f"bitwidth must be one of {Q.SUPPORTED_BITWIDTHS}, got {cfg.bitwidth}")

    wants = {
        ARCH_CNN: "num_blocks", ARCH_SEPCNN: "num_blocks",
        ARCH_LSTM: "h_size", ARCH_TRANSFORMER: "d_model",
    }[cfg.arch]
    for field in ("num_blocks", "h_size", "d_model"):
        val = getattr(cfg, field)
        if field == wants:
            if val is None:
                raise ConfigError(f"{cfg.arch} requires {field}")
        elif val is not None:
            raise ConfigError(f"{field} is not a {cfg.arch} parameter")

    if cfg.arch in (ARCH_CNN, ARCH_SEPCNN):
        if not (1 <= cfg.num_blocks <= 6):
            raise ConfigError(f"num_blocks must be in 1..6, got {cfg.num_blocks}")
        pools = cfg.num_blocks - 1
        if cfg.n < 2**pools:
            raise ConfigError(
                f"n={cfg.n} too short for {pools} pooling stages (needs >= {2**pools})")
    elif cfg.arch == ARCH_LSTM:
        if cfg.h_size not in VALID_H_SIZES:
            raise ConfigError(f"h_size must be one of {VALID_H_SIZES}, got {cfg.h_size}")
    else:
        if cfg.d_model not in VALID_D_MODELS:
            raise ConfigError(f"d_model must be one of {VALID_D_MODELS}, got {cfg.d_model}")


def channel_schedule(num_blocks):
    """Output channels per block: 3 for blocks 1-2, doubling every two."""
    if not (1 <= num_blocks <= 6):
        raise ConfigError(f"num_blocks must be in 1..6, got {num_blocks}")
    return [3 * 2 ** (i // 2) for i in range(num_blocks)]


def head_hidden(final_channels):
    """Hidden width of the CNN dense head."""
    return max(final_channels // 2, 2)


# ---------------------------------------------------------------------------
# exact accounting


def _cnn_layout(cfg):
    """Yield (c_prev, c_out, length, pooled) per block plus head widths."""
    ch = channel_schedule(cfg.num_blocks)
    layout = []
    c_prev, L = cfg.c_in, cfg.n
    for i, c in enumerate(ch):
        pooled = i < cfg.num_blocks - 1
        layout.append((c_prev, c, L, pooled))
        if pooled:
            L //= 2
        c_prev = c
    return layout, ch[-1], head_hidden(ch[-1])


def param_count(cfg):
    """Exact trainable parameter total, including biases and BN affine pairs."""
    validate_config(cfg)
    k = CONV_KERNEL
    if cfg.arch == ARCH_CNN:
        layout, fc, hid = _cnn_layout(cfg)
        total = sum((cp * k + 1) * c + 2 * c for cp, c, _, _ in layout)
        return total + (fc + 1) * hid + (hid + 1) * cfg.classes
    if cfg.arch == ARCH_SEPCNN:
        layout, fc, hid = _cnn_layout(cfg)
        total = sum(cp * (k + 1) + (cp + 1) * c + 2 * c for cp, c, _, _ in layout)
        return total + (fc + 1) * hid + (hid + 1) * cfg.classes
    if cfg.arch == ARCH_LSTM:
        h = cfg.h_size
        return 4 * (h * (cfg.c_in + h) + h) + (h + 1) * cfg.classes
    d = cfg.d_model
    return ((cfg.c_in + 1) * d                  # input projection
            + 4 * (d * d + d)                   # q, k, v, output projections
            + 2 * d                             # BN after attention
            + (d + 1) * 4 * d + (4 * d + 1) * d # feed-forward
            + 2 * d                             # BN after feed-forward
            + (d + 1) * cfg.classes)


def mac_count(cfg):
    """Exact multiply-accumulate total for one forward pass of length n."""
    validate_config(cfg)
    k = CONV_KERNEL
    if cfg.arch == ARCH_CNN:
        layout, fc, hid = _cnn_layout(cfg)
        total = sum(c * cp * k * L for cp, c, L, _ in layout)
        return total + fc * hid + hid * cfg.classes
    if cfg.arch == ARCH_SEPCNN:
        layout, fc, hid = _cnn_layout(cfg)
        total = sum(cp * k * L + c * cp * L for cp, c, L, _ in layout)
        return total + fc * hid + hid * cfg.classes
    if cfg.arch == ARCH_LSTM:
        h = cfg.h_size
        return cfg.n * 4 * h * (cfg.c_in + h) + h * cfg.classes
    d, n = cfg.d_model, cfg.n
    return (n * cfg.c_in * d        # projection
            + 4 * n * d * d         # q, k, v, output projections
            + 2 * n * n * d         # scores and context
            + 8 * n * d * d         # feed-forward (two 4x layers)
            + d * cfg.classes)


# ---------------------------------------------------------------------------
# construction


def sinusoidal_encoding(n, d):
    """Standard fixed positional encoding, shape (n, d)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / 10000.0 ** (2.0 * (i // 2) / d)
    pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return pe


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build(config, seed=0):
    """Construct a model with fan-in-scaled uniform init, seeded."""
    validate_config(config)
    rng = np.random.default_rng(seed)
    k = CONV_KERNEL
    params = {}
    bn_stats = {}
    pe = None

    def param(name, shape, fan_in):
        params[name] = Tensor(_uniform(rng, shape, fan_in), requires_grad=True)

    def bn(name, c):
        params[f"{name}.gamma"] = Tensor(np.ones(c), requires_grad=True)
        params[f"{name}.beta"] = Tensor(np.zeros(c), requires_grad=True)
        bn_stats[name] = {"mean": np.zeros(c), "var": np.ones(c)}

    if config.arch in (ARCH_CNN, ARCH_SEPCNN):
        layout, fc, hid = _cnn_layout(config)
        for i, (cp, c, _, _) in enumerate(layout):
            if config.arch == ARCH_CNN:
                param(f"block{i}.conv.w", (c, cp, k), cp * k)
                param(f"block{i}.conv.b", (c,), cp * k)
            else:
                param(f"block{i}.dw.w", (cp, k), k)
                param(f"block{i}.dw.b", (cp,), k)
                param(f"block{i}.pw.w", (c, cp, 1), cp)
                param(f"block{i}.pw.b", (c,), cp)
            bn(f"block{i}.bn", c)
        param("head1.w", (hid, fc), fc)
        param("head1.b", (hid,), fc)
        param("head2.w", (config.classes, hid), hid)
        param("head2.b", (config.classes,), hid)
    elif config.arch == ARCH_LSTM:
        h = config.h_size
        param("lstm.w_ih", (4 * h, config.c_in), config.c_in)
        param("lstm.w_hh", (4 * h, h), h)
        param("lstm.b", (4 * h,), h)
        param("head.w", (config.classes, h), h)
        param("head.b", (config.classes,), h)
    else:
        d = config.d_model
        param("proj.w", (d, config.c_in), config.c_in)
        param("proj.b", (d,), config.c_in)
        for gate in ("wq", "wk", "wv", "wo"):
            param(f"attn.{gate}", (d, d), d)
            param(f"attn.{gate[1]}b", (d,), d)
        bn("bn1", d)
        param("ffn1.w", (4 * d, d), d)
        param("ffn1.b", (4 * d,), d)
        param("ffn2.w", (d, 4 * d), 4 * d)
        param("ffn2.b", (d,), 4 * d)
        bn("bn2", d)
        param("head.w", (config.classes, d), d)
        param("head.b", (config.classes,), d)
        pe = sinusoidal_encoding(config.n, d)

    return Model(config, params, bn_stats, pe)


class Model:
    """Float weights + BN statistics, with an optional integer twin."""

    def __init__(self, config, params, bn_stats, pe=None):
        self.config = config
        self.params = params
        self.bn_stats = bn_stats
        self.pe = pe
        self.observers = {}
        self.quantized = None

    # -- forward paths ------------------------------------------------------

    def forward(self, x, mode="float"):
        """Logits for x shaped (c_in, n) or (batch, c_in, n).

        mode "float": plain eval-mode forward. mode "fakequant": the frozen
        fake-quant path when a quantized twin exists, otherwise the QAT
        simulation using the trained activation observers. mode "int":
        integer-only inference on the twin (dequantized logits).
        """
        single = np.asarray(x).ndim == 2
        xb = np.asarray(x, dtype=np.float64)
        if single:
            xb = xb[None]
        self._check_input(xb)
        if mode == "float":
            out = self._float_forward(Tensor(xb), bn_mode="eval", fq=False).data
        elif mode == "fakequant":
            if self.quantized is not None:
                out = self.quantized.forward_fq(xb) * self.quantized.logits_qp.scale
            elif self.observers:
                out = self._float_forward(Tensor(xb), bn_mode="eval", fq=True).data
            else:
                raise ConfigError(
                    "fakequant mode needs a quantized twin or trained observers")
        elif mode == "int":
            if self.quantized is None:
                raise ConfigError("int mode requires a quantized twin; call freeze() first")
            out = self.quantized.forward_int(xb) * self.quantized.logits_qp.scale
        else:
            raise ConfigError(f"unknown forward mode {mode!r}")
        return out[0] if single else out

    def _check_input(self, xb):
        cfg = self.config
        if xb.shape[1:] != (cfg.c_in, cfg.n):
            raise ConfigError(
                f"input shape {xb.shape[1:]} != (c_in={cfg.c_in}, n={cfg.n})")

    def train_forward(self, x, fq=False, observe=False, bn_mode="train"):
        """Tape-recordable forward on a (batch, c_in, n) Tensor."""
        return self._float_forward(x, bn_mode=bn_mode, fq=fq, observe=observe)

    def _w(self, name, fq):
        w = self.params[name]
        if not fq:
            return w
        return Q.fake_quantize(w, Q.weight_qparams(w.data, self.config.bitwidth))

    def _afq(self, t, name, fq, observe):
        if not fq:
            return t
        obs = self.observers.setdefault(name, Q.RangeObserver())
        if observe:
            obs.update(t.data)
        if obs.range is None:
            return t
        return Q.fake_quantize(t, obs.qparams(self.config.bitwidth))

    def _float_forward(self, x, bn_mode, fq, observe=False):
        cfg = self.config
        h = self._afq(x, "input", fq, observe)
        if cfg.arch in (ARCH_CNN, ARCH_SEPCNN):
            return self._cnn_forward(h, bn_mode, fq, observe)
        if cfg.arch == ARCH_LSTM:
            return self._lstm_forward(h, fq, observe)
        return self._transformer_forward(h, bn_mode, fq, observe)

    def _bn(self, t, name, bn_mode, channel_axis=1):
        st = self.bn_stats[name]
        return T.batchnorm1d(t, self.params[f"{name}.gamma"], self.params[f"{name}.beta"],
                             st["mean"], st["var"], mode=bn_mode, channel_axis=channel_axis)

    def _cnn_forward(self, h, bn_mode, fq, observe):
        cfg = self.config
        for i in range(cfg.num_blocks):
            if cfg.arch == ARCH_CNN:
                h = T.conv1d(h, self._w(f"block{i}.conv.w", fq), self.params[f"block{i}.conv.b"])
            else:
                h = T.depthwise_conv1d(h, self._w(f"block{i}.dw.w", fq),
                                       self.params[f"block{i}.dw.b"])
                h = self._afq(h, f"block{i}.dw", fq, observe)
                h = T.conv1d(h, self._w(f"block{i}.pw.w", fq), self.params[f"block{i}.pw.b"])
            h = self._bn(h, f"block{i}.bn", bn_mode)
            h = T.relu(h)
            h = self._afq(h, f"block{i}", fq, observe)
            if i < cfg.num_blocks - 1:
                h = T.maxpool1d(h)
        h = T.global_avg_pool(h)
        h = self._afq(h, "gap", fq, observe)
        h = T.relu(T.dense(h, self._w("head1.w", fq), self.params["head1.b"]))
        h = self._afq(h, "hidden", fq, observe)
        return T.dense(h, self._w("head2.w", fq), self.params["head2.b"])

    def _lstm_forward(self, x, fq, observe):
        cfg = self.config
        B = x.data.shape[0]
        w_ih = self._w("lstm.w_ih", fq)
        w_hh = self._w("lstm.w_hh", fq)
        b = self.params["lstm.b"]
        h = Tensor(np.zeros((B, cfg.h_size)))
        c = Tensor(np.zeros((B, cfg.h_size)))
        for t in range(cfg.n):
            x_t = T.time_slice(x, t)
            h, c = T.lstm_cell(x_t, h, c, w_ih, w_hh, b)
            h = self._afq(h, "h", fq, observe)
            c = self._afq(c, "c", fq, observe)
        return T.dense(h, self._w("head.w", fq), self.params["head.b"])

    def _transformer_forward(self, x, bn_mode, fq, observe):
        p = self.params
        h = T.dense(T.transpose_last2(x), self._w("proj.w", fq), p["proj.b"])
        h = T.add(h, Tensor(self.pe))
        h = self._afq(h, "proj", fq, observe)
        a = T.one_head_attention(h, self._w("attn.wq", fq), p["attn.qb"],
                                 self._w("attn.wk", fq), p["attn.kb"],
                                 self._w("attn.wv", fq), p["attn.vb"],
                                 self._w("attn.wo", fq), p["attn.ob"])
        a = self._afq(a, "attn", fq, observe)
        r = self._bn(T.add(h, a), "bn1", bn_mode, channel_axis=2)
        f = T.relu(T.dense(r, self._w("ffn1.w", fq), p["ffn1.b"]))
        f = self._afq(f, "ffn", fq, observe)
        f = T.dense(f, self._w("ffn2.w", fq), p["ffn2.b"])
        r = self._bn(T.add(r, f), "bn2", bn_mode, channel_axis=2)
        g = T.global_avg_pool(T.transpose_last2(r))
        g = self._afq(g, "pool", fq, observe)
        return T.dense(g, self._w("head.w", fq), p["head.b"])

    # -- freezing -----------------------------------------------------------

    def freeze(self, calib_inputs):
        """Fold BN, calibrate activation scales, attach the integer twin."""
        from .quantized import freeze_model
        self.quantized = freeze_model(self, np.asarray(calib_inputs, dtype=np.float64))
        return self.quantized

    # -- accounting ---------------------------------------------------------

    def parameter_count(self):
        return sum(p.data.size for p in self.params.values())

    def layer_table(self):
        """Per-layer (name, shape, params, macs) rows from the built arrays."""
        cfg = self.config
        rows = []

        def row(name, arrs, macs):
            shape = " ".join(str(tuple(a.shape)) for a in arrs)
            rows.append((name, shape, sum(a.size for a in arrs), macs))

        p = {k: v.data for k, v in self.params.items()}
        if cfg.arch in (ARCH_CNN, ARCH_SEPCNN):
            layout, fc, hid = _cnn_layout(cfg)
            for i, (cp, c, L, _) in enumerate(layout):
                if cfg.arch == ARCH_CNN:
                    w = p[f"block{i}.conv.w"]
                    row(f"block{i}.conv", [w, p[f"block{i}.conv.b"]],
                        w.shape[0] * w.shape[1] * w.shape[2] * L)
                else:
                    dw = p[f"block{i}.dw.w"]
                    row(f"block{i}.dw", [dw, p[f"block{i}.dw.b"]],
                        dw.shape[0] * dw.shape[1] * L)
                    pw = p[f"block{i}.pw.w"]
                    row(f"block{i}.pw", [pw, p[f"block{i}.pw.b"]],
                        pw.shape[0] * pw.shape[1] * L)
                row(f"block{i}.bn", [p[f"block{i}.bn.gamma"], p[f"block{i}.bn.beta"]], 0)
            row("head1", [p["head1.w"], p["head1.b"]], p["head1.w"].size)
            row("head2", [p["head2.w"], p["head2.b"]], p["head2.w"].size)
        elif cfg.arch == ARCH_LSTM:
            row("lstm", [p["lstm.w_ih"], p["lstm.w_hh"], p["lstm.b"]],
                cfg.n * (p["lstm.w_ih"].size + p["lstm.w_hh"].size))
            row("head", [p["head.w"], p["head.b"]], p["head.w"].size)
        else:
            d, n = cfg.d_model, cfg.n
            row("proj", [p["proj.w"], p["proj.b"]], n * p["proj.w"].size)
            row("attn", [p["attn.wq"], p["attn.qb"], p["attn.wk"], p["attn.kb"],
                         p["attn.wv"], p["attn.vb"], p["attn.wo"], p["attn.ob"]],
                4 * n * d * d + 2 * n * n * d)
            row("bn1", [p["bn1.gamma"], p["bn1.beta"]], 0)
            row("ffn1", [p["ffn1.w"], p["ffn1.b"]], n * p["ffn1.w"].size)
            row("ffn2", [p["ffn2.w"], p["ffn2.b"]], n * p["ffn2.w"].size)
            row("bn2", [p["bn2.gamma"], p["bn2.beta"]], 0)
            row("head", [p["head.w"], p["head.b"]], p["head.w"].size)
        return rows

    def describe(self):
        rows = self.layer_table()
        lines = [f"{self.config.arch} n={self.config.n} b={self.config.bitwidth}"]
        lines.append(f"{'layer':<14}{'shapes':<34}{'params':>8}{'macs':>10}")
        for name, shape, np_, macs in rows:
            lines.append(f"{name:<14}{shape:<34}{np_:>8}{macs:>10}")
        lines.append(f"{'total':<48}{sum(r[2] for r in rows):>8}"
                     f"{sum(r[3] for r in rows):>10}")
        if self.quantized is not None:
            lines.append("quantized twin: attached")
        return "\n".join(lines)

    # -- serialization ------------------------------------------------------

    def to_json(self):
        doc = {
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "params": {k: v.data.tolist() for k, v in self.params.items()},
            "bn_stats": {k: {"mean": v["mean"].tolist(), "var": v["var"].tolist()}
                         for k, v in self.bn_stats.items()},
        }
        if self.quantized is not None:
            doc["quantized"] = self.quantized.to_dict()
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        from .quantized import QuantizedModel
        doc = json.loads(text)
        if doc.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model format version {doc.get('version')!r}")
        cfg = ModelConfig(**doc["config"])
        model = build(cfg, seed=0)
        for k, v in doc["params"].items():
            model.params[k] = Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
        for k, v in doc["bn_stats"].items():
            model.bn_stats[k] = {"mean": np.asarray(v["mean"], dtype=np.float64),
                                 "var": np.asarray(v["var"], dtype=np.float64)}
        if "quantized" in doc:
            model.quantized = QuantizedModel.from_dict(doc["quantized"])
        return model

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())


def forward(model, x, mode="float"):
    """Module-level convenience wrapper around Model.forward."""
    return model.forward(x, mode)
