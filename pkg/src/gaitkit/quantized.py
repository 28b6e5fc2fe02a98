"""Integer-only inference twin.

`freeze_model` folds batch norm into the preceding weights, runs a
calibration pass over sample windows to fix every activation scale, and
wires one requantization site per accumulator. Each site owns the exact
fixed-point constants used by both the integer path and its float
("fake-quant") twin, so the two paths round identically and agree
bit-for-bit on conv / dense / pooling / LSTM layers. Attention softmax
uses a LUT approximation, so the transformer only promises argmax-level
agreement between the paths.
"""

import math

import numpy as np

from . import _kernels as K
from . import quant as Q
from .errors import ConfigError, QuantError
from .quant import (
    ChannelAffineSite, QuantParams, RangeObserver, RequantSite,
    fold_batchnorm, int_conv1d, int_dense, int_depthwise_conv1d,
    int_global_sum, int_maxpool1d, int_relu, int_softmax,
    quantize, round_away, weight_qparams,
)

WIDE = 1 << 30          # clamp bound for intermediate, pre-saturation sites
SCORE_QMAX = 2047       # widened integer domain for attention scores
SOFTMAX_ONE = 1 << 16   # softmax weights are Q16.16


def _qbias(b, unit):
    qb = round_away(np.asarray(b, dtype=np.float64) / unit).astype(np.int64)
    if np.any(np.abs(qb) > Q.INT32_MAX):
        raise QuantError("quantized bias exceeds the 32-bit accumulator range")
    return qb


class QLinear:
    """A weighted layer (dense / conv / depthwise) plus its requant site."""

    __slots__ = ("kind", "qw", "qb", "w_scale", "site", "relu", "pool")

    def __init__(self, kind, w, bias, in_scale, bitwidth, site_out, qmin, qmax,
                 relu=False, pool=False):
        wqp = weight_qparams(w, bitwidth)
        self.kind = kind
        self.qw = quantize(w, wqp)
        self.w_scale = wqp.scale
        unit = wqp.scale * in_scale
        self.qb = _qbias(bias, unit)
        self.site = RequantSite.linear(unit, site_out, qmin, qmax)
        self.relu = bool(relu)
        self.pool = bool(pool)

    @property
    def out_scale(self):
        return self.site.out_scale

    def int_apply(self, q):
        if self.kind == "conv":
            acc = int_conv1d(q, self.qw, self.qb)
        elif self.kind == "dw":
            acc = int_depthwise_conv1d(q, self.qw, self.qb)
        else:
            acc = int_dense(q, self.qw, self.qb)
        out = self.site.apply_int(acc)
        if self.relu:
            out = int_relu(out)
        if self.pool:
            out = int_maxpool1d(out)
        return out

    def fq_apply(self, v):
        """Value-domain float twin; returns the quantized code as floats."""
        w_eff = self.qw * self.w_scale
        b_eff = self.qb * self.site.unit
        if self.kind == "conv":
            a = K.conv1d_fwd(v, w_eff) + b_eff[None, :, None]
        elif self.kind == "dw":
            a = K.depthwise_fwd(v, w_eff) + b_eff[None, :, None]
        else:
            a = v @ w_eff.T + b_eff
        out = self.site.apply_float(a)
        if self.relu:
            out = np.maximum(out, 0.0)
        if self.pool:
            out = int_maxpool1d(out)
        return out

    def to_dict(self):
        return {"type": "qlinear", "kind": self.kind, "qw": self.qw.tolist(),
                "qb": self.qb.tolist(), "w_scale": self.w_scale,
                "site": self.site.to_dict(), "relu": self.relu, "pool": self.pool}

    @classmethod
    def from_dict(cls, d):
        obj = cls.__new__(cls)
        obj.kind = d["kind"]
        obj.qw = np.asarray(d["qw"], dtype=np.int64)
        obj.qb = np.asarray(d["qb"], dtype=np.int64)
        obj.w_scale = float(d["w_scale"])
        obj.site = RequantSite.from_dict(d["site"])
        obj.relu = bool(d["relu"])
        obj.pool = bool(d["pool"])
        return obj


def _encode(obj):
    if isinstance(obj, QLinear):
        return obj.to_dict()
    if isinstance(obj, RequantSite):
        return {"type": "site", **obj.to_dict()}
    if isinstance(obj, ChannelAffineSite):
        return {"type": "chaffine", **obj.to_dict()}
    if isinstance(obj, np.ndarray):
        return {"type": "array", "data": obj.tolist()}
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _decode(d):
    t = d["type"]
    if t == "qlinear":
        return QLinear.from_dict(d)
    if t == "site":
        return RequantSite.from_dict(d)
    if t == "chaffine":
        return ChannelAffineSite.from_dict(d)
    if t == "array":
        return np.asarray(d["data"], dtype=np.int64)
    raise ValueError(f"unknown encoded layer type {t!r}")


class QuantizedModel:
    """Frozen integer weights plus the site graph for both eval paths."""

    def __init__(self, arch, bitwidth, input_qp, logits_qp, objs, meta):
        self.arch = arch
        self.bitwidth = bitwidth
        self.input_qp = input_qp
        self.logits_qp = logits_qp
        self.objs = objs
        self.meta = meta

    def _qrange(self):
        return Q.quant_range(self.bitwidth)

    def forward_int(self, x):
        """Integer logits (codes at logits_qp.scale) for (B, c_in, n) input."""
        q = quantize(x, self.input_qp)
        if self.arch in ("cnn1d", "sepcnn1d"):
            return self._cnn_int(q)
        if self.arch == "lstm":
            return self._lstm_int(q)
        return self._transformer_int(q)

    def forward_fq(self, x):
        """Float twin of forward_int; returns integer-valued logit codes."""
        q = quantize(x, self.input_qp)
        v = q * self.input_qp.scale
        if self.arch in ("cnn1d", "sepcnn1d"):
            return self._cnn_fq(v)
        if self.arch == "lstm":
            return self._lstm_fq(v)
        return self._transformer_fq(v)

    # -- CNN / SepCNN -------------------------------------------------------

    def _cnn_int(self, q):
        o = self.objs
        for name in self.meta["stage_names"]:
            q = o[name].int_apply(q)
        qg = o["gap"].apply_int(int_global_sum(q))
        qh = o["hidden"].int_apply(qg)
        return o["head"].int_apply(qh)

    def _cnn_fq(self, v):
        o = self.objs
        for name in self.meta["stage_names"]:
            qf = o[name].fq_apply(v)
            v = qf * o[name].out_scale
        qg = o["gap"].apply_float(v.mean(axis=-1))
        qh = o["hidden"].fq_apply(qg * o["gap"].out_scale)
        return o["head"].fq_apply(qh * o["hidden"].out_scale)

    # -- LSTM ---------------------------------------------------------------

    def _lstm_int(self, q):
        o, m = self.objs, self.meta
        H = m["h_size"]
        qmin, qmax = self._qrange()
        B = q.shape[0]
        qh = np.zeros((B, H), dtype=np.int64)
        qc = np.zeros((B, H), dtype=np.int64)
        for t in range(m["n"]):
            acc = q[:, :, t] @ o["qw_ih"].T + o["qb"]
            s = acc + o["align"].apply_int(qh @ o["qw_hh"].T)
            qi = o["hs"].apply_int(s[:, :H])
            qf = o["hs"].apply_int(s[:, H:2 * H])
            qg = o["ht"].apply_int(s[:, 2 * H:3 * H])
            qo = o["hs"].apply_int(s[:, 3 * H:])
            t1 = o["t1"].apply_int(qf * qc)
            t2 = o["t2"].apply_int(qi * qg)
            qc = np.clip(t1 + t2, qmin, qmax)
            qt = o["tanh"].apply_int(qc)
            qh = o["hsite"].apply_int(qo * qt)
        return o["head"].int_apply(qh)

    def _lstm_fq(self, v):
        o, m = self.objs, self.meta
        H = m["h_size"]
        qmin, qmax = self._qrange()
        s_g, s_c, s_h, u1 = m["s_g"], m["s_c"], m["s_h"], m["u1"]
        w_ih = o["qw_ih"] * m["s_wih"]
        w_hh = o["qw_hh"] * m["s_whh"]
        b_eff = o["qb"] * u1
        B = v.shape[0]
        vh = np.zeros((B, H))
        qc = np.zeros((B, H))
        for t in range(m["n"]):
            s = v[:, :, t] @ w_ih.T + b_eff + o["align"].apply_float(vh @ w_hh.T) * u1
            qi = o["hs"].apply_float(s[:, :H])
            qf = o["hs"].apply_float(s[:, H:2 * H])
            qg = o["ht"].apply_float(s[:, 2 * H:3 * H])
            qo = o["hs"].apply_float(s[:, 3 * H:])
            t1 = o["t1"].apply_float((qf * s_g) * (qc * s_c))
            t2 = o["t2"].apply_float((qi * s_g) * (qg * s_g))
            qc = np.clip(t1 + t2, qmin, qmax)
            qt = o["tanh"].apply_float(qc * s_c)
            qh = o["hsite"].apply_float((qo * s_g) * (qt * s_g))
            vh = qh * s_h
        return o["head"].fq_apply(vh)

    # -- Transformer --------------------------------------------------------

    def _transformer_int(self, q):
        o, m = self.objs, self.meta
        qmin, qmax = self._qrange()
        qt = np.swapaxes(q, 1, 2)
        q1 = np.clip(o["proj"].int_apply(qt) + o["q_pe"][None], qmin, qmax)
        qq = o["wq"].int_apply(q1)
        qk = o["wk"].int_apply(q1)
        qv = o["wv"].int_apply(q1)
        q_sc = o["score"].apply_int(qq @ np.swapaxes(qk, -1, -2))
        w16 = int_softmax(q_sc, m["s_sc"], axis=-1)
        qctx = o["ctx_site"].apply_int(w16 @ qv)
        qr1 = np.clip(o["wo"].int_apply(qctx) + o["align1"].apply_int(q1), qmin, qmax)
        qb1 = o["bn1"].apply_int(qr1)
        qf1 = o["ffn1"].int_apply(qb1)
        qr2 = np.clip(o["ffn2"].int_apply(qf1) + o["align2"].apply_int(qb1), qmin, qmax)
        qb2 = o["bn2"].apply_int(qr2)
        qpool = o["pool"].apply_int(qb2.sum(axis=1))
        return o["head"].int_apply(qpool)

    def _transformer_fq(self, v):
        o, m = self.objs, self.meta
        qmin, qmax = self._qrange()
        vt = np.swapaxes(v, 1, 2)
        q1 = np.clip(o["proj"].fq_apply(vt) + o["q_pe"], qmin, qmax)
        v1 = q1 * m["s1"]
        vq = o["wq"].fq_apply(v1) * m["s_q"]
        vk = o["wk"].fq_apply(v1) * m["s_k"]
        qvf = o["wv"].fq_apply(v1)
        q_sc = o["score"].apply_float(vq @ np.swapaxes(vk, -1, -2))
        # the score codes are exact integers here, so the integer softmax
        # applies verbatim and both paths share one attention-weight table
        w16 = int_softmax(q_sc.astype(np.int64), m["s_sc"], axis=-1)
        qctx = o["ctx_site"].apply_float((w16 / SOFTMAX_ONE) @ (qvf * m["s_v"]))
        qof = o["wo"].fq_apply(qctx * m["s_ctx"])
        qr1 = np.clip(qof + o["align1"].apply_float(v1), qmin, qmax)
        qb1 = o["bn1"].apply_float(qr1 * m["s_r1"])
        qf1 = o["ffn1"].fq_apply(qb1 * m["s_bn1"])
        qf2 = o["ffn2"].fq_apply(qf1 * m["s_f1"])
        qr2 = np.clip(qf2 + o["align2"].apply_float(qb1 * m["s_bn1"]), qmin, qmax)
        qb2 = o["bn2"].apply_float(qr2 * m["s_r2"])
        qpool = o["pool"].apply_float((qb2 * m["s_bn2"]).mean(axis=1))
        return o["head"].fq_apply(qpool * m["s_pool"])

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "arch": self.arch,
            "bitwidth": self.bitwidth,
            "input_qp": {"bitwidth": self.input_qp.bitwidth, "scale": self.input_qp.scale},
            "logits_qp": {"bitwidth": self.logits_qp.bitwidth, "scale": self.logits_qp.scale},
            "meta": self.meta,
            "objs": {k: _encode(v) for k, v in self.objs.items()},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["arch"], int(d["bitwidth"]),
            QuantParams(**d["input_qp"]), QuantParams(**d["logits_qp"]),
            {k: _decode(v) for k, v in d["objs"].items()},
            d["meta"],
        )


# ---------------------------------------------------------------------------
# freezing


def freeze_model(model, calib):
    if calib.ndim == 2:
        calib = calib[None]
    if calib.ndim != 3 or calib.shape[0] == 0:
        raise ConfigError("calibration input must be a non-empty (batch, c_in, n) array")
    cfg = model.config
    if calib.shape[1:] != (cfg.c_in, cfg.n):
        raise ConfigError(
            f"calibration shape {calib.shape[1:]} != (c_in={cfg.c_in}, n={cfg.n})")
    if cfg.arch in ("cnn1d", "sepcnn1d"):
        return _freeze_cnn(model, calib)
    if cfg.arch == "lstm":
        return _freeze_lstm(model, calib)
    return _freeze_transformer(model, calib)


class _Obs(dict):
    def see(self, name, x):
        self.setdefault(name, RangeObserver()).update(x)

    def scale(self, name, bitwidth):
        return self[name].qparams(bitwidth).scale


def _param(model, name):
    return model.params[name].data


def _folded_cnn_stages(model):
    """Per-block float (kind, w, b) triples with eval BN absorbed."""
    cfg = model.config
    stages = []
    for i in range(cfg.num_blocks):
        st = model.bn_stats[f"block{i}.bn"]
        gamma = _param(model, f"block{i}.bn.gamma")
        beta = _param(model, f"block{i}.bn.beta")
        pool = i < cfg.num_blocks - 1
        if cfg.arch == "cnn1d":
            w, b = fold_batchnorm(_param(model, f"block{i}.conv.w"),
                                  _param(model, f"block{i}.conv.b"),
                                  gamma, beta, st["mean"], st["var"])
            stages.append([("conv", w, b, True, pool)])
        else:
            w, b = fold_batchnorm(_param(model, f"block{i}.pw.w"),
                                  _param(model, f"block{i}.pw.b"),
                                  gamma, beta, st["mean"], st["var"])
            stages.append([
                ("dw", _param(model, f"block{i}.dw.w"),
                 _param(model, f"block{i}.dw.b"), False, False),
                ("conv", w, b, True, pool),
            ])
    return stages


def _freeze_cnn(model, calib):
    cfg = model.config
    b = cfg.bitwidth
    qmin, qmax = Q.quant_range(b)
    blocks = _folded_cnn_stages(model)
    w_hid, b_hid = _param(model, "head1.w"), _param(model, "head1.b")
    w_head, b_head = _param(model, "head2.w"), _param(model, "head2.b")

    obs = _Obs()
    v = calib
    obs.see("input", v)
    for i, block in enumerate(blocks):
        for j, (kind, w, bias, do_relu, pool) in enumerate(block):
            if kind == "dw":
                v = K.depthwise_fwd(v, w) + bias[None, :, None]
            else:
                v = K.conv1d_fwd(v, w) + bias[None, :, None]
            obs.see(f"block{i}.{j}", v)
            if do_relu:
                v = np.maximum(v, 0.0)
            if pool:
                v = int_maxpool1d(v)
    v = v.mean(axis=-1)
    obs.see("gap", v)
    v = v @ w_hid.T + b_hid
    obs.see("hidden", v)
    v = np.maximum(v, 0.0)
    logits = v @ w_head.T + b_head
    obs.see("logits", logits)

    input_qp = QuantParams(b, obs.scale("input", b))
    prev = input_qp.scale
    objs = {}
    names = []
    for i, block in enumerate(blocks):
        for j, (kind, w, bias, do_relu, pool) in enumerate(block):
            s_out = obs.scale(f"block{i}.{j}", b)
            name = f"stage{i}.{j}"
            objs[name] = QLinear(kind, w, bias, prev, b, s_out, qmin, qmax,
                                 relu=do_relu, pool=pool)
            names.append(name)
            prev = s_out
    L_final = cfg.n >> (cfg.num_blocks - 1)
    gap = RequantSite.linear(prev / L_final, obs.scale("gap", b), qmin, qmax)
    objs["gap"] = gap
    objs["hidden"] = QLinear("dense", w_hid, b_hid, gap.out_scale, b,
                             obs.scale("hidden", b), qmin, qmax, relu=True)
    objs["head"] = QLinear("dense", w_head, b_head, objs["hidden"].out_scale, b,
                           obs.scale("logits", b), qmin, qmax)
    logits_qp = QuantParams(b, objs["head"].out_scale)
    meta = {"n": cfg.n, "stage_names": names}
    return QuantizedModel(cfg.arch, b, input_qp, logits_qp, objs, meta)


def _freeze_lstm(model, calib):
    cfg = model.config
    b = cfg.bitwidth
    qmin, qmax = Q.quant_range(b)
    H = cfg.h_size
    w_ih, w_hh = _param(model, "lstm.w_ih"), _param(model, "lstm.w_hh")
    bias = _param(model, "lstm.b")
    w_head, b_head = _param(model, "head.w"), _param(model, "head.b")

    obs = _Obs()
    obs.see("input", calib)
    B = calib.shape[0]
    vh = np.zeros((B, H))
    vc = np.zeros((B, H))
    for t in range(cfg.n):
        pre = calib[:, :, t] @ w_ih.T + vh @ w_hh.T + bias
        i = np.clip(0.25 * pre[:, :H] + 0.5, 0, 1)
        f = np.clip(0.25 * pre[:, H:2 * H] + 0.5, 0, 1)
        g = np.clip(pre[:, 2 * H:3 * H], -1, 1)
        o = np.clip(0.25 * pre[:, 3 * H:] + 0.5, 0, 1)
        vc = f * vc + i * g
        vh = o * np.clip(vc, -1, 1)
        obs.see("c", vc)
        obs.see("h", vh)
    logits = vh @ w_head.T + b_head
    obs.see("logits", logits)

    input_qp = QuantParams(b, obs.scale("input", b))
    s_x = input_qp.scale
    ih_qp = weight_qparams(w_ih, b)
    hh_qp = weight_qparams(w_hh, b)
    u1 = ih_qp.scale * s_x
    s_g = 1.0 / qmax
    s_c = Q.pow2_scale(obs["c"].range, qmax)
    s_h = Q.pow2_scale(obs["h"].range, qmax)

    objs = {
        "qw_ih": quantize(w_ih, ih_qp),
        "qw_hh": quantize(w_hh, hh_qp),
        "qb": _qbias(bias, u1),
        # recurrent contribution aligned onto the input-branch unit
        "align": RequantSite(hh_qp.scale * s_h, hh_qp.scale * s_h / u1, u1,
                             -WIDE, WIDE),
        # hard sigmoid: q = clamp(round(pre * qmax/4 + qmax/2), 0, qmax)
        "hs": RequantSite(u1, u1 * (qmax / 4.0), s_g, 0, qmax, offset=0.5 * qmax),
        # hard tanh: q = clamp(round(pre * qmax), -qmax, qmax)
        "ht": RequantSite(u1, u1 * qmax, s_g, -qmax, qmax),
        "t1": RequantSite(s_g * s_c, s_g, s_c, -WIDE, WIDE),
        "t2": RequantSite(s_g * s_g, s_g * s_g / s_c, s_c, -WIDE, WIDE),
        "tanh": RequantSite(s_c, s_c * qmax, s_g, -qmax, qmax),
        "hsite": RequantSite(s_g * s_g, s_g * s_g / s_h, s_h, qmin, qmax),
        "head": QLinear("dense", w_head, b_head, s_h, b,
                        obs.scale("logits", b), qmin, qmax),
    }
    logits_qp = QuantParams(b, objs["head"].out_scale)
    meta = {"n": cfg.n, "h_size": H, "s_wih": ih_qp.scale, "s_whh": hh_qp.scale,
            "u1": u1, "s_g": s_g, "s_c": s_c, "s_h": s_h}
    return QuantizedModel(cfg.arch, b, input_qp, logits_qp, objs, meta)


def _freeze_transformer(model, calib):
    cfg = model.config
    b = cfg.bitwidth
    qmin, qmax = Q.quant_range(b)
    d = cfg.d_model
    p = {k: v.data for k, v in model.params.items()}
    eps = 1e-5
    a1, c1 = _bn_affine(model, "bn1", eps)
    a2, c2 = _bn_affine(model, "bn2", eps)

    obs = _Obs()
    obs.see("input", calib)
    vt = np.swapaxes(calib, 1, 2)
    v1 = vt @ p["proj.w"].T + p["proj.b"] + model.pe
    obs.see("proj", v1)
    vq = v1 @ p["attn.wq"].T + p["attn.qb"]
    vk = v1 @ p["attn.wk"].T + p["attn.kb"]
    vv = v1 @ p["attn.wv"].T + p["attn.vb"]
    obs.see("q", vq)
    obs.see("k", vk)
    obs.see("v", vv)
    sc = (vq @ np.swapaxes(vk, -1, -2)) / math.sqrt(d)
    obs.see("scores", sc)
    e = np.exp(sc - sc.max(axis=-1, keepdims=True))
    ctx = (e / e.sum(axis=-1, keepdims=True)) @ vv
    obs.see("ctx", ctx)
    r1 = v1 + ctx @ p["attn.wo"].T + p["attn.ob"]
    obs.see("res1", r1)
    b1 = r1 * a1 + c1
    obs.see("bn1", b1)
    f1 = b1 @ p["ffn1.w"].T + p["ffn1.b"]
    obs.see("ffn1", f1)
    r2 = b1 + np.maximum(f1, 0.0) @ p["ffn2.w"].T + p["ffn2.b"]
    obs.see("res2", r2)
    b2 = r2 * a2 + c2
    obs.see("bn2", b2)
    pool = b2.mean(axis=1)
    obs.see("pool", pool)
    logits = pool @ p["head.w"].T + p["head.b"]
    obs.see("logits", logits)

    input_qp = QuantParams(b, obs.scale("input", b))
    s1 = obs.scale("proj", b)
    s_q, s_k, s_v = (obs.scale(n, b) for n in ("q", "k", "v"))
    sc_range = obs["scores"].range
    # zero score range (degenerate calibration): pick the scale that makes
    # the score rescale ratio exactly 1 instead of an unrepresentable one
    s_sc = sc_range / SCORE_QMAX if sc_range > 0 else s_q * s_k / math.sqrt(d)
    s_ctx = obs.scale("ctx", b)
    s_r1, s_bn1 = obs.scale("res1", b), obs.scale("bn1", b)
    s_f1, s_r2 = obs.scale("ffn1", b), obs.scale("res2", b)
    s_bn2, s_pool = obs.scale("bn2", b), obs.scale("pool", b)

    objs = {
        "proj": QLinear("dense", p["proj.w"], p["proj.b"], input_qp.scale, b,
                        s1, qmin, qmax),
        "q_pe": quantize(model.pe, QuantParams(b, s1)),
        "wq": QLinear("dense", p["attn.wq"], p["attn.qb"], s1, b, s_q, qmin, qmax),
        "wk": QLinear("dense", p["attn.wk"], p["attn.kb"], s1, b, s_k, qmin, qmax),
        "wv": QLinear("dense", p["attn.wv"], p["attn.vb"], s1, b, s_v, qmin, qmax),
        # 1/sqrt(d) is folded into the score rescale
        "score": RequantSite(s_q * s_k, s_q * s_k / (math.sqrt(d) * s_sc), s_sc,
                             -SCORE_QMAX, SCORE_QMAX),
        "ctx_site": RequantSite.linear(s_v / SOFTMAX_ONE, s_ctx, qmin, qmax),
        "wo": QLinear("dense", p["attn.wo"], p["attn.ob"], s_ctx, b, s_r1, qmin, qmax),
        "align1": RequantSite.linear(s1, s_r1, qmin, qmax),
        "bn1": ChannelAffineSite(s_r1, a1, c1, s_bn1, qmin, qmax),
        "ffn1": QLinear("dense", p["ffn1.w"], p["ffn1.b"], s_bn1, b, s_f1,
                        qmin, qmax, relu=True),
        "ffn2": QLinear("dense", p["ffn2.w"], p["ffn2.b"], s_f1, b, s_r2, qmin, qmax),
        "align2": RequantSite.linear(s_bn1, s_r2, qmin, qmax),
        "bn2": ChannelAffineSite(s_r2, a2, c2, s_bn2, qmin, qmax),
        "pool": RequantSite.linear(s_bn2 / cfg.n, s_pool, qmin, qmax),
        "head": QLinear("dense", p["head.w"], p["head.b"], s_pool, b,
                        obs.scale("logits", b), qmin, qmax),
    }
    logits_qp = QuantParams(b, objs["head"].out_scale)
    meta = {"n": cfg.n, "d": d, "s1": s1, "s_q": s_q, "s_k": s_k, "s_v": s_v,
            "s_sc": s_sc, "s_ctx": s_ctx, "s_r1": s_r1, "s_bn1": s_bn1,
            "s_f1": s_f1, "s_r2": s_r2, "s_bn2": s_bn2, "s_pool": s_pool}
    return QuantizedModel(cfg.arch, b, input_qp, logits_qp, objs, meta)


def _bn_affine(model, name, eps):
    st = model.bn_stats[name]
    gamma = _param(model, f"{name}.gamma")
    beta = _param(model, f"{name}.beta")
    denom = st["var"] + eps
    if np.any(denom <= 0):
        raise QuantError("non-positive variance in batch-norm freezing")
    a = gamma / np.sqrt(denom)
    return a, beta - st["mean"] * a
