"""Desk-scale quantization-aware training on a synthetic teacher-student task.

The network is deliberately small: linear layers with ReLU between them, one
l1-budgeted weight quantizer per output unit, and per-tensor activation
quantizers whose scales are learned in the log domain.  Everything runs on
numpy with manual backprop, single threaded, so a run is a pure function of
its config: data, init, and batch order all derive from the seed.

Layer policy: the first and last layers quantize weights and incoming
activations at 8 bits; interior layers use the configured (M, N).  Every
layer shares the accumulator width P.  Inputs are folded Gaussian (absolute
values, so non-negative like post-ReLU tensors) and hidden activations are
ReLU outputs, so every activation tensor is quantized unsigned; no signed
activation path exists in the toy net.  Biases stay in float: they are added
after the integer dot product, outside the P-bit accumulation loop, so they
never touch the overflow analysis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bounds import BitWidths, a2q_limit, a2q_plus_limit, int_range
from .epinit import ZERO_EXPONENT, init_scale, project_l1_ball
from .errors import AccumulatorOverflowError, DivergenceError
from .intsim import (
    AccumulatorSpec,
    check_accumulator,
    enumeration_budget,
    exhaustive_check,
)
from .quantizers import (
    K_MIN_CENTER,
    LN2,
    ActQuantSpec,
    ChannelWeights,
    QuantResult,
    Variant,
    forward_weights,
)

CSV_HEADER = "variant,M,N,P,seed,final_loss,sparsity,min_slack"


@dataclass(frozen=True)
class TeacherStudentSpec:
    """Synthetic regression task: a random ReLU teacher plus label noise."""

    input_dim: int = 16
    hidden: tuple[int, ...] = (16, 16)
    output_dim: int = 4
    noise_sigma: float = 0.4
    n_train: int = 2048
    n_test: int = 512

    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run needs; two equal configs give byte-identical results."""

    variant: Variant
    bits: BitWidths
    lr: float = 0.1
    weight_decay: float = 1e-4
    lambda_reg: float = 1e-3
    epochs: int = 40
    batch_size: int = 256
    seed: int = 0
    dataset: TeacherStudentSpec = field(default_factory=TeacherStudentSpec)
    edge_bits: int = 8

    def __post_init__(self) -> None:
        if self.variant is Variant.STANDARD:
            raise ValueError("trainer only runs budgeted variants; use float_baseline for the unconstrained reference")
        if self.bits.act_signed:
            raise ValueError("hidden activations are unsigned after ReLU; bits.act_signed must be False")


@dataclass(frozen=True)
class SweepRecord:
    """One sweep point.  The CSV form is stable and byte-reproducible."""

    variant: str
    M: int
    N: int
    P: int
    seed: int
    final_loss: float
    sparsity: float
    min_slack: Fraction

    def sort_key(self) -> tuple:
        return (self.variant, self.M, self.N, self.P, self.seed)

    def csv_row(self) -> str:
        # repr() round-trips floats exactly; Fraction prints as n/d (or n)
        return (
            f"{self.variant},{self.M},{self.N},{self.P},{self.seed},"
            f"{self.final_loss!r},{self.sparsity!r},{self.min_slack}"
        )

    @classmethod
    def from_csv_row(cls, line: str) -> "SweepRecord":
        parts = line.strip().split(",")
        if len(parts) != 8:
            raise ValueError(f"expected 8 CSV fields, got {len(parts)}: {line!r}")
        return cls(
            variant=parts[0],
            M=int(parts[1]),
            N=int(parts[2]),
            P=int(parts[3]),
            seed=int(parts[4]),
            final_loss=float(parts[5]),
            sparsity=float(parts[6]),
            min_slack=Fraction(parts[7]),
        )


@dataclass
class QuantLinear:
    """One linear layer: per-output-unit channels plus its input quantizer.

    The float bias vector rides along unquantized; it lands after the
    accumulator, so channel overflow audits ignore it.
    """

    channels: list[ChannelWeights]
    bits: BitWidths
    bias: np.ndarray = None  # type: ignore[assignment]
    act_exp: float = 0.0

    def __post_init__(self) -> None:
        if self.bias is None:
            self.bias = np.zeros(len(self.channels))

    @property
    def act_spec(self) -> ActQuantSpec:
        return ActQuantSpec(bits=self.bits.N, signed=self.bits.act_signed, scale=2.0 ** self.act_exp)


@dataclass
class ToyNetwork:
    layers: list[QuantLinear]
    variant: Variant

    @property
    def topology(self) -> tuple[int, ...]:
        dims = [self.layers[0].channels[0].K]
        for layer in self.layers:
            dims.append(len(layer.channels))
        return tuple(dims)


@dataclass(frozen=True)
class DataBundle:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    init_weights: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class FloatRun:
    final_loss: float
    weights: tuple[np.ndarray, ...]


def _layer_bits(config: TrainConfig) -> list[BitWidths]:
    dims = config.dataset.dims()
    n_layers = len(dims) - 1
    plans = []
    for i in range(n_layers):
        edge = i == 0 or i == n_layers - 1
        M = config.edge_bits if edge else config.bits.M
        N = config.edge_bits if edge else config.bits.N
        plans.append(BitWidths(M=M, N=N, P=config.bits.P, act_signed=False))
    return plans


def make_data(config: TrainConfig) -> DataBundle:
    """Draw the task and the student's float init, fully determined by the seed.

    Inputs are folded to their absolute value so the whole network runs on
    unsigned activation quantizers end to end.
    """
    ds = config.dataset
    dims = ds.dims()
    rng = np.random.default_rng(config.seed)
    teacher = [
        rng.normal(size=(dims[i + 1], dims[i])) * math.sqrt(2.0 / dims[i])
        for i in range(len(dims) - 1)
    ]

    def run_teacher(x: np.ndarray) -> np.ndarray:
        h = x
        for i, W in enumerate(teacher):
            h = h @ W.T
            if i < len(teacher) - 1:
                h = np.maximum(h, 0.0)
        return h

    X_train = np.abs(rng.normal(size=(ds.n_train, ds.input_dim)))
    X_test = np.abs(rng.normal(size=(ds.n_test, ds.input_dim)))
    y_train = run_teacher(X_train) + ds.noise_sigma * rng.normal(size=(ds.n_train, ds.output_dim))
    y_test = run_teacher(X_test) + ds.noise_sigma * rng.normal(size=(ds.n_test, ds.output_dim))
    init = tuple(
        rng.normal(size=(dims[i + 1], dims[i])) * math.sqrt(2.0 / dims[i])
        for i in range(len(dims) - 1)
    )
    return DataBundle(X_train, y_train, X_test, y_test, init)


def _init_channel(w: np.ndarray, bits: BitWidths, variant: Variant) -> ChannelWeights:
    """Budget-aware Euclidean-projection init for one output unit.

    The plain coverage scale max|w| / (2^{M-1} - 1) works when the l1 budget
    is loose, but at tight accumulator widths it prices the budget at a few
    integer units spread over the whole fan-in: projection then collapses the
    channel to a near one-hot spike and the norm/scale gradients (both carry
    a factor of g or s) are too small to ever escape.  Floor the scale at
    mass / limit so such channels start saturating their own integer budget
    instead.
    """
    limit = _budget_limit(w.size, bits, variant)
    s = init_scale(w, bits.M)
    mass = float(np.abs(w).sum())
    if mass > 0.0:
        s = max(s, mass / float(limit))
    proj = project_l1_ball(w, s * float(limit))
    n1 = float(np.abs(proj.v_star).sum())
    t = math.log2(n1) if n1 > 0.0 else ZERO_EXPONENT
    return ChannelWeights(v=proj.v_star, t=t, d=math.log2(s))


def build_network(config: TrainConfig, init_weights) -> ToyNetwork:
    """Project a float init onto each channel's budget ball and wrap it up."""
    layers = []
    for W, bw in zip(init_weights, _layer_bits(config)):
        W = np.asarray(W, dtype=float)
        chans = [_init_channel(W[i], bw, config.variant) for i in range(W.shape[0])]
        layers.append(QuantLinear(channels=chans, bits=bw))
    return ToyNetwork(layers=layers, variant=config.variant)


def _tape_weights(tape) -> np.ndarray:
    if tape.degenerate:
        return np.zeros(tape.K)
    if tape.variant is Variant.STANDARD:
        return tape.pre * tape.s
    return tape.u * tape.G


def calibrate(net: ToyNetwork, X: np.ndarray) -> None:
    """Set each activation scale so the observed peak lands on the top code.

    Runs the smooth weights with no activation quantization; training then
    moves the exponents by gradient from this starting point.
    """
    h = np.asarray(X, dtype=float)
    for i, layer in enumerate(net.layers):
        _, hi = int_range(layer.bits.N, layer.bits.act_signed)
        top = float(np.max(np.abs(h))) if h.size else 0.0
        layer.act_exp = math.log2(top / hi) if top > 0.0 else ZERO_EXPONENT
        W = np.stack(
            [_tape_weights(forward_weights(ch, layer.bits, net.variant)[1]) for ch in layer.channels]
        )
        h = h @ W.T + layer.bias
        if i < len(net.layers) - 1:
            h = np.maximum(h, 0.0)


@dataclass
class _ActTape:
    mask: np.ndarray
    codes: np.ndarray
    pre: np.ndarray
    s: float


def _act_forward(x: np.ndarray, layer: QuantLinear) -> tuple[np.ndarray, _ActTape]:
    s = 2.0 ** layer.act_exp
    lo, hi = int_range(layer.bits.N, layer.bits.act_signed)
    pre = x / s
    raw = np.rint(pre)
    mask = (raw >= lo) & (raw <= hi)
    codes = np.clip(raw, lo, hi)
    return s * codes, _ActTape(mask=mask, codes=codes, pre=pre, s=s)


def _act_backward(d_xq: np.ndarray, tape: _ActTape) -> tuple[np.ndarray, float]:
    # straight-through inside the clip window; the scale sees the rounding
    # residual in range and the saturated code outside
    dx = d_xq * tape.mask
    d_s = float(np.sum(d_xq * np.where(tape.mask, tape.codes - tape.pre, tape.codes)))
    return dx, d_s * tape.s * LN2


@dataclass
class _LayerStore:
    xq: np.ndarray
    act_tape: _ActTape | None
    W: np.ndarray
    results: list[QuantResult] | None
    tapes: list
    y: np.ndarray


@dataclass
class LayerGrads:
    dv: list[np.ndarray]
    dt: np.ndarray
    dd: np.ndarray
    db: np.ndarray
    da: float


def forward(net: ToyNetwork, X, quantize: bool = True) -> tuple[np.ndarray, list[_LayerStore]]:
    """Run the network, returning predictions and per-layer tapes.

    quantize=False is the smooth surrogate (pre-round weights, raw
    activations): the reference path for finite-difference checks.
    """
    h = np.asarray(X, dtype=float)
    stores: list[_LayerStore] = []
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        if quantize:
            xq, act_tape = _act_forward(h, layer)
        else:
            xq, act_tape = h, None
        pairs = [forward_weights(ch, layer.bits, net.variant) for ch in layer.channels]
        tapes = [tape for _, tape in pairs]
        if quantize:
            results = [res for res, _ in pairs]
            W = np.stack([res.qw for res in results])
        else:
            results = None
            W = np.stack([_tape_weights(t) for t in tapes])
        y = xq @ W.T + layer.bias
        stores.append(_LayerStore(xq=xq, act_tape=act_tape, W=W, results=results, tapes=tapes, y=y))
        h = y if i == last else np.maximum(y, 0.0)
    return h, stores


def backward(
    net: ToyNetwork, stores: list[_LayerStore], d_pred, quantize: bool = True
) -> list[LayerGrads]:
    """Manual backprop matching forward(); returns per-layer parameter grads."""
    n = len(net.layers)
    grads: list[LayerGrads | None] = [None] * n
    d_h = np.asarray(d_pred, dtype=float)
    for i in reversed(range(n)):
        st = stores[i]
        d_y = d_h if i == n - 1 else d_h * (st.y > 0.0)
        dW = d_y.T @ st.xq
        d_xq = d_y @ st.W
        dv, dt, dd = [], [], []
        for j, tape in enumerate(st.tapes):
            gj = tape.backward(dW[j]) if quantize else tape.backward_smooth(dW[j])
            dv.append(gj[0])
            dt.append(gj[1])
            dd.append(gj[2])
        if quantize:
            d_h, da = _act_backward(d_xq, st.act_tape)
        else:
            d_h, da = d_xq, 0.0
        grads[i] = LayerGrads(dv=dv, dt=np.array(dt), dd=np.array(dd), db=d_y.sum(axis=0), da=da)
    return grads  # type: ignore[return-value]


def _budget_limit(K: int, bits: BitWidths, variant: Variant) -> Fraction:
    # same fallback rule as the quantizer: too-short channels lose centering
    if variant is Variant.A2Q_PLUS and K >= K_MIN_CENTER:
        return a2q_plus_limit(bits.P, bits.N)
    return a2q_limit(bits.P, bits.N, bits.act_signed)


def reg_penalty(ch: ChannelWeights, bits: BitWidths, variant: Variant) -> float:
    """Hinge on the norm overshoot: max(g - T, 0) with T the channel's weight budget.

    Zero whenever the gate is feasible (g <= T), so the penalty only steers
    channels parked above their budget and never distorts feasible ones.
    """
    if variant is Variant.STANDARD:
        return 0.0
    T = ch.s * float(_budget_limit(ch.K, bits, variant))
    return max(ch.g - T, 0.0)


def sgd_step(net: ToyNetwork, grads: list[LayerGrads], config: TrainConfig) -> None:
    """Plain SGD update; weight decay touches v only, the hinge steers t and d."""
    lr = config.lr
    wd = config.weight_decay
    lam = config.lambda_reg
    for layer, lg in zip(net.layers, grads):
        for j, ch in enumerate(layer.channels):
            dt = float(lg.dt[j])
            dd = float(lg.dd[j])
            if lam > 0.0:
                T = ch.s * float(_budget_limit(ch.K, layer.bits, net.variant))
                g = ch.g
                if g > T:
                    dt += lam * g * LN2
                    dd -= lam * T * LN2
            ch.v = ch.v - lr * (lg.dv[j] + wd * ch.v)
            ch.t = ch.t - lr * dt
            ch.d = ch.d - lr * dd
        layer.bias = layer.bias - lr * lg.db
        layer.act_exp -= lr * lg.da


def mse(pred, target) -> float:
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(diff * diff))


def fit(config: TrainConfig) -> tuple[ToyNetwork, SweepRecord]:
    """Train from scratch and return the network with its audited summary row.

    After the last step the integer network is checked against its accumulator
    budget (exact worst case per channel, exhaustive where the input space is
    small enough); a violation raises instead of returning a bad row.
    """
    data = make_data(config)
    net = build_network(config, data.init_weights)
    calibrate(net, data.X_train[: min(256, len(data.X_train))])
    order = np.random.default_rng([config.seed, 1])
    n = len(data.X_train)
    step = max(1, config.batch_size)
    for epoch in range(config.epochs):
        perm = order.permutation(n)
        for start in range(0, n, step):
            idx = perm[start : start + step]
            xb, yb = data.X_train[idx], data.y_train[idx]
            try:
                pred, stores = forward(net, xb, quantize=True)
            except OverflowError as exc:
                # a runaway exponent breaks 2**t before the loss can go NaN
                raise DivergenceError(f"parameter overflow at epoch {epoch}") from exc
            loss = mse(pred, yb)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            d_pred = 2.0 * (pred - yb) / pred.size
            grads = backward(net, stores, d_pred, quantize=True)
            sgd_step(net, grads, config)
    final_loss = mse(forward(net, data.X_test, quantize=True)[0], data.y_test)
    if not math.isfinite(final_loss):
        raise DivergenceError("non-finite final loss")
    certify_accumulators(net)
    record = SweepRecord(
        variant=config.variant.value,
        M=config.bits.M,
        N=config.bits.N,
        P=config.bits.P,
        seed=config.seed,
        final_loss=final_loss,
        sparsity=measure_sparsity(net),
        min_slack=min_bound_slack(net),
    )
    return net, record


def train(config: TrainConfig) -> SweepRecord:
    """Run fit() and keep only the summary row."""
    return fit(config)[1]


def float_baseline(config: TrainConfig) -> FloatRun:
    """The unconstrained float reference: same data, init, batch order, and SGD."""
    data = make_data(config)
    W = [w.copy() for w in data.init_weights]
    b = [np.zeros(w.shape[0]) for w in W]
    order = np.random.default_rng([config.seed, 1])
    n = len(data.X_train)
    step = max(1, config.batch_size)
    n_layers = len(W)

    def run(x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        xs, ys = [], []
        h = x
        for i in range(n_layers):
            xs.append(h)
            y = h @ W[i].T + b[i]
            ys.append(y)
            h = y if i == n_layers - 1 else np.maximum(y, 0.0)
        return h, xs, ys

    for epoch in range(config.epochs):
        perm = order.permutation(n)
        for start in range(0, n, step):
            idx = perm[start : start + step]
            xb, yb = data.X_train[idx], data.y_train[idx]
            pred, xs, ys = run(xb)
            loss = mse(pred, yb)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite float baseline loss at epoch {epoch}")
            d_h = 2.0 * (pred - yb) / pred.size
            for i in reversed(range(n_layers)):
                d_y = d_h if i == n_layers - 1 else d_h * (ys[i] > 0.0)
                dWi = d_y.T @ xs[i]
                dbi = d_y.sum(axis=0)
                d_h = d_y @ W[i]
                W[i] = W[i] - config.lr * (dWi + config.weight_decay * W[i])
                b[i] = b[i] - config.lr * dbi
    final_loss = mse(run(data.X_test)[0], data.y_test)
    return FloatRun(final_loss=final_loss, weights=tuple(W))


def quantize_network(net: ToyNetwork) -> list[list[QuantResult]]:
    return [
        [forward_weights(ch, layer.bits, net.variant)[0] for ch in layer.channels]
        for layer in net.layers
    ]


def measure_sparsity(net: ToyNetwork) -> float:
    """Fraction of integer weight codes equal to zero across the quantized layers."""
    zeros = 0
    total = 0
    for results in quantize_network(net):
        for res in results:
            zeros += int(np.count_nonzero(res.q == 0))
            total += res.q.size
    return zeros / total


def min_bound_slack(net: ToyNetwork) -> Fraction:
    """Tightest channel's budget minus its integer l1 mass, as an exact rational."""
    slack: Fraction | None = None
    for results in quantize_network(net):
        for res in results:
            here = res.bound - Fraction(int(res.l1_codes))
            if slack is None or here < slack:
                slack = here
    if slack is None:
        raise ValueError("network has no channels")
    return slack


def certify_accumulators(net: ToyNetwork, budget: int | None = None) -> None:
    """Exact post-training overflow audit; raises AccumulatorOverflowError on any hazard.

    Every channel gets the closed-form worst-case check.  Channels whose input
    space is small enough for the enumeration budget also get the exhaustive
    sweep; the two routes must agree.
    """
    cap = enumeration_budget(budget)
    for li, layer in enumerate(net.layers):
        spec = AccumulatorSpec(P=layer.bits.P)
        for ci, ch in enumerate(layer.channels):
            res = forward_weights(ch, layer.bits, net.variant)[0]
            codes = [int(c) for c in res.q]
            wit = check_accumulator(codes, layer.bits.N, layer.bits.act_signed, spec)
            if wit.overflowed:
                raise AccumulatorOverflowError(
                    f"layer {li} channel {ci}: worst-case dot range "
                    f"[{wit.true_min}, {wit.true_max}] escapes P={layer.bits.P}"
                )
            if ((1 << layer.bits.N) ** len(codes)) <= cap:
                wit2 = exhaustive_check(codes, layer.bits.N, layer.bits.act_signed, spec, budget=budget)
                if wit2.overflowed:
                    raise AccumulatorOverflowError(
                        f"layer {li} channel {ci}: exhaustive sweep found an overflow"
                    )


def channel_cdf(channels, bits: BitWidths, p_range=range(2, 33)) -> list[tuple[int, float]]:
    """Feasibility curve for float channels under the max-abs init scale.

    For each P, the fraction of channels whose scaled l1 mass fits the
    uncentered budget at (P, N).  Nondecreasing in P.
    """
    rows = [np.atleast_1d(np.asarray(w, dtype=float)) for w in channels]
    if not rows:
        raise ValueError("need at least one channel")
    masses = [float(np.abs(w).sum()) / init_scale(w, bits.M) for w in rows]
    out = []
    for P in p_range:
        limit = float(a2q_limit(P, bits.N, bits.act_signed))
        out.append((int(P), sum(1 for m in masses if m <= limit) / len(masses)))
    return out


def save_checkpoint(path, net: ToyNetwork) -> None:
    """Quantized-run checkpoint: per layer its bit plan, activation exponent, channels."""
    payload = {
        "kind": "quantized",
        "variant": net.variant.value,
        "layers": [
            {
                "bits": {
                    "M": layer.bits.M,
                    "N": layer.bits.N,
                    "P": layer.bits.P,
                    "act_signed": layer.bits.act_signed,
                },
                "act_exp": layer.act_exp,
                "bias": layer.bias.tolist(),
                "channels": [{"v": ch.v.tolist(), "t": ch.t, "d": ch.d} for ch in layer.channels],
            }
            for layer in net.layers
        ],
    }
    Path(path).write_text(json.dumps(payload))


def save_float_checkpoint(path, weights) -> None:
    """Float-run checkpoint: per layer a list of channels holding raw weight rows."""
    payload = {
        "kind": "float",
        "layers": [
            {"channels": [{"w": np.asarray(row, dtype=float).tolist()} for row in W]}
            for W in weights
        ],
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path):
    """Read a checkpoint; returns ("quantized", ToyNetwork) or ("float", weight rows)."""
    payload = json.loads(Path(path).read_text())
    kind = payload.get("kind")
    if kind == "quantized":
        layers = []
        for entry in payload["layers"]:
            b = entry["bits"]
            bw = BitWidths(M=int(b["M"]), N=int(b["N"]), P=int(b["P"]), act_signed=bool(b["act_signed"]))
            chans = [
                ChannelWeights(v=np.asarray(c["v"], dtype=float), t=float(c["t"]), d=float(c["d"]))
                for c in entry["channels"]
            ]
            layers.append(
                QuantLinear(
                    channels=chans,
                    bits=bw,
                    bias=np.asarray(entry["bias"], dtype=float),
                    act_exp=float(entry["act_exp"]),
                )
            )
        return "quantized", ToyNetwork(layers=layers, variant=Variant(payload["variant"]))
    if kind == "float":
        return "float", [
            [np.asarray(c["w"], dtype=float) for c in entry["channels"]] for entry in payload["layers"]
        ]
    raise ValueError(f"unrecognized checkpoint kind: {kind!r}")
