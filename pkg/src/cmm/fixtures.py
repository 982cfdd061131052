"""Seeded weights and inputs, plus the on-disk weight bundle format.

Bundle layout (all integers little-endian)::

    bytes 0..8     magic b"CMMWB001"
    bytes 8..16    uint64 header length L
    bytes 16..16+L UTF-8 JSON header (sorted keys, compact separators)
    rest           payload: float64 tensors, contiguous, in table order

The header holds the connector name, the config, the seed, a description of
the random generator, and a ``tensors`` table of ``{name, shape, offset,
nbytes}`` entries where ``offset`` is relative to the start of the payload.
"""

import dataclasses
import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .baselines import AttentionWeights, CrossAttentionWeights, EncoderLayerWeights, PrependWeights
from .block import CmmWeights
from .config import CmmConfig
from .correlation import CorrelationWeights
from .errors import CorruptionError, FormatError, ParameterError
from .film import FilmWeights
from .ssm import DiagonalSsmParams, SelectiveScanParams, SsmBackend

MAGIC = b"CMMWB001"
ALPHA_INIT = 0.1
LOG_DT_RANGE = (math.log(1e-3), math.log(1e-1))
# Streams 0 and 1 are the synthetic inputs; weight tensors start here.
WEIGHT_STREAM_BASE = 16
GENERATOR_INFO = {
    "rng": "splitmix64-counter",
    "uniform": "((mix(key + GOLDEN*(i+1)) >> 11) + 0.5) * 2^-53",
    "normal": "acklam-inverse-cdf",
    "weight_stream_base": WEIGHT_STREAM_BASE,
}

CONNECTORS = ("cmm", "prepend", "cross_attend")


@dataclass(frozen=True)
class SyntheticInputs:
    seed: int
    xt: np.ndarray  # (T, D_t)
    xv: np.ndarray  # (G, D_v)


def generate_inputs(T, G, D_t, D_v, seed):
    """Standard-normal token and grid embeddings from streams 0 and 1."""
    for name, v in (("T", T), ("D_t", D_t), ("D_v", D_v)):
        if v < 1:
            raise ParameterError(f"generate_inputs: {name}={v} must be positive")
    if G < 0:
        raise ParameterError(f"generate_inputs: G={G} must be non-negative")
    xt = rng.normal(seed, 0, T * D_t).reshape(T, D_t)
    xv = rng.normal(seed, 1, G * D_v).reshape(G, D_v)
    return SyntheticInputs(seed, xt, xv)


class _Filler:
    """Hands out one fresh stream per random tensor, in call order."""

    def __init__(self, seed):
        self.seed = seed
        self.stream = WEIGHT_STREAM_BASE

    def _next(self):
        s = self.stream
        self.stream += 1
        return s

    def fan_in(self, shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        u = rng.uniform(self.seed, self._next(), int(np.prod(shape)))
        return ((2.0 * u - 1.0) * bound).reshape(shape)

    def normal(self, shape, std=1.0):
        return (std * rng.normal(self.seed, self._next(), int(np.prod(shape)))).reshape(shape)

    def uniform(self, shape, lo, hi):
        u = rng.uniform(self.seed, self._next(), int(np.prod(shape)))
        return (lo + (hi - lo) * u).reshape(shape)


def _diagonal_ssm(f, D, N):
    return DiagonalSsmParams(
        lambda_re=np.full(N, -0.5),
        lambda_im=np.pi * np.arange(N, dtype=np.float64),
        B_re=np.ones(N),
        B_im=np.zeros(N),
        C_re=f.normal((D, N), math.sqrt(0.5)),
        C_im=f.normal((D, N), math.sqrt(0.5)),
        D_skip=f.normal((D,)),
        log_dt=f.uniform((D,), *LOG_DT_RANGE),
    )


def _selective_ssm(f, D, N):
    return SelectiveScanParams(
        A_log=np.tile(np.log(np.arange(1, N + 1, dtype=np.float64)), (D, 1)),
        W_delta=f.fan_in((D, D), D),
        W_B=f.fan_in((D, N), D),
        W_C=f.fan_in((D, N), D),
        D_skip=np.ones(D),
    )


def _ffn(f, D, hidden):
    return dict(
        ffn_w1=f.fan_in((D, hidden), D),
        ffn_b1=f.fan_in((hidden,), D),
        ffn_w2=f.fan_in((hidden, D), hidden),
        ffn_b2=f.fan_in((D,), hidden),
    )


def generate_weights(cfg: CmmConfig, seed):
    """Deterministic fusion-block weights for ``cfg``."""
    f = _Filler(seed)
    D, Ds = cfg.D_t, cfg.D_shared
    corr = CorrelationWeights(W_t=f.fan_in((D, Ds), D), W_v=f.fan_in((cfg.D_v, Ds), cfg.D_v))
    film = FilmWeights(
        W_f=f.fan_in((Ds, 2 * D), Ds),
        W_f_out=f.fan_in((Ds, 2 * D), Ds),
        alpha=ALPHA_INIT,
        ln_gamma=np.ones(D),
        ln_beta=np.zeros(D),
    )
    if cfg.backend is SsmBackend.DIAGONAL_LTI:
        ssm = _diagonal_ssm(f, D, cfg.state_size)
    else:
        ssm = _selective_ssm(f, D, cfg.state_size)
    return CmmWeights(
        correlation=corr, film=film, ssm=ssm, **_ffn(f, D, cfg.ffn_hidden),
        out_ln_gamma=np.ones(D), out_ln_beta=np.zeros(D),
    )


def _encoder_layer(f, D, hidden):
    attn = AttentionWeights(*(f.fan_in((D, D), D) for _ in range(4)))
    return EncoderLayerWeights(
        attn=attn, ln1_gamma=np.ones(D), ln1_beta=np.zeros(D),
        **_ffn(f, D, hidden), ln2_gamma=np.ones(D), ln2_beta=np.zeros(D),
    )


def generate_baseline_weights(connector, cfg: CmmConfig, seed):
    """Weights for the ``prepend`` or ``cross_attend`` connector."""
    f = _Filler(seed)
    D = cfg.D_t
    if connector == "prepend":
        return PrependWeights(
            mlp_w1=f.fan_in((cfg.D_v, 2 * D), cfg.D_v),
            mlp_b1=f.fan_in((2 * D,), cfg.D_v),
            mlp_w2=f.fan_in((2 * D, D), 2 * D),
            mlp_b2=f.fan_in((D,), 2 * D),
            layer=_encoder_layer(f, D, cfg.ffn_hidden),
        )
    if connector == "cross_attend":
        return CrossAttentionWeights(
            W_vproj=f.fan_in((cfg.D_v, D), cfg.D_v),
            layer=_encoder_layer(f, D, cfg.ffn_hidden),
        )
    raise ParameterError(f"unknown baseline connector {connector!r}")


def generate_connector_weights(connector, cfg, seed):
    if connector == "cmm":
        return generate_weights(cfg, seed)
    return generate_baseline_weights(connector, cfg, seed)


# -- flattening --------------------------------------------------------------

def _schema(connector, backend):
    """Nested dataclass layout of each connector's weights."""
    layer = (EncoderLayerWeights, {"attn": (AttentionWeights, {})})
    if connector == "cmm":
        ssm_cls = DiagonalSsmParams if backend is SsmBackend.DIAGONAL_LTI else SelectiveScanParams
        return (CmmWeights, {
            "correlation": (CorrelationWeights, {}),
            "film": (FilmWeights, {}),
            "ssm": (ssm_cls, {}),
        })
    if connector == "prepend":
        return (PrependWeights, {"layer": layer})
    if connector == "cross_attend":
        return (CrossAttentionWeights, {"layer": layer})
    raise FormatError(f"unknown connector {connector!r}")


def connector_of(weights):
    for name, cls in (("cmm", CmmWeights), ("prepend", PrependWeights),
                      ("cross_attend", CrossAttentionWeights)):
        if isinstance(weights, cls):
            return name
    raise ParameterError(f"not a weight bundle: {type(weights).__name__}")


def flatten_weights(weights, prefix=""):
    """Dotted-name -> float64 array mapping, in dataclass field order."""
    out = {}
    for fld in dataclasses.fields(weights):
        value = getattr(weights, fld.name)
        name = prefix + fld.name
        if dataclasses.is_dataclass(value):
            out.update(flatten_weights(value, name + "."))
        else:
            out[name] = np.asarray(value, dtype=np.float64)
    return out


def unflatten_weights(tensors, connector, backend):
    def build(layout, prefix):
        cls, nested = layout
        kwargs = {}
        for fld in dataclasses.fields(cls):
            name = prefix + fld.name
            if fld.name in nested:
                kwargs[fld.name] = build(nested[fld.name], name + ".")
            elif name not in tensors:
                raise FormatError(f"bundle is missing tensor {name!r}")
            else:
                arr = tensors[name]
                kwargs[fld.name] = float(arr) if arr.ndim == 0 else arr
        return cls(**kwargs)

    return build(_schema(connector, backend), "")


# -- bundle io ---------------------------------------------------------------

def emit_header(header):
    return json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode_bundle(weights, cfg: CmmConfig, seed=None):
    tensors = flatten_weights(weights)
    table, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = emit_header({
        "format": MAGIC.decode(),
        "connector": connector_of(weights),
        "config": cfg.to_dict(),
        "seed": seed,
        "generator": GENERATOR_INFO,
        "tensors": table,
    })
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def save_bundle(weights, cfg: CmmConfig, path, seed=None):
    """Write ``weights`` and ``cfg`` to ``path``, replacing it atomically."""
    blob = encode_bundle(weights, cfg, seed)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def parse_bundle(blob):
    """Split raw bundle bytes into ``(header dict, header bytes, payload bytes)``."""
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise FormatError(f"bad magic {blob[:8]!r}, expected {MAGIC!r}")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    if 16 + hlen > len(blob):
        raise CorruptionError(f"header claims {hlen} bytes but file has {len(blob) - 16}")
    raw = blob[16 : 16 + hlen]
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header: {exc}") from exc
    for key in ("connector", "config", "tensors"):
        if key not in header:
            raise FormatError(f"header lacks {key!r}")
    return header, raw, blob[16 + hlen :]


def _check_table(table, payload_len):
    spans = []
    for entry in table:
        name = entry.get("name")
        shape = entry.get("shape")
        offset, nbytes = entry.get("offset"), entry.get("nbytes")
        if not isinstance(shape, list) or not all(isinstance(s, int) and s >= 0 for s in shape):
            raise FormatError(f"tensor {name!r}: bad shape {shape!r}")
        if not isinstance(offset, int) or offset < 0:
            raise FormatError(f"tensor {name!r}: bad offset {offset!r}")
        if nbytes != 8 * math.prod(shape):
            raise FormatError(f"tensor {name!r}: nbytes {nbytes} does not match shape {shape}")
        spans.append((offset, offset + nbytes, name))
    ordered = sorted(spans)
    for (_, end, a), (start, _, b) in zip(ordered, ordered[1:]):
        if start < end:
            raise FormatError(f"tensors {a!r} and {b!r} overlap")
    for start, end, name in spans:
        if end > payload_len:
            raise CorruptionError(
                f"payload truncated: tensor {name!r} needs bytes [{start}, {end}) "
                f"but payload holds {payload_len}"
            )


def decode_bundle(blob):
    header, _, payload = parse_bundle(blob)
    table = header["tensors"]
    _check_table(table, len(payload))
    tensors = {}
    for entry in table:
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=entry["nbytes"] // 8, offset=start)
        tensors[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
    cfg = CmmConfig.from_dict(header["config"])
    weights = unflatten_weights(tensors, header["connector"], cfg.backend)
    return weights, cfg


def load_bundle(path):
    """Read a bundle; returns ``(weights, config)``.

    Raises:
        FormatError: bad magic, unreadable header, inconsistent tensor table.
        CorruptionError: payload shorter than the table requires; the message
            names the first tensor (in table order) that is incomplete.
    """
    with open(path, "rb") as fh:
        return decode_bundle(fh.read())


def read_header(path):
    with open(path, "rb") as fh:
        header, _, _ = parse_bundle(fh.read())
    return header
