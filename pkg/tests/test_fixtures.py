import json
import struct
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import ndtri

import oracles
from cmm import rng as crng
from cmm.block import cmm_forward
from cmm.config import DEFAULT_GRIDS, CmmConfig
from cmm.errors import CorruptionError, FormatError
from cmm.fixtures import (
    MAGIC,
    decode_bundle,
    emit_header,
    encode_bundle,
    flatten_weights,
    generate_baseline_weights,
    generate_inputs,
    generate_weights,
    load_bundle,
    parse_bundle,
    read_header,
    save_bundle,
)

CFG = CmmConfig(T=6, D_t=16, H=2)


def _same_weights(a, b):
    fa, fb = flatten_weights(a), flatten_weights(b)
    return fa.keys() == fb.keys() and all(fa[k].tobytes() == fb[k].tobytes() and fa[k].shape == fb[k].shape
                                          for k in fa)


class TestRng:
    @pytest.mark.parametrize("seed,stream", [(0, 0), (42, 1), (2**63 + 5, 17), (-3, 2)])
    def test_bits_match_integer_reference(self, seed, stream):
        got = crng.random_bits(seed & crng.MASK64, stream, 16, start=3)
        ref = [oracles.splitmix_element(seed & crng.MASK64, stream, i) for i in range(3, 19)]
        assert [int(v) for v in got] == ref

    def test_uniform_open_interval(self):
        u = crng.uniform(9, 0, 100_000)
        assert u.min() > 0 and u.max() < 1

    def test_acklam_accuracy(self):
        p = np.concatenate([np.linspace(1e-12, 0.02, 500), np.linspace(0.02, 0.98, 1000),
                            np.linspace(0.98, 1 - 1e-12, 500)])
        ref = ndtri(p)
        assert np.max(np.abs(crng.acklam_ndtri(p) - ref) / np.maximum(np.abs(ref), 1e-3)) < 1.2e-9

    def test_streams_independent_of_length(self):
        assert np.array_equal(crng.normal(5, 3, 100)[40:], crng.normal(5, 3, 60, start=40))


class TestGenerate:
    def test_deterministic(self):
        assert _same_weights(generate_weights(CFG, 7), generate_weights(CFG, 7))

    def test_seed_changes_something(self):
        assert not _same_weights(generate_weights(CFG, 7), generate_weights(CFG, 8))

    def test_stable_poles_seed_42(self):
        p = generate_weights(CmmConfig(T=1, G=1, D_t=1, H=1, k=1, state_size=1), 42).ssm
        assert np.all(p.lambda_re < 0)
        p = generate_weights(CFG, 42).ssm
        assert np.all(p.lambda_re < 0)
        dt = np.exp(p.log_dt)
        assert np.all((dt > 1e-4) & (dt < 1e-1))

    def test_alpha_and_ln_init(self):
        w = generate_weights(CFG, 1)
        assert w.film.alpha == 0.1
        assert np.array_equal(w.out_ln_gamma, np.ones(16)) and not w.out_ln_beta.any()

    def test_fan_in_bounds(self):
        w = generate_weights(CFG, 1)
        assert np.max(np.abs(w.correlation.W_t)) <= 1 / np.sqrt(16)
        assert np.max(np.abs(w.ffn_w2)) <= 1 / np.sqrt(CFG.ffn_hidden)

    def test_inputs_deterministic(self):
        a, b = generate_inputs(5, 5, 8, 6, 3), generate_inputs(5, 5, 8, 6, 3)
        assert a.xt.tobytes() == b.xt.tobytes() and a.xv.tobytes() == b.xv.tobytes()
        assert a.xv.shape == (5, 6)

    def test_inputs_moments(self):
        x = generate_inputs(1000, 1, 100, 1, 11).xt
        assert abs(x.mean()) <= 0.02 and abs(x.std() - 1) <= 0.02

    def test_default_grid_count(self):
        assert DEFAULT_GRIDS == 5 and CmmConfig().G == 5


class TestBundle:
    @pytest.mark.parametrize("backend", ["diagonal_lti", "selective_scan"])
    def test_roundtrip(self, tmp_path, backend):
        cfg = CFG.replace(backend=backend)
        w = generate_weights(cfg, 3)
        path = tmp_path / "w.cmmwb"
        save_bundle(w, cfg, path, seed=3)
        w2, cfg2 = load_bundle(path)
        assert cfg2 == cfg and _same_weights(w, w2)
        assert path.read_bytes()[:8] == MAGIC
        assert read_header(path)["seed"] == 3

    @pytest.mark.parametrize("connector", ["prepend", "cross_attend"])
    def test_baseline_roundtrip(self, connector):
        w = generate_baseline_weights(connector, CFG, 3)
        w2, _ = decode_bundle(encode_bundle(w, CFG))
        assert type(w2) is type(w) and _same_weights(w, w2)

    def test_header_reemits_identically(self):
        blob = encode_bundle(generate_weights(CFG, 3), CFG, 3)
        header, raw, _ = parse_bundle(blob)
        assert emit_header(header) == raw

    def test_forward_after_roundtrip_bit_exact(self, tmp_path):
        w = generate_weights(CFG, 3)
        inp = generate_inputs(CFG.T, CFG.G, CFG.D_t, CFG.D_v, 3)
        save_bundle(w, CFG, tmp_path / "w", 3)
        w2, cfg2 = load_bundle(tmp_path / "w")
        a, b = cmm_forward(inp.xt, inp.xv, w, CFG), cmm_forward(inp.xt, inp.xv, w2, cfg2)
        assert a.sequence.tobytes() == b.sequence.tobytes() and a.pooled.tobytes() == b.pooled.tobytes()

    def test_bad_magic(self, tmp_path):
        blob = bytearray(encode_bundle(generate_weights(CFG, 3), CFG))
        blob[:8] = b"NOTMAGIC"
        (tmp_path / "bad").write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="magic"):
            load_bundle(tmp_path / "bad")

    def test_truncation_names_first_incomplete_tensor(self, tmp_path):
        blob = encode_bundle(generate_weights(CFG, 3), CFG)
        header, raw, payload = parse_bundle(blob)
        victim = header["tensors"][5]
        cut = 16 + len(raw) + victim["offset"] + victim["nbytes"] - 8
        (tmp_path / "t").write_bytes(blob[:cut])
        with pytest.raises(CorruptionError, match=repr(victim["name"])):
            load_bundle(tmp_path / "t")

    def test_overlap_rejected(self):
        blob = encode_bundle(generate_weights(CFG, 3), CFG)
        header, raw, payload = parse_bundle(blob)
        header["tensors"][2]["offset"] = header["tensors"][1]["offset"] + 8
        new = emit_header(header)
        with pytest.raises(FormatError, match="overlap"):
            decode_bundle(MAGIC + struct.pack("<Q", len(new)) + new + payload)

    def test_garbage_header(self):
        with pytest.raises(FormatError):
            decode_bundle(MAGIC + struct.pack("<Q", 3) + b"{x]")

    def test_header_is_utf8_json(self):
        blob = encode_bundle(generate_weights(CFG, 3), CFG, 3)
        (hlen,) = struct.unpack("<Q", blob[8:16])
        header = json.loads(blob[16:16 + hlen].decode("utf-8"))
        assert header["format"] == "CMMWB001" and header["connector"] == "cmm"
        assert header["generator"]["rng"] == "splitmix64-counter"


_SCRIPT = """
import sys
from cmm.config import CmmConfig
from cmm.fixtures import generate_weights, save_bundle
cfg = CmmConfig(T=6, D_t=16, H=2)
save_bundle(generate_weights(cfg, 99), cfg, sys.argv[1], seed=99)
"""


def test_bundle_bytes_identical_across_processes(tmp_path):
    paths = [tmp_path / "a", tmp_path / "b"]
    for p in paths:
        subprocess.run([sys.executable, "-c", _SCRIPT, str(p)], check=True)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    w, _ = load_bundle(paths[0])
    assert _same_weights(w, generate_weights(CFG, 99))
