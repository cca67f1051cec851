import dataclasses
import json
import struct

import numpy as np
import pytest

from redcolloc import archive
from redcolloc.exceptions import ArchiveIntegrityError, ArchiveVersionError
from redcolloc.greedy import train_ercm_burgers
from redcolloc.numerics import Grid1D
from redcolloc.problem import build_burgers1d
from redcolloc.reduced import precompute_burgers, solve_batch, solve_online, solve_online_burgers

from conftest import philox_uniform, trained


def arrays_of(model):
    return {f.name: getattr(model, f.name) for f in dataclasses.fields(model)
            if isinstance(getattr(model, f.name), np.ndarray)}


def assert_bitwise_equal(a, b):
    A, B = arrays_of(a), arrays_of(b)
    assert A.keys() == B.keys()
    for k in A:
        assert A[k].shape == B[k].shape, k
        assert np.asarray(A[k], dtype=float).tobytes() == np.asarray(B[k], dtype=float).tobytes(), k


@pytest.mark.parametrize("method,kind", [("lsrcm", "interp_q1"), ("ercm", "center"), ("ercm", "interp_q1_diag")])
def test_round_trip_is_bit_exact(tmp_path, method, kind):
    model = trained(method, kind)[0]
    path = archive.save_model(model, tmp_path / "m.rcm")
    back = archive.load_model(path)
    assert_bitwise_equal(model, back)
    assert (back.method, back.precond, back.nx, back.domain) == (model.method, model.precond, 25, model.domain)
    mus = philox_uniform(model.domain, 10, 9)
    for mu in mus:
        s1, s2 = solve_online(model, mu), solve_online(back, mu)
        assert s1.coeffs.tobytes() == s2.coeffs.tobytes()
        assert s1.delta == s2.delta
    c1, d1 = solve_batch(model, mus)
    c2, d2 = solve_batch(back, mus)
    assert c1.tobytes() == c2.tobytes() and d1.tobytes() == d2.tobytes()


def test_burgers_round_trip(tmp_path):
    p = build_burgers1d(Grid1D.build(33), "fixed")
    basis, _ = train_ercm_burgers(p, np.linspace(0.5, 2, 9)[:, None], n_max=4)
    model = precompute_burgers(basis, p)
    back = archive.load_model(archive.save_model(model, tmp_path / "b.rcm", {"rhs_spec": "fixed"}))
    assert_bitwise_equal(model, back)
    a, b = solve_online_burgers(model, 0.77), solve_online_burgers(back, 0.77)
    assert a.coeffs.tobytes() == b.coeffs.tobytes() and a.delta == b.delta
    man = archive.read_manifest(tmp_path / "b.rcm")
    assert man["kind"] == "burgers" and man["problem_options"] == {"rhs_spec": "fixed"}


def test_manifest_is_readable(tmp_path):
    model = trained("ercm", "interp_q1")[0]
    archive.save_model(model, tmp_path / "m.rcm")
    man = archive.read_manifest(tmp_path / "m.rcm")
    assert man["format_version"] == archive.FORMAT_VERSION
    assert man["N"] == model.N and man["nx"] == 25 and man["d"] == 2
    assert man["reduced_points"] == model.reduced_points.tolist()
    assert [s["name"] for s in man["sections"]] == ["basis", "selected_mu", "r_factor", "point_blocks", "point_rhs"]
    raw = (tmp_path / "m.rcm").read_bytes()
    assert raw.startswith(archive.MAGIC)
    # sections are little-endian with (rows, cols) headers
    n = struct.unpack_from("<Q", raw, 8)[0]
    rows, cols = struct.unpack_from("<QQ", raw, 24 + n)
    assert (rows, cols) == model.basis.shape


def test_crc64_check_value():
    assert archive.crc64(b"123456789") == 0x62EC59E3F1A4F00A


def _rewrite(path, fn):
    b = bytearray(path.read_bytes())
    fn(b)
    path.write_bytes(bytes(b))


def test_corruptions_are_detected(tmp_path):
    model = trained("lsrcm", "none")[0]
    good = archive.save_model(model, tmp_path / "m.rcm").read_bytes()
    cases = {
        "payload byte": lambda b: b.__setitem__(len(b) - 9, b[len(b) - 9] ^ 0x01),
        "manifest edit": lambda b: b.__setitem__(b.index(b"diffusion2d") + 10, ord("e")),
        "magic": lambda b: b.__setitem__(0, ord("X")),
        "trailing bytes": lambda b: b.extend(b"\0"),
        "truncated": lambda b: b.__delitem__(slice(len(b) - 5, None)),
    }
    for name, fn in cases.items():
        path = tmp_path / f"{name}.rcm"
        path.write_bytes(good)
        _rewrite(path, fn)
        with pytest.raises(ArchiveIntegrityError):
            archive.load_model(path)


def test_version_mismatch_names_both_versions(tmp_path):
    model = trained("lsrcm", "none")[0]
    path = archive.save_model(model, tmp_path / "m.rcm")
    raw = path.read_bytes()
    n = struct.unpack_from("<Q", raw, 8)[0]
    man = json.loads(raw[16:16 + n])
    man["format_version"] = 7
    text = json.dumps(man).encode()
    path.write_bytes(archive.MAGIC + struct.pack("<Q", len(text)) + text + struct.pack("<Q", archive.crc64(text))
                     + raw[24 + n:])
    with pytest.raises(ArchiveVersionError, match=r"7.*1"):
        archive.load_model(path)
