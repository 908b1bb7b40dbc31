import json
import struct

import numpy as np
import pytest

from htrw import cli, container, selftest, special
from htrw.config import RunConfig
from htrw.errors import ConfigError, FormatError


# ---------------------------------------------------------------------------
# container


def test_round_trip_is_bit_exact(tmp_path, rng):
    arrays = {"a": rng.standard_normal((3, 4, 5)), "b": np.array([np.pi, -0.0, 1e-310, np.inf]),
              "empty": np.zeros((0, 3))}
    path = tmp_path / "x.htrw"
    n = container.write(path, "sinogram", {"dimension": 3, "note": "ü"}, arrays)
    assert n == path.stat().st_size
    kind, head, back = container.read(path, expect="sinogram")
    assert kind == "sinogram" and head["note"] == "ü"
    assert list(back) == ["a", "b", "empty"]
    for k, v in arrays.items():
        assert back[k].shape == v.shape
        assert back[k].tobytes() == v.tobytes()
    # re-packing reproduces the file byte for byte
    assert container.pack(kind, {k: v for k, v in head.items() if k not in ("kind", "arrays")}, back) == path.read_bytes()


def test_layout():
    blob = container.pack("volume", {"dimension": 2}, {"v": np.array([1.0, 2.0])})
    magic, version, n_head = struct.unpack_from("<4sIQ", blob)
    assert magic == b"HTRW" and version == container.VERSION
    head = json.loads(blob[16:16 + n_head])
    assert head["arrays"] == [{"name": "v", "shape": [2]}]
    assert np.frombuffer(blob[16 + n_head:], "<f8").tolist() == [1.0, 2.0]


def test_rejects_bad_containers(tmp_path):
    good = container.pack("phantom", {"dimension": 3}, {"r": np.ones(4)})
    bad_version = struct.pack("<4sIQ", b"HTRW", 2, 0) + good[16:]
    cases = {
        "truncated prefix": good[:10],
        "bad magic": b"XXXX" + good[4:],
        "version": bad_version,
        "truncated payload": good[:-8],
        "extra payload": good + b"\0" * 8,
        "header": struct.pack("<4sIQ", b"HTRW", 1, 5) + b"{oops",
        "header length": struct.pack("<4sIQ", b"HTRW", 1, 10 ** 6) + b"{}",
        "kind": _with_header({"kind": "movie", "arrays": []}),
        "descriptor": _with_header({"kind": "phantom", "arrays": [{"name": "x"}]}),
        "negative": _with_header({"kind": "phantom", "arrays": [{"name": "x", "shape": [-1]}]}),
    }
    for name, blob in cases.items():
        with pytest.raises(FormatError):
            container.unpack(blob)
    with pytest.raises(FormatError, match="unsupported container version 2"):
        container.unpack(bad_version)
    with pytest.raises(FormatError):
        container.pack("movie", {})
    path = tmp_path / "p.htrw"
    path.write_bytes(good)
    with pytest.raises(FormatError):
        container.read(path, expect="boundary")
    with pytest.raises(FormatError):
        container.read(tmp_path / "missing.htrw")


def _with_header(head):
    text = json.dumps(head).encode()
    return struct.pack("<4sIQ", b"HTRW", 1, len(text)) + text


def test_config_round_trip():
    cfg = RunConfig(dimension=2, Q=40, theta_pass=2e-3)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**cfg.to_dict(), "colour": 1})
    with pytest.raises(ConfigError):
        RunConfig(dimension=4)
    with pytest.raises(ConfigError):
        RunConfig(theta_pass=0.2, theta_fail=0.1)


# ---------------------------------------------------------------------------
# command line


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Phantom and boundary containers for the reference 3D phantom."""
    d = tmp_path_factory.mktemp("cli")
    ph, bd = d / "ph.htrw", d / "b.htrw"
    assert cli.main(["phantom", "--dim", "3", "--bump", "0.3,0,0,0.4,1", "--out", str(ph)]) == 0
    assert cli.main(["forward", "--in", str(ph), "--out", str(bd)]) == 0
    return d, ph, bd


def test_phantom_command_validates_support(tmp_path, capsys):
    out = str(tmp_path / "p.htrw")
    assert cli.main(["phantom", "--dim", "2", "--bump", "0.3,0,0.4,1", "--bump", "0.5,0.5,0.4,1", "--out", out]) == 2
    assert "bump 1 (0.5,0.5,0.4,1)" in capsys.readouterr().err
    assert cli.main(["phantom", "--dim", "2", "--bump", "0.3,0.4,1", "--out", out]) == 2
    assert cli.main(["phantom", "--dim", "5", "--out", out]) == 2


def test_forward_dimension_mismatch(workspace, tmp_path):
    _d, ph, _b = workspace
    assert cli.main(["forward", "--in", str(ph), "--dim", "2", "--out", str(tmp_path / "b.htrw")]) == 2


def test_check_in_range_and_determinism(workspace, tmp_path):
    _d, _ph, bd = workspace
    r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
    c1, c2 = tmp_path / "r1.htrw", tmp_path / "r2.htrw"
    assert cli.main(["check", "--in", str(bd), "--report", str(r1), "--out", str(c1)]) == 0
    assert cli.main(["check", "--in", str(bd), "--report", str(r2), "--out", str(c2)]) == 0
    assert r1.read_bytes() == r2.read_bytes()
    assert c1.read_bytes() == c2.read_bytes()
    doc = json.loads(r1.read_text())
    assert doc["verdict"] == "in-range"
    assert doc["normalization"]["config"] == RunConfig().to_dict()


def test_reread_container_reproduces_report(workspace, tmp_path):
    _d, _ph, bd = workspace
    kind, head, arrays = container.read(bd, expect="boundary")
    copy = tmp_path / "copy.htrw"
    container.write(copy, kind, {k: v for k, v in head.items() if k not in ("kind", "arrays")}, arrays)
    assert copy.read_bytes() == bd.read_bytes()
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli.main(["check", "--in", str(bd), "--report", str(a)])
    cli.main(["check", "--in", str(copy), "--report", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_check_injected_violation(workspace, tmp_path):
    _d, _ph, bd = workspace
    rep = tmp_path / "v.json"
    code = cli.main(["check", "--in", str(bd), "--inject-violation", "l=5,n=1,eps=1e-2", "--report", str(rep)])
    assert code == 3
    doc = json.loads(rep.read_text())
    assert doc["verdict"] == "out-of-range"
    assert doc["normalization"]["injected_violation"] == "l=5,n=1,eps=1e-2"
    assert cli.main(["check", "--in", str(bd), "--inject-violation", "l=5,n=2"]) == 2


def test_check_inconclusive_exit(workspace):
    _d, _ph, bd = workspace
    # a pass threshold below the pipeline's accuracy leaves the report inconclusive
    assert cli.main(["check", "--in", str(bd), "--theta-pass", "1e-9", "--theta-fail", "10"]) == 4


def test_check_zero_data(tmp_path, capsys):
    ph, bd = tmp_path / "z.htrw", tmp_path / "zb.htrw"
    assert cli.main(["phantom", "--dim", "3", "--out", str(ph)]) == 0
    assert cli.main(["forward", "--in", str(ph), "--out", str(bd)]) == 0
    rep = tmp_path / "z.json"
    assert cli.main(["check", "--in", str(bd), "--report", str(rep)]) == 0
    assert json.loads(rep.read_text())["aggregate"] == 0.0


def test_malformed_inputs_exit_2(workspace, tmp_path):
    _d, ph, bd = workspace
    junk = tmp_path / "junk.htrw"
    junk.write_bytes(b"HTRW" + b"\0" * 3)
    assert cli.main(["check", "--in", str(junk)]) == 2
    assert cli.main(["check", "--in", str(ph)]) == 2  # wrong kind
    assert cli.main(["check", "--in", str(tmp_path / "none.htrw")]) == 2
    assert cli.main(["check", "--in", str(bd), "--nt", "1024"]) == 2  # grid differs from the data
    assert cli.main(["--threads", "0", "check", "--in", str(bd)]) == 2
    assert cli.main(["no-such-command"]) == 2


def test_reconstruct_command(tmp_path, capsys):
    ph, bd, vol = tmp_path / "ph.htrw", tmp_path / "b.htrw", tmp_path / "v.htrw"
    assert cli.main(["phantom", "--dim", "3", "--bump", "0.3,0,0,0.4,1", "--out", str(ph)]) == 0
    assert cli.main(["forward", "--in", str(ph), "--out", str(bd)]) == 0
    capsys.readouterr()
    args = ["reconstruct", "--in", str(bd), "--out", str(vol), "--truth", str(ph), "--n-vol", "24", "--q-recon", "48"]
    assert cli.main(["--threads", "2"] + args) == 0
    out = capsys.readouterr().out
    err = float(out.split("relative L2 error:")[1])
    assert err < 0.1
    kind, head, arrays = container.read(vol, expect="volume")
    assert arrays["values"].shape == (24, 24, 24)
    assert head["config"]["n_vol"] == 24
    first = vol.read_bytes()
    assert cli.main(["--threads", "1"] + args) == 0
    assert vol.read_bytes() == first


def test_selftest_fault_injection(monkeypatch):
    good = selftest.wronskian_suite(quick=True)
    assert good.passed
    real = special.sph_hankel

    def corrupted(d, l, lam):
        return real(d, l, lam) * (1.0 + 1e-3)

    monkeypatch.setattr(special, "sph_hankel", corrupted)
    bad = selftest.wronskian_suite(quick=True)
    assert not bad.passed and bad.worst > 1e-4
    assert cli.main(["selftest", "--quick"]) == 1
