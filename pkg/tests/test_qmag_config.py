import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quatma.config import ConfigError, RunConfig, load_config, parse_text
from quatma.qmag import FormatError, read_grid, read_matrix_text, write_grid, write_matrix_text


def test_header_layout(tmp_path):
    p = tmp_path / "a.qmag"
    data = np.arange(256.0).reshape(4, 4, 4, 4)
    write_grid(p, data, 1)
    raw = p.read_bytes()
    assert raw[:4] == b"QMAG"
    assert struct.unpack_from("<II4II", raw, 4) == (1, 1, 4, 4, 4, 4, 0)
    assert len(raw) == 32 + 8 * 256
    assert struct.unpack_from("<d", raw, 32 + 8 * 5)[0] == 5.0


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    st.lists(st.integers(1, 3), min_size=4, max_size=4),
    st.integers(1, 3),
    st.booleans(),
    st.data(),
)
def test_roundtrip_bit_exact(tmp_path, sides, count, cplx, data):
    shape = tuple(sides) if count == 1 else (count,) + tuple(sides)
    floats = st.floats(allow_nan=True, allow_infinity=True, width=64)
    re = data.draw(arrays(np.float64, shape, elements=floats))
    arr = re
    if cplx:
        arr = np.empty(shape, dtype=complex)
        arr.real = re
        arr.imag = data.draw(arrays(np.float64, shape, elements=floats))
    p = tmp_path / "r.qmag"
    write_grid(p, arr, 1)
    n, s, back = read_grid(p)
    assert n == 1 and s == tuple(sides)
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_n2_grid(tmp_path):
    arr = np.random.default_rng(0).standard_normal((2,) * 8)
    write_grid(tmp_path / "b.qmag", arr, 2)
    n, sides, back = read_grid(tmp_path / "b.qmag")
    assert n == 2 and sides == (2,) * 8 and np.array_equal(back, arr)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda raw: b"XMAG" + raw[4:],
        lambda raw: raw[:4] + struct.pack("<I", 9) + raw[8:],
        lambda raw: raw[:8] + struct.pack("<I", 0) + raw[12:],
        lambda raw: raw[:28] + struct.pack("<I", 6) + raw[32:],
        lambda raw: raw[:-3],
        lambda raw: raw[:32],
        lambda raw: raw[:10],
    ],
)
def test_corrupted_files(tmp_path, mutate):
    p = tmp_path / "c.qmag"
    write_grid(p, np.ones((2, 2, 2, 2)), 1)
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(FormatError):
        read_grid(p)


def test_write_rejects_bad_shapes(tmp_path):
    with pytest.raises(FormatError):
        write_grid(tmp_path / "x", np.ones(10), 1, sides=(2, 2, 2, 2))
    with pytest.raises(FormatError):
        write_grid(tmp_path / "x", np.ones(16), 1, sides=(2, 2, 4))


def test_matrix_text(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("# comment\n1 0,0,1,0\n\n0,0,-1,0 1  # trailing\n")
    A = read_matrix_text(p)
    assert A.shape == (2, 2, 4)
    assert np.array_equal(A[0, 1], [0, 0, 1, 0]) and A[1, 1, 0] == 1
    q = tmp_path / "m2.txt"
    write_matrix_text(q, A)
    assert np.array_equal(read_matrix_text(q), A)


@pytest.mark.parametrize(
    "text,line",
    [
        ("1 2\n3\n", 2),
        ("1 a\n0 1\n", 1),
        ("1 0,1\n0 1\n", 1),
        ("1 nan\nnan 1\n", 1),
        ("1 0,0,1,0\n0,0,1,0 1\n", 1),
    ],
)
def test_matrix_text_errors(tmp_path, text, line):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(FormatError, match=f"line {line}"):
        read_matrix_text(p)
    p.write_text("# nothing\n")
    with pytest.raises(FormatError):
        read_matrix_text(p)


def test_config_defaults_and_file(tmp_path):
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.grid_sides() == (8, 8, 8, 8)
    p = tmp_path / "c.cfg"
    p.write_text("n = 2  # two\nside=4\nks = 0, 2, 4\nscheme = fd2\n")
    cfg = load_config(p, overrides=["tol=1e-7"], seed=3)
    assert (cfg.n, cfg.side, cfg.ks, cfg.scheme, cfg.tol, cfg.seed) == (2, 4, (0, 2, 4), "fd2", 1e-7, 3)
    assert cfg.grid_sides() == (4,) * 8
    assert cfg.grid_sides(6) == (6,) * 8
    assert cfg.as_dict()["n"] == 2


@pytest.mark.parametrize(
    "overrides,msg",
    [
        (["bogus=1"], "unknown key"),
        (["n=7"], "outside"),
        (["side=9"], "even"),
        (["tol=0"], "outside"),
        (["scheme=cubic"], "not one of"),
        (["max_iter=x"], "integer"),
        (["f_family=file"], "f_file"),
        (["sides=4,4,4"], "integers"),
        (["sides=4,4,4,4,4,4"], "entries"),
        (["f_mode=1,1,1,1,1"], "at most"),
        (["noequals"], "key=value"),
    ],
)
def test_config_errors(overrides, msg):
    with pytest.raises(ConfigError, match=msg):
        load_config(overrides=overrides)


def test_config_text_errors(tmp_path):
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("n = 1\nn = 2\n")
    with pytest.raises(ConfigError, match=":2:"):
        parse_text("n = 1\nside\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


def test_shipped_configs_load():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    paths = sorted(root.glob("*.cfg"))
    assert paths
    for p in paths:
        load_config(p)
