import numpy as np
import pytest

from causalshift.scm import (
    ConfigError,
    Dataset,
    FormatError,
    ParseError,
    SCMConfig,
    generate,
    read_csv,
    write_csv,
)


def test_default_config_shapes_chain():
    SCMConfig().validate()


def test_config_shape_mismatch():
    cfg = SCMConfig(confounder_to_causal=np.ones((3, 3)))
    with pytest.raises(ConfigError, match="confounder_to_causal"):
        cfg.validate()


def test_generate_basic_contract():
    ds = generate(SCMConfig(), "source", n=100, seed=1)
    assert ds.X.shape == (100, 6)
    assert set(np.unique(ds.y)) <= {0, 1}
    assert np.array_equal(ds.causal_mask, [1, 1, 1, 0, 0, 0])
    assert np.all(np.isfinite(ds.X))


def test_generate_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        generate(SCMConfig(), "middle", n=10)
    with pytest.raises(ConfigError):
        generate(SCMConfig(), "source", n=0)


def test_generate_deterministic():
    a = generate(SCMConfig(), "source", n=50, seed=7)
    b = generate(SCMConfig(), "source", n=50, seed=7)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_severed_spurious_edge_decorrelates():
    zero = np.zeros((2, 3))
    cfg = SCMConfig(confounder_to_spurious_source=zero, confounder_to_spurious_target=zero)
    ds = generate(cfg, "source", n=2000, seed=3)
    for j in range(3, 6):
        assert abs(np.corrcoef(ds.X[:, j], ds.y)[0, 1]) < 0.1


def test_default_source_spurious_correlation_is_strong():
    ds = generate(SCMConfig(), "source", n=2000, seed=5)
    assert abs(np.corrcoef(ds.X[:, 3], ds.y)[0, 1]) > 0.5


def test_flip_config_reverses_spurious_correlation_sign():
    cfg = SCMConfig()
    src = generate(cfg, "source", n=2000, seed=11)
    tgt = generate(cfg, "target", n=2000, seed=12)
    src_corr = np.corrcoef(src.X[:, 3], src.y)[0, 1]
    tgt_corr = np.corrcoef(tgt.X[:, 3], tgt.y)[0, 1]
    assert np.sign(src_corr) != np.sign(tgt_corr)


def test_causal_mask_constant_across_domains():
    cfg = SCMConfig()
    src = generate(cfg, "source", n=20, seed=0)
    tgt = generate(cfg, "target", n=20, seed=0)
    assert np.array_equal(src.causal_mask, tgt.causal_mask)


def test_conditional_mechanism_invariance():
    # with z->s severed everywhere, P(y|c) is the same in both domains:
    # logistic fits on c agree within 3 standard errors
    import statsmodels.api as sm

    zero = np.zeros((2, 3))
    cfg = SCMConfig(confounder_to_spurious_source=zero, confounder_to_spurious_target=zero)
    src = generate(cfg, "source", n=5000, seed=21)
    tgt = generate(cfg, "target", n=5000, seed=22)

    def fit(ds):
        design = sm.add_constant(ds.X[:, :3])
        return sm.Logit(ds.y, design).fit(disp=0)

    fs, ft = fit(src), fit(tgt)
    se = np.sqrt(fs.bse**2 + ft.bse**2)
    assert np.all(np.abs(fs.params - ft.params) <= 3.0 * se)


def test_csv_round_trip(tmp_path):
    ds = generate(SCMConfig(), "target", n=10, seed=9)
    path = tmp_path / "data.csv"
    write_csv(ds, path)
    back = read_csv(path)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)
    assert back.domain == ds.domain
    assert np.array_equal(back.causal_mask, ds.causal_mask)


def test_csv_accepts_maskless_file(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("x0,x1,label\n1.0,2.0,0\n3.0,4.0,1\n")
    ds = read_csv(path)
    assert ds.causal_mask is None
    assert ds.domain == "source"
    assert np.array_equal(ds.X, [[1.0, 2.0], [3.0, 4.0]])


def test_csv_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad_label.csv"
    path.write_text("x0,x1,label\n1.0,2.0,0\n3.0,4.0,oops\n")
    with pytest.raises(ParseError, match="line 3"):
        read_csv(path)

    path = tmp_path / "bad_field_count.csv"
    path.write_text("x0,x1,label\n1.0,0\n")
    with pytest.raises(ParseError, match="line 2"):
        read_csv(path)


def test_csv_format_errors(tmp_path):
    path = tmp_path / "bad_mask.csv"
    path.write_text("# causal_mask=1,banana\nx0,x1,label\n1.0,2.0,0\n")
    with pytest.raises(FormatError, match="causal_mask"):
        read_csv(path)

    path = tmp_path / "bad_header.csv"
    path.write_text("x0,x1,target\n1.0,2.0,0\n")
    with pytest.raises(ParseError, match="label"):
        read_csv(path)

    path = tmp_path / "bad_meta.csv"
    path.write_text("# hello world\nx0,label\n1.0,0\n")
    with pytest.raises(FormatError):
        read_csv(path)


def test_csv_write_is_byte_deterministic(tmp_path):
    ds = generate(SCMConfig(), "source", n=25, seed=4)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(ds, p1)
    write_csv(ds, p2)
    assert p1.read_bytes() == p2.read_bytes()
