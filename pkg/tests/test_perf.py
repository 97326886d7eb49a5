import numpy as np
import pytest
from hypothesis import given, strategies as st

from ditnano.arch_plan import DitConfig, count_params
from ditnano.errors import FitError, FormatError, ValidationError
from ditnano.perf.flops import count_flops, flop_breakdown
from ditnano.perf.latency import features, fit_latency
from ditnano.perf.pareto import dominates, frontier_indices, pareto_frontier
from ditnano.perf.results import (
    DesignPoint,
    bundled_table,
    format_results,
    frontier_gnuplot,
    load_results_csv,
    parse_results,
    write_results_csv,
)
from oracles import brute_frontier

CFGS = [DitConfig(d, w, h) for d, w, h in [(1, 128, 8), (5, 64, 8), (7, 128, 8), (3, 192, 12), (16, 128, 8)]]


def point(name, params, latency, fid, cfg=DitConfig(2, 32, 4)):
    return DesignPoint(name, cfg, params, latency, fid)


# ---------------------------------------------------------------- flops
def per_layer_flops(cfg):
    """Spreadsheet-style tabulation: one row per linear layer plus attention products."""
    n, w, h, pd, hid = cfg.num_tokens, cfg.width, cfg.heads, cfg.patch_dim, cfg.mlp_hidden
    linear = lambda rows, fan_in, fan_out: 2 * rows * (fan_in * fan_out + fan_out)
    total = linear(n, pd, w) + linear(1, 256, w) + linear(1, w, w)
    block = (
        linear(n, w, 3 * w) + linear(n, w, w) + linear(n, w, hid) + linear(n, hid, w) + linear(n, w, 6 * w)
        + 2 * n * n * w  # scores
        + 2 * n * n * w  # weighted values
        + 2 * n * n * h  # softmax overhead per head
    )
    total += cfg.depth * block
    total += linear(n, w, 2 * w) + linear(n, w, pd)
    return total


def test_flops_match_tabulation():
    for cfg in CFGS + [DitConfig(2, 96, 8), DitConfig(21, 32, 4), DitConfig(4, 256, 16)]:
        assert count_flops(cfg) == per_layer_flops(cfg)


def test_flops_degenerate_hand_count():
    cfg = DitConfig(1, 1, 1, patch_size=32, num_classes=0)
    patch = 2 * (3072 * 1 + 1)
    timestep = 2 * (256 + 1 + 1 + 1)
    block = 2 * (18 + 15) + 4 + 2
    head = 2 * (2 + 2 + 3072 + 3072)
    assert count_flops(cfg) == patch + timestep + block + head == 19_032


def test_flops_linear_in_depth_and_increasing():
    a, b = flop_breakdown(DitConfig(3, 64, 8)), flop_breakdown(DitConfig(6, 64, 8))
    assert b.blocks == 2 * a.blocks and b.per_block == a.per_block
    for d in range(1, 6):
        assert count_flops(DitConfig(d, 64, 8)) < count_flops(DitConfig(d + 1, 64, 8))
    for w in (8, 16, 24, 32, 48, 64):
        assert count_flops(DitConfig(3, w, 4)) < count_flops(DitConfig(3, w + 8, 4))


def test_flop_order_within_param_classes():
    rows = bundled_table("table5")[:12]
    for size in (420_000, 2_200_000, 5_000_000):
        group = [p.cfg for p in rows if p.params == size]
        ours = sorted(range(len(group)), key=lambda i: count_flops(group[i]))
        reference = sorted(range(len(group)), key=lambda i: per_layer_flops(group[i]))
        assert ours == reference


# ---------------------------------------------------------------- pareto
objective = st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))


@given(st.lists(objective, min_size=1, max_size=200))
def test_frontier_matches_oracle(objs):
    assert frontier_indices(objs) == brute_frontier(objs)


def test_frontier_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 201))
        objs = [tuple(v) for v in rng.integers(1, 20, size=(n, 3)).astype(float)]
        front = frontier_indices(objs)
        assert front == brute_frontier(objs)
        sub = [objs[i] for i in front]
        assert frontier_indices(sub) == list(range(len(sub)))
        assert not any(dominates(o, f) for o in objs for f in sub)


def test_frontier_basic_cases():
    p = point("a", 10, 1.0, 5.0)
    assert pareto_frontier([p]) == [p]
    q = point("b", 10, 1.0, 5.0)
    assert pareto_frontier([p, q]) == [p, q]
    worse = point("c", 11, 1.0, 5.0)
    assert pareto_frontier([worse, p]) == [p]


def test_bundled_frontier_and_latency_minimum():
    pts = bundled_table("table2") + bundled_table("table5")
    front = pareto_frontier(pts)
    assert [pts.index(f) for f in front] == brute_frontier([p.objectives for p in pts])
    fastest = min(pts, key=lambda p: p.latency)
    assert (fastest.cfg.depth, fastest.cfg.width, fastest.latency) == (1, 128, 97.5)
    assert fastest in front


# ---------------------------------------------------------------- results
def test_bundled_tables_parse():
    t5 = bundled_table("table5")
    assert len(t5) == 13 and len({p.name for p in t5}) == 13
    assert all(p.inception is not None for p in t5)
    assert [(p.cfg.depth, p.cfg.width, p.cfg.heads) for p in bundled_table("table2")] == [
        (1, 128, 8), (2, 96, 8), (5, 64, 4), (5, 64, 8), (9, 48, 6), (21, 32, 4)
    ]


def test_bundled_params_column_is_nominal():
    for p in bundled_table("table5"):
        assert abs(count_params(p.cfg).total - p.params) <= 0.05 * p.params


def test_results_roundtrip(tmp_path):
    pts = bundled_table("table5") + [point("odd", 123, 0.1 + 0.2, 1 / 3)]
    write_results_csv(tmp_path / "r.csv", pts)
    back = load_results_csv(tmp_path / "r.csv")
    assert back == pts
    assert format_results(back) == (tmp_path / "r.csv").read_text()


@pytest.mark.parametrize(
    "row,err,line",
    [
        ("x,1,32,4,100,0,5", ValidationError, 3),
        ("x,1,32,4,100,1.5,-2", ValidationError, 3),
        ("x,1,30,4,100,1.5,2", ValidationError, 3),
        ("x,one,32,4,100,1.5,2", FormatError, 3),
        ("x,1,32,4,100,1.5", FormatError, 3),
    ],
)
def test_row_errors_carry_line_numbers(row, err, line):
    text = "name,d,w,h,params,latency_s,fid\nok,1,32,4,100,1.0,2.0\n" + row + "\n"
    with pytest.raises(err, match=f"line {line}"):
        parse_results(text)


def test_bad_header():
    with pytest.raises(FormatError, match="header"):
        parse_results("name,depth\n")


def test_gnuplot_table():
    text = frontier_gnuplot([point("a", 5, 2.0, 3.0)])
    assert text.splitlines() == ["# params latency_s fid name", "5 2.0 3.0 a"]


# ---------------------------------------------------------------- latency
def test_fit_recovers_known_coefficients():
    rng = np.random.default_rng(0)
    cfgs = [DitConfig(int(d), int(w), 4, image_size=int(s)) for d, w, s in zip(
        rng.integers(1, 20, 30), rng.choice([16, 32, 48, 64, 96, 128], 30), rng.choice([8, 16, 32], 30))]
    for heads in (False, True):
        true = np.array([50.0, 3.0, 2e-6, 5e-6, 1e-4][: 5 if heads else 4])
        pts = [point(f"p{i}", 100, float(features(c, heads) @ true), 1.0, c) for i, c in enumerate(cfgs)]
        model = fit_latency(pts, heads_term=heads)
        np.testing.assert_allclose(model.coefficients, true, rtol=1e-6)
        assert model.spearman == pytest.approx(1.0)


def test_fit_needs_five_points():
    pts = bundled_table("table5")[:4]
    with pytest.raises(FitError):
        fit_latency(pts)


def test_fit_reports_deficient_terms():
    # constant width and tokens: d, d*N*w^2 and d*N^2*w are collinear
    pts = [point(f"p{d}", 100, 10.0 + d, 1.0, DitConfig(d, 32, 4)) for d in range(1, 7)]
    with pytest.raises(FitError) as info:
        fit_latency(pts)
    assert set(info.value.deficient_terms) == {"d", "d*N*w^2", "d*N^2*w"}


def test_table5_fit_quality_and_ordering():
    rows = bundled_table("table5")[:12]
    plain, with_heads = fit_latency(rows), fit_latency(rows, heads_term=True)
    assert plain.spearman >= 0.9 and with_heads.spearman >= 0.9
    small = rows[:6]  # wider, wide, lower heads, proposed, deep, deeper
    pred = with_heads.predict_many([p.cfg for p in small])
    assert all(a < b for a, b in zip(pred, pred[1:]))
    base = plain.predict_many([p.cfg for p in small])
    distinct_dw = [0, 1, 3, 4, 5]
    assert all(base[a] < base[b] for a, b in zip(distinct_dw, distinct_dw[1:]))
    assert base[2] == pytest.approx(base[3])
    assert all(with_heads.predict(p.cfg) > 0 for p in rows)
