import io
import json
import math

import pytest

from mbtorsion.experiments import (
    CSV_HEADER,
    ExperimentError,
    SweepConfig,
    SweepRow,
    fit_rate,
    lemma1_scaling,
    read_csv,
    run_sweep,
    verify_lemma1,
    verify_prop1,
    verify_theorem1,
    write_csv,
)
from mbtorsion.geometry import DomainSpec, ObstacleSpec

DISK, UNIT_DISK = DomainSpec("disk", (1.0,)), ObstacleSpec("disk", (1.0,))
BALL, UNIT_BALL = DomainSpec("ball", (2.0,)), ObstacleSpec("ball", (1.0,))


def synthetic(products, eps, m=2, path="oracle"):
    return [
        SweepRow(e, 0.0, p, 1.0, p, lemma1_scaling(e, m) * p, 0.0, path) for e, p in zip(eps, products)
    ]


@pytest.fixture(scope="module")
def sweep2():
    cfg = SweepConfig(2, DISK, UNIT_DISK, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    return run_sweep(cfg)


@pytest.fixture(scope="module")
def sweep3():
    cfg = SweepConfig(3, BALL, UNIT_BALL, [1e-1, 1e-2, 1e-3, 1e-4])
    return run_sweep(cfg)


def test_oracle_sweep_rows(sweep2):
    assert [r.epsilon for r in sweep2] == [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    assert all(not r.failed and r.path == "oracle" for r in sweep2)
    prods = [r.product for r in sweep2]
    assert all(p >= 1 for p in prods) and prods == sorted(prods, reverse=True)


def test_theorem_on_oracle_sweeps(sweep2, sweep3):
    for rows, m in ((sweep2, 2), (sweep3, 3)):
        rep = verify_theorem1(rows, m)
        assert rep.passed, rep.lines()


def test_lemma_on_oracle_sweeps(sweep2, sweep3):
    assert verify_lemma1(sweep2, 2, None, math.pi).passed
    cap, vol = 4 * math.pi, 4 * math.pi * 8 / 3
    rep = verify_lemma1(sweep3, 3, cap, vol)
    assert rep.passed, rep.lines()
    # a doubled capacity is still an upper bound but is no longer attained
    rep2 = verify_lemma1(sweep3, 3, 2 * cap, vol)
    assert rep2.checks["upper limit"] and not rep2.checks["limit attained"]


def test_csv_round_trip(sweep2, tmp_path):
    path = tmp_path / "rows.csv"
    write_csv(sweep2, path)
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = read_csv(path)
    assert [(r.epsilon, r.lam, r.sup_u, r.product) for r in back] == [
        (r.epsilon, r.lam, r.sup_u, r.product) for r in sweep2
    ]
    path2 = tmp_path / "again.csv"
    write_csv(back, path2)
    assert path2.read_text() == text
    buf = io.StringIO()
    write_csv(sweep2, buf)
    assert buf.getvalue() == text


def test_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("eps,lambda\n0.1,1\n")
    with pytest.raises(ExperimentError):
        read_csv(path)


def test_fit_recovers_synthetic_power_law():
    eps = [10.0**-k for k in range(1, 7)]
    rows = synthetic([1 + 0.3 * e**0.5 for e in eps], eps, m=3)
    fit = fit_rate(rows, "power")
    assert fit.p == pytest.approx(0.5, abs=1e-10)
    assert fit.C == pytest.approx(0.3, rel=1e-10)
    assert fit.residual <= 1e-10


def test_fit_needs_four_points():
    eps = [1e-1, 1e-2, 1e-3]
    with pytest.raises(ExperimentError):
        fit_rate(synthetic([1.1, 1.01, 1.001], eps), "power")
    with pytest.raises(ExperimentError):
        fit_rate(synthetic([1.1, 1.01, 1.001, 1.0001], eps + [1e-4]), "quadratic")


def test_theorem_fails_on_slow_rate():
    eps = [10.0**-k for k in range(2, 8)]
    prods = [1 + 0.1 * math.log(1 / e) ** -0.2 for e in eps]
    rep = verify_theorem1(synthetic(prods, eps), 2)
    assert rep.checks["(a) lower bound"] and rep.checks["(b) monotone limit"]
    assert not rep.checks["(c) rate"]
    assert "theorem1 (c) rate: FAIL" in rep.lines()


def test_theorem_fails_below_one():
    eps = [10.0**-k for k in range(2, 7)]
    prods = [1.2, 1.1, 0.98, 1.05, 1.01]
    rep = verify_theorem1(synthetic(prods, eps), 2)
    assert not rep.checks["(a) lower bound"]
    assert rep.unexpected_failures


def test_config_validation():
    with pytest.raises(ExperimentError):
        SweepConfig(2, DISK, UNIT_DISK, [1e-3, 1e-2])
    with pytest.raises(ExperimentError):
        SweepConfig(2, DISK, UNIT_DISK, [1e-2], path="fast")
    with pytest.raises(ExperimentError):
        SweepConfig(3, DISK, UNIT_DISK, [1e-2])
    with pytest.raises(ExperimentError):
        SweepConfig(2, DISK, UNIT_DISK, [2.0])
    assert run_sweep(SweepConfig(2, DISK, UNIT_DISK, [])) == []


def test_config_from_json():
    text = json.dumps(
        {"dimension": 2, "domain": "disk:r=1", "obstacle": "disk:r=1", "epsilons": [0.1, 0.01], "h_rule": "eps/4"}
    )
    cfg = SweepConfig.from_json(text)
    assert cfg.epsilons == [0.1, 0.01] and cfg.path == "oracle"
    assert cfg.grid_h(0.1) == pytest.approx(0.025)


def test_failed_point_is_recorded():
    # the oracle path needs concentric balls, so a square domain fails per row
    cfg = SweepConfig(2, DomainSpec("square", (2.0,)), UNIT_DISK, [0.1, 0.05])
    rows = run_sweep(cfg)
    assert len(rows) == 2 and all(r.failed for r in rows)
    assert all(math.isnan(r.product) for r in rows)


def test_grid_and_oracle_agree():
    cfg = SweepConfig(2, DISK, UNIT_DISK, [0.04, 0.02], h_rule="eps/4", path="both", workers=2)
    rows = run_sweep(cfg)
    by_path = {(r.epsilon, r.path): r for r in rows}
    for eps in (0.04, 0.02):
        g, o = by_path[eps, "grid"], by_path[eps, "oracle"]
        assert not g.failed
        assert g.lam == pytest.approx(o.lam, rel=0.02)
        assert g.sup_u == pytest.approx(o.sup_u, rel=0.02)
        assert g.product >= 1 - 5 / 64


@pytest.mark.parametrize("shape", [DomainSpec("square", (1.0,)), DomainSpec("rect", (2.0, 0.5))])
def test_prop1_on_connected_domains(shape):
    rep = verify_prop1(shape, 1 / 16)
    assert rep.passed, rep.lines()


def test_prop1_negative_control():
    rep = verify_prop1(DomainSpec("twosquares", (1.0, 0.5)), 1 / 16)
    assert not rep.passed
    assert rep.unexpected_failures == []
    verdicts = [line for line in rep.lines() if line.startswith("prop1")]
    assert len(verdicts) == 3 and all(line.endswith("FAIL (expected)") for line in verdicts)
