"""Smoke test for the stancesim Python bindings.

Build first:  pip install --no-build-isolation ./crates/python
Run:          python3 python/smoke_test.py
"""

import tempfile
from pathlib import Path

import stancesim_py as ss


def small(**kw):
    return ss.RunConfig(users=30, items=600, steps=5, **kw)


def check_config():
    cfg = small(scenario=3, moderator="sd", alpha=1, seed=7)
    assert cfg.scenario == 3 and cfg.moderator == "sd" and cfg.seed == 7
    again = ss.RunConfig(cfg.to_toml())
    assert again.run_id == cfg.run_id
    try:
        ss.RunConfig(moderator="bogus")
    except ValueError:
        pass
    else:
        raise AssertionError("bad moderator accepted")


def check_run():
    a = ss.run(small(moderator="rr", seed=3))
    b = ss.run(small(moderator="rr", seed=3))
    assert a.metrics == b.metrics, "runs are not deterministic"
    assert 0.0 <= a.metrics["ctr"] <= 1.0
    assert len(a.step_metrics()) == 5
    log = a.log()
    assert log and {r[0] for r in log} == set(range(1, 6))
    start = a.initial_preferences()
    assert len(start) == 30 and all(abs(sum(p) - 1.0) < 1e-9 for p in start)
    end = a.final_preferences()
    assert all(sum(e) >= sum(s) - 1e-12 for s, e in zip(start, end))
    with tempfile.TemporaryDirectory() as tmp:
        run_dir = Path(a.write(tmp))
        for name in ("config.toml", "log.csv", "steps.csv", "manifest.json"):
            assert (run_dir / name).exists(), name


def check_metrics():
    assert ss.jsd_overall([1 / 3] * 3) < 1e-12
    assert abs(ss.jsd_overall([1.0, 0.0, 0.0]) - ss.jsd_overall([0.0, 0.0, 1.0])) < 1e-12
    assert ss.jsd_group([[1 / 3] * 3, [1 / 3] * 3]) < 1e-12
    assert ss.ums([[0.5, 0.0, 0.5]] * 4) == 0.0
    t, df, p, stars = ss.welch_t([1.0, 1.1, 0.9, 1.0], [2.0, 2.1, 1.9, 2.0])
    assert p < 0.01 and stars == "**"
    pos, neg, p = ss.sign_test([1.0] * 10)
    assert (pos, neg) == (10, 0) and p < 0.01


def check_moderators():
    slates = [[0, 1], [0, 2], [0, 3]]
    out, hamming = ss.kc_moderate(slates, n_items=6, lambda_=0.5, seed=1)
    assert len(out) == 3 and all(len(set(s)) == 2 for s in out)
    assert hamming == sum(len(set(a) - set(b)) for a, b in zip(slates, out)) * 2
    assert sum(s.count(0) for s in out) < 3
    out, quota = ss.rr_moderate(slates, n_items=6)
    assert quota >= 1 and all(len(set(s)) == 2 for s in out)
    assert sum(s.count(0) for s in out) <= quota

    block = [[5, 5, 0, 0], [5, 5, 0, 0], [0, 0, 5, 5], [0, 0, 5, 5]]
    users, items, _ = ss.cocluster(block, n_clusters=2, seed=1)
    assert users[0] == users[1] != users[2] == users[3]
    assert items[0] == items[1] != items[2] == items[3]


def check_sweep():
    configs = [small(moderator=m, seed=s) for m in ("none", "rr") for s in (1, 2)]
    with tempfile.TemporaryDirectory() as tmp:
        rows = ss.sweep(configs, workers=1, out=tmp)
        assert len(rows) == 4
        table = ss.analyze(Path(tmp) / "summary.csv", Path(tmp) / "agg.csv")
        assert len(table) == 2


if __name__ == "__main__":
    for check in (check_config, check_run, check_metrics, check_moderators, check_sweep):
        check()
        print(f"ok  {check.__name__}")
    print(f"stancesim_py {ss.__version__}: all smoke checks passed")
