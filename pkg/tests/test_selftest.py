import pytest

from slay.selftest import REGISTRY, run_checks

QUICK = [name for name, chk in REGISTRY.items() if not chk.slow]
SLOW = [name for name, chk in REGISTRY.items() if chk.slow]


def test_every_module_has_checks():
    prefixes = {name.split(".")[0] for name in REGISTRY}
    assert {"tensor", "kernels", "quadrature", "features", "linear", "baselines", "analysis", "cli", "bench"} <= prefixes


@pytest.mark.parametrize("name", QUICK)
def test_quick_check_passes(name):
    (res,) = run_checks([name])
    assert res.status == "pass", res.detail


@pytest.mark.slow
@pytest.mark.parametrize("name", [n for n in SLOW if n not in ("bench.scaling-separation", "linear.complexity-contract")])
def test_slow_check_passes(name):
    (res,) = run_checks([name])
    assert res.status == "pass", res.detail


def test_quick_mode_skips_slow_checks():
    res = run_checks(SLOW, quick=True)
    assert all(r.status == "skip" for r in res)


def test_unknown_check_name():
    with pytest.raises(KeyError):
        run_checks(["nope"])
