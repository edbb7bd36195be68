import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from slay.cli import SCHEMAS, build_parser, main
from slay.formats import encode_tensor, read_csv, read_tensor, write_tensor

GOLDEN = Path(__file__).parent / "golden"


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def assert_matches_golden(text, name):
    config, rows = read_csv(text)
    g_config, g_rows = read_csv((GOLDEN / name).read_text())
    assert config == g_config
    assert list(rows[0]) == list(g_rows[0])
    assert len(rows) == len(g_rows)
    for row, g in zip(rows, g_rows):
        for key in g:
            assert float(row[key]) == pytest.approx(float(g[key]), rel=1e-12, abs=1e-15), key


def test_quadrature_two_nodes(capsys):
    code, out, _ = run_cli(capsys, "quadrature", "--r", "2", "--epsilon", "0.001")
    assert code == 0
    config, rows = read_csv(out)
    assert len(rows) == 2
    assert float(rows[0]["t"]) == pytest.approx(0.585786, abs=1e-6)
    assert float(rows[1]["t"]) == pytest.approx(3.414214, abs=1e-6)
    assert_matches_golden(out, "quadrature_r2.csv")


def test_kernel_curve_golden(capsys):
    code, out, _ = run_cli(capsys, "kernel-curve", "--epsilon", "0.1", "--r", "3", "--points", "21")
    assert code == 0
    assert_matches_golden(out, "kernel_curve_eps0.1_r3.csv")


def test_quadrature_sweep(capsys):
    code, out, _ = run_cli(capsys, "quadrature", "--epsilon", "0.1", "--sweep", "2,4")
    _, rows = read_csv(out)
    assert code == 0 and [r["r"] for r in rows] == ["2", "4"]
    assert list(rows[0]) == list(SCHEMAS["quadrature-sweep"])


def test_denominator_sweep_schema(capsys):
    code, out, _ = run_cli(capsys, "denominator-sweep", "--poly-kinds", "anchor,tensorsketch", "--pairs", "100",
                           "--seeds", "2", "--dim", "4")
    config, rows = read_csv(out)
    assert code == 0 and list(rows[0]) == list(SCHEMAS["denominator-sweep"])
    assert rows[0]["fraction_negative"] == "0.0" and rows[0]["guaranteed_nonneg"] == "true"
    assert config["pairs"] == 100


def test_bench_schema_and_statuses(capsys):
    code, out, _ = run_cli(capsys, "bench", "--mechanisms", "slay,spherical-yat,cosformer", "--lengths", "16,32",
                           "--d-model", "16", "--heads", "2", "--reps", "1", "--warmup", "0",
                           "--quadratic-l-max", "16")
    _, rows = read_csv(out)
    assert code == 0 and list(rows[0]) == list(SCHEMAS["bench"])
    status = {(r["mechanism"], r["L"]): r["status"] for r in rows}
    assert status[("spherical-yat", "32")] == "capped"
    assert status[("slay", "32")] == "ok"
    assert ("cosformer-style", "16") in status


def test_bench_deterministic_omits_timings(capsys):
    code, out, _ = run_cli(capsys, "--deterministic", "bench", "--mechanisms", "slay", "--lengths", "16",
                           "--d-model", "8", "--heads", "2")
    _, rows = read_csv(out)
    assert rows[0]["latency_ms"] == "NA" and rows[0]["peak_aux_bytes"] == "NA"


def test_ablate_poly_schema(capsys, monkeypatch):
    from slay import analysis

    monkeypatch.setitem(analysis.SCALES, "small", analysis.AblationScale("small", 16, 2, 4, 4))
    code, out, _ = run_cli(capsys, "--deterministic", "ablate-poly", "--scale", "small", "--seeds", "1",
                           "--variants", "exact,anchor")
    _, rows = read_csv(out)
    assert code == 0 and list(rows[0]) == list(SCHEMAS["ablate-poly"])
    code, out, _ = run_cli(capsys, "--deterministic", "ablate-poly", "--scale", "small", "--seeds", "2",
                           "--variants", "anchor", "--summary")
    _, rows = read_csv(out)
    assert list(rows[0]) == list(SCHEMAS["ablate-poly-summary"]) and rows[0]["seeds"] == "2"


def test_help_documents_schemas():
    text = build_parser().format_help()
    for name, cols in SCHEMAS.items():
        assert f"{name}: {', '.join(cols)}" in text


def test_flags_after_subcommand(tmp_path, capsys):
    assert main(["quadrature", "--r", "1", "--out", str(tmp_path / "a.csv")]) == 0
    assert main(["--out", str(tmp_path / "b.csv"), "quadrature", "--r", "1"]) == 0
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_attn_single_token_returns_values(tmp_path, capsys):
    g = np.random.default_rng(0)
    for name in "qkv":
        write_tensor(tmp_path / f"{name}.bin", g.standard_normal((1, 4)))
    (tmp_path / "default.json").write_text(json.dumps({"delta": 0.0}))
    code, _, _ = run_cli(capsys, "attn", "--mechanism", "slay", "--config", str(tmp_path / "default.json"),
                         "--q", str(tmp_path / "q.bin"), "--k", str(tmp_path / "k.bin"),
                         "--v", str(tmp_path / "v.bin"), "--out", str(tmp_path / "y.bin"))
    assert code == 0
    y, v = read_tensor(tmp_path / "y.bin"), read_tensor(tmp_path / "v.bin")
    np.testing.assert_allclose(y, v, rtol=1e-12)


def test_attn_keeps_float32(tmp_path, capsys):
    g = np.random.default_rng(1)
    for name in "qkv":
        write_tensor(tmp_path / f"{name}.bin", g.standard_normal((5, 4)).astype(np.float32))
    code, _, _ = run_cli(capsys, "attn", "--mechanism", "elu1", "--causal", "--q", str(tmp_path / "q.bin"),
                         "--k", str(tmp_path / "k.bin"), "--v", str(tmp_path / "v.bin"),
                         "--out", str(tmp_path / "y.bin"))
    assert code == 0 and read_tensor(tmp_path / "y.bin").dtype == np.float32


def test_exit_codes(tmp_path, capsys):
    write_tensor(tmp_path / "ok.bin", np.ones((2, 3)))
    (tmp_path / "bad.bin").write_bytes(b"JUNK" + encode_tensor(np.ones((2, 3)))[4:])
    (tmp_path / "bad.json").write_text(json.dumps({"r": 0}))
    write_tensor(tmp_path / "nan.bin", np.array([[np.nan, 1.0, 1.0], [1.0, 1.0, 1.0]]))
    ok = str(tmp_path / "ok.bin")

    def attn(*extra, q=ok):
        return main(["attn", "--mechanism", "slay", "--q", q, "--k", ok, "--v", ok, "--out", str(tmp_path / "y.bin"), *extra])

    assert main(["frobnicate"]) == 1
    assert main(["attn", "--mechanism", "performer", "--q", ok, "--k", ok, "--v", ok]) == 1
    assert main(["bench", "--mechanisms", "performer"]) == 1
    assert attn(q=str(tmp_path / "bad.bin")) == 2
    assert attn(q=str(tmp_path / "missing.bin")) == 2
    assert attn("--config", str(tmp_path / "bad.json")) == 3
    assert attn(q=str(tmp_path / "nan.bin")) == 4
    assert main(["quadrature", "--r", "65"]) == 3
    capsys.readouterr()


def test_seed_override_order(tmp_path, capsys, monkeypatch):
    from slay.cli import load_config

    (tmp_path / "c.json").write_text(json.dumps({"seed": 3}))
    args = build_parser().parse_args(["attn", "--mechanism", "slay", "--q", "a", "--k", "b", "--v", "c",
                                      "--config", str(tmp_path / "c.json")])
    assert load_config(args).seed == 3
    monkeypatch.setenv("SLAY_SEED", "17")
    assert load_config(args).seed == 17
    args.seed = 5
    assert load_config(args).seed == 5
    monkeypatch.setenv("SLAY_SEED", "x")
    args.seed = None
    from slay.errors import ConfigError
    with pytest.raises(ConfigError):
        load_config(args)


def test_seed_env_changes_output(tmp_path, monkeypatch, capsys):
    g = np.random.default_rng(2)
    for name in "qkv":
        write_tensor(tmp_path / f"{name}.bin", g.standard_normal((6, 4)))
    paths = ["--q", str(tmp_path / "q.bin"), "--k", str(tmp_path / "k.bin"), "--v", str(tmp_path / "v.bin")]
    outs = []
    for seed in ("1", "1", "2"):
        monkeypatch.setenv("SLAY_SEED", seed)
        main(["attn", "--mechanism", "slay", *paths, "--out", str(tmp_path / f"y{len(outs)}.bin")])
        outs.append((tmp_path / f"y{len(outs)}.bin").read_bytes())
    assert outs[0] == outs[1] and outs[0] != outs[2]


def test_selftest_list_and_only(capsys):
    code, out, _ = run_cli(capsys, "selftest", "--list")
    assert code == 0 and "kernels.boundedness" in out
    code, out, _ = run_cli(capsys, "selftest", "--only", "kernels.boundedness,tensor.eigh-trace")
    _, rows = read_csv(out)
    assert code == 0 and [r["status"] for r in rows] == ["pass", "pass"]
    assert main(["selftest", "--only", "no.such-check"]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "slay", "quadrature", "--r", "1"], capture_output=True, text=True)
    assert res.returncode == 0
    _, rows = read_csv(res.stdout)
    assert float(rows[0]["t"]) == pytest.approx(1.0, abs=1e-15)
