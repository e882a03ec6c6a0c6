import io
import json
from importlib import resources

import pytest

from otpbox import bench, cli, otp
from otpbox.errors import InputError, ResourceLimit
from otpbox.genomics import brca1_table
from otpbox.plotting import plot_rows
from otpbox.teesim import measured_launch

SAMPLE = str(resources.files("otpbox.data").joinpath("ancestry_sample.txt"))


def run(*argv):
    out = io.StringIO()
    code = cli.main([str(a) for a in argv], out=out)
    return code, out.getvalue()


# -- recommend ---------------------------------------------------------------------------

@pytest.mark.parametrize("vendor, client, expected", [
    (880, 22_447_296, "TXT-only"),
    (88_000, 224, "GC-based"),
    (880, 224, "TXT-only"),
    (8_800, 224_000, "GC-based"),
    (8_799, 224, "TXT-only"),
    (88_000, 224_001, "TXT-only"),
])
def test_recommend(vendor, client, expected):
    assert bench.recommend(vendor, client) == expected


def test_recommend_rejects_non_positive():
    with pytest.raises(InputError):
        bench.recommend(0, 224)


# -- sweeps --------------------------------------------------------------------------------

def test_txt_client_sweep_constant_seals():
    rows = bench.bench_sweep("txt", "client", bench.CLIENT_SWEEP)
    assert [r.seal_ops for r in rows] == [22] * 4
    assert [r.client_bits for r in rows] == list(bench.CLIENT_SWEEP)


def test_txt_vendor_sweep_scales():
    rows = bench.bench_sweep("txt", "vendor", bench.VENDOR_SWEEP)
    assert [r.seal_ops for r in rows] == [22, 220, 2200]
    assert [r.unseal_ops for r in rows] == [22, 220, 2200]


def test_gc_client_sweep_small():
    rows = bench.bench_sweep("gc", "client", [224, 2240])
    assert [r.pairs for r in rows] == [224, 2240]
    assert all(r.garbled for r in rows)
    assert rows[0].gate_count < rows[1].gate_count
    assert all(r.seal_ops == 2 for r in rows)


def test_gc_count_only_row_above_budget():
    (row,) = bench.bench_sweep("gc", "vendor", [8800], fixed_client_bits=224, garble_budget=10)
    assert not row.garbled and row.result is None
    assert row.pairs == 224 and row.seal_ops == 2
    assert row.gate_count == bench.genomic_gate_count(220, 7)


def test_seal_all_sweep_counts_pairs():
    (row,) = bench.bench_sweep("gc", "client", [224], mode="seal-all", chunk=8)
    assert row.seal_ops == 224 and row.unseal_ops == 224


def test_identical_runs_identical_counts():
    a = bench.bench_sweep("gc", "client", [224], seed=5)
    b = bench.bench_sweep("gc", "client", [224], seed=5)
    assert [r.counts() for r in a] == [r.counts() for r in b]


def test_caps_and_bad_sizes():
    with pytest.raises(ResourceLimit):
        bench.bench_sweep("txt", "client", [22_400_000])
    with pytest.raises(ResourceLimit):
        bench.bench_sweep("txt", "client", [30_000_000], big=True)
    with pytest.raises(InputError):
        bench.bench_sweep("txt", "client", [100])
    with pytest.raises(InputError):
        bench.bench_sweep("txt", "sideways", [224])
    with pytest.raises(InputError):
        bench.bench_sweep("quantum", "client", [224])


def test_virtual_latency_ratio():
    rows = bench.bench_sweep("txt", "vendor", [880, 8800], latency_ms=500)
    assert rows[1].provision_ms / rows[0].provision_ms == pytest.approx(10, rel=0.1)


def test_real_sleep_latency_ratio():
    rows = bench.bench_sweep("txt", "vendor", [880, 8800], latency_ms=5, virtual_clock=False)
    assert rows[1].provision_ms / rows[0].provision_ms == pytest.approx(10, rel=0.1)


# -- rendering -------------------------------------------------------------------------------

def test_csv_round_trip_and_column_order():
    rows = bench.bench_sweep("gc", "client", [224])
    text = bench.render_rows(rows, "csv")
    assert text.splitlines()[0].split(",") == bench.COLUMNS
    assert bench.read_csv_rows(text) == rows


def test_table_and_json():
    rows = bench.bench_sweep("txt", "client", [224])
    table = bench.render_rows(rows, "table")
    assert table.splitlines()[0].split() == bench.COLUMNS
    assert json.loads(bench.render_rows(rows, "json"))[0]["seal_ops"] == 22
    with pytest.raises(InputError):
        bench.render_rows(rows, "xml")


def test_plot_writes_png(tmp_path):
    rows = bench.bench_sweep("txt", "vendor", [880, 8800])
    path = plot_rows(rows, tmp_path / "f.png")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


# -- CLI ------------------------------------------------------------------------------------------

def test_cli_txt_flow(tmp_path):
    client = tmp_path / "client.hex"
    box = tmp_path / "box"
    assert run("preprocess", SAMPLE, "-o", client)[0] == 0
    assert client.read_text() == client.read_text().lower()
    assert run("provision-txt", "--box", box)[0] == 0
    code, out = run("run-txt", "--box", box, "--client", client)
    assert code == 0 and "risk_deci 90" in out
    code, _ = run("run-txt", "--box", box, "--client", client)
    assert code == 3


def test_cli_gc_flow(tmp_path):
    client = tmp_path / "client.hex"
    box = tmp_path / "box"
    run("preprocess", SAMPLE, "-o", client)
    assert run("gc-gen", "--box", box, "--client", client, "--seed", 1)[0] == 0
    assert (box / "gc" / "pairs.plain").exists()
    assert run("gc-provision", "--box", box, "--mode", "seal-all", "--chunk", 4)[0] == 0
    assert not (box / "gc" / "pairs.plain").exists()
    assert run("gc-select", "--box", box, "--client", client)[0] == 0
    code, out = run("gc-evl", "--box", box)
    assert code == 0 and "risk_deci 90" in out
    assert run("gc-select", "--box", box, "--client", client)[0] == 3
    # provisioning again without --reprovision is refused
    run("gc-gen", "--box", box, "--client", client)
    assert run("gc-provision", "--box", box)[0] == 10


def test_cli_custom_circuit(tmp_path):
    circ = tmp_path / "and.txt"
    circ.write_text("wires 3\ngen_in 0\nevl_in 1\nout 2\nAND 0 1 -> 2\n")
    code, out = run("gc-gen", "--box", tmp_path / "b", "--circuit", circ, "--gen-bits", "1")
    assert code == 0 and "1 evaluator pairs" in out


def test_cli_env_box(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.BOX_ENV, str(tmp_path / "envbox"))
    assert run("provision-txt")[0] == 0
    assert (tmp_path / "envbox" / "txt" / "vendor.sealed").exists()


def test_cli_exit_codes(tmp_path):
    assert run("recommend", "--vendor-bits", 88000, "--client-bits", 224) == (0, "GC-based\n")
    assert run("bench", "--variant", "txt", "--sweep", "client", "--sizes", 30_000_000)[0] == 8
    assert run("run-txt", "--box", tmp_path, "--client", tmp_path / "missing")[0] == 5
    bad = tmp_path / "bad.txt"
    bad.write_text("rsid\tchromosome\tposition\tallele1\tallele2\nrs1\t1\t1\tA\tQ\n")
    assert run("preprocess", bad)[0] == 5
    with pytest.raises(SystemExit) as info:
        run("frobnicate")
    assert info.value.code == 2


def test_cli_policy_mismatch_code(tmp_path):
    # a box provisioned by a different program cannot be run by ours
    box = otp.Box(tmp_path)
    client = tmp_path / "client.hex"
    run("preprocess", SAMPLE, "-o", client)
    state = box.state()
    with measured_launch(state, b"other vendor program", mode="provision") as s:
        otp.txt_provision(s, brca1_table(), box.txt_dir)
    assert run("run-txt", "--box", tmp_path, "--client", client)[0] == 4


def test_cli_bench_outputs(tmp_path):
    code, out = run("bench", "--variant", "txt", "--sweep", "vendor", "--format", "csv",
                    "--latency-ms", 500, "--virtual-clock", "--out-dir", tmp_path)
    assert code == 0
    rows = bench.read_csv_rows(out)
    assert [r.seal_ops for r in rows] == [22, 220, 2200]
    assert (tmp_path / "bench-txt-vendor.csv").read_text() == out
    assert (tmp_path / "bench-txt-vendor.png").stat().st_size > 0


def test_cli_preprocess_vendor():
    code, out = run("preprocess", "--vendor-table")
    assert code == 0 and len(out.strip()) * 4 == 880
