import random
import shutil

import pytest
from _support import gc_box, launch, txt_box

from otpbox import otm, otp
from otpbox.circuit import client_bits, compile_genomic
from otpbox.errors import (DecryptionFailure, EmptyVendorInput, OneTimeViolation,
                           PolicyMismatch, SessionRequired)
from otpbox.garble import GarbledCircuit, KeyFile
from otpbox.genomics import SnpRecord, allele_code, brca1_table, random_client, risk_plain

HIT_CLIENT = [SnpRecord(28897696, allele_code("AA")), SnpRecord(4986850, allele_code("AA")),
              SnpRecord(15842, allele_code("AG"))]


def run_txt(box, state, client):
    image = otp.TxtOnlyImage.load(box.txt_dir)
    with launch(state, otp.TXT_PAYLOAD, otp.EXECUTE) as s:
        return otp.txt_execute(s, image, client, box.txt_dir / "result.txt")


def run_gc(box, state, image, client):
    s = launch(state, otp.GC_SELECT_PAYLOAD, otp.EXECUTE)
    return otp.gc_run(s, box.gc_file, image, client_bits(client), box.keys_file,
                      box.gc_dir / "result.txt")


def test_txt_provision_counts(tmp_path):
    box = otp.Box(tmp_path)
    state = box.state()
    with launch(state, otp.TXT_PAYLOAD, otp.PROVISION) as s:
        state.reset_counters()
        image = otp.txt_provision(s, brca1_table(), box.txt_dir)
    assert state.ops["seal"] == 22
    assert state.ops["nv_define"] == 1
    assert len(image.sealed_vendor_records) == 22
    assert all(len(b.to_bytes()) == 322 for b in image.sealed_vendor_records)
    loaded = otp.TxtOnlyImage.load(box.txt_dir)
    assert loaded.sealed_vendor_records == image.sealed_vendor_records
    assert loaded.payload_digest == image.payload_digest


def test_txt_empty_vendor(tmp_path):
    box = otp.Box(tmp_path)
    state = box.state()
    with launch(state, otp.TXT_PAYLOAD, otp.PROVISION) as s:
        with pytest.raises(EmptyVendorInput):
            otp.txt_provision(s, [], box.txt_dir)


def test_txt_execute_fixture(tmp_path):
    box, state, _ = txt_box(tmp_path, brca1_table())
    result = run_txt(box, state, HIT_CLIENT)
    assert result.decoded == 90
    assert result.output_bits == format(90, "016b")
    assert result.exposure == 1
    assert "risk_deci 90" in (box.txt_dir / "result.txt").read_text()
    with pytest.raises(OneTimeViolation):
        run_txt(box, state, HIT_CLIENT)


def test_txt_no_match_is_zero(tmp_path):
    box, state, _ = txt_box(tmp_path, brca1_table())
    assert run_txt(box, state, [SnpRecord(1, 0), SnpRecord(2, 9)]).decoded == 0


def test_txt_wrong_payload(tmp_path):
    box, state, image = txt_box(tmp_path, brca1_table())
    with launch(state, b"patched payload", otp.EXECUTE) as s:
        with pytest.raises(PolicyMismatch):
            otp.txt_execute(s, image, HIT_CLIENT)
    assert run_txt(box, state, HIT_CLIENT).decoded == 90


def test_txt_needs_execute_session(tmp_path):
    box, state, image = txt_box(tmp_path, brca1_table())
    with launch(state, otp.TXT_PAYLOAD, otp.PROVISION) as s:
        with pytest.raises(SessionRequired):
            otp.txt_execute(s, image, HIT_CLIENT)


def test_txt_counts_unseals(tmp_path):
    box, state, _ = txt_box(tmp_path, brca1_table())
    state.reset_counters()
    run_txt(box, state, HIT_CLIENT)
    assert state.ops["unseal"] == 22


def test_txt_replay_of_disk_snapshot(tmp_path):
    box, state, _ = txt_box(tmp_path, brca1_table())
    shutil.copytree(box.txt_dir, tmp_path / "snap")
    run_txt(box, state, HIT_CLIENT)
    shutil.rmtree(box.txt_dir)
    shutil.copytree(tmp_path / "snap", box.txt_dir)
    with pytest.raises(OneTimeViolation):
        run_txt(box, state, HIT_CLIENT)


@pytest.mark.parametrize("mode", otm.MODES)
def test_gc_matches_txt(tmp_path, mode):
    vendor = brca1_table()
    c = compile_genomic(vendor, len(HIT_CLIENT))
    box, state, gc_path, image = gc_box(tmp_path / "gc", c, mode=mode, chunk=4)
    gc_result = run_gc(box, state, image, HIT_CLIENT)
    tbox, tstate, _ = txt_box(tmp_path / "txt", vendor)
    txt_result = run_txt(tbox, tstate, HIT_CLIENT)
    assert gc_result.decoded == txt_result.decoded == 90
    assert gc_result.output_bits == txt_result.output_bits


def test_gc_second_run_and_replay(tmp_path):
    c = compile_genomic(brca1_table(), 3)
    box, state, _, image = gc_box(tmp_path, c)
    shutil.copytree(box.gc_dir, tmp_path / "snap")
    run_gc(box, state, image, HIT_CLIENT)
    shutil.rmtree(box.gc_dir)
    shutil.copytree(tmp_path / "snap", box.gc_dir)
    with pytest.raises(OneTimeViolation):
        run_gc(box, state, otm.OtmImage.load(box.otm_dir), HIT_CLIENT)


def test_gc_evaluation_runs_without_session(tmp_path):
    c = compile_genomic(brca1_table(), 3)
    box, state, _, image = gc_box(tmp_path, c)
    with launch(state, otp.GC_SELECT_PAYLOAD, otp.EXECUTE) as s:
        otp.gc_select(s, image, client_bits(HIT_CLIENT), box.keys_file)
    assert state._session is None
    result = otp.gc_evaluate(box.gc_file, box.keys_file)
    assert result.decoded == 90


def test_gc_run_closes_session_before_evaluating(tmp_path):
    c = compile_genomic(brca1_table(), 3)
    box, state, _, image = gc_box(tmp_path, c)
    s = launch(state, otp.GC_SELECT_PAYLOAD, otp.EXECUTE)
    run = otp.gc_run(s, box.gc_file, image, client_bits(HIT_CLIENT))
    assert not s.live and run.decoded == 90


def test_gc_tampered_circuit_file(tmp_path):
    c = compile_genomic(brca1_table(), 3)
    box, state, _, image = gc_box(tmp_path, c)
    with launch(state, otp.GC_SELECT_PAYLOAD, otp.EXECUTE) as s:
        keys = otp.gc_select(s, image, client_bits(HIT_CLIENT))
    gc = GarbledCircuit.read(box.gc_file)
    raw = bytearray(gc.to_bytes())
    start = raw.index(gc.tables)
    # evl opens one row of every gate, so corrupting both rows of gate 0 must be caught
    for r in range(2):
        raw[start + r * 32 + 5] ^= 1
    with pytest.raises(DecryptionFailure):
        otp.gc_evaluate(GarbledCircuit.from_bytes(bytes(raw)), KeyFile(keys))


def test_gc_provision_counts_and_pair_file(tmp_path):
    c = compile_genomic(brca1_table(), 7)
    box = otp.Box(tmp_path)
    state = box.state()
    gc, pairs = otp.garble_circuit(c, None, random.Random(1))
    box.gc_dir.mkdir()
    otp.write_pairs_plain(box.pairs_plain, pairs)
    assert otp.read_pairs_plain(box.pairs_plain) == pairs
    state.reset_counters()
    with launch(state, otp.GC_SELECT_PAYLOAD, otp.PROVISION) as s:
        image = otp.provision_from_plain(s, box.pairs_plain, otm.MASTER_KEY, box.otm_dir)
    assert not box.pairs_plain.exists()
    assert image.evaluator_width == 224
    assert state.ops["seal"] + state.ops["nv_write"] == 2


def test_random_clients_agree(tmp_path):
    rng = random.Random(21)
    vendor = brca1_table()
    for i in range(3):
        client = random_client(rng.randint(1, 12), rng, vendor, hit_rate=0.5)
        c = compile_genomic(vendor, len(client))
        box, state, _, image = gc_box(tmp_path / f"gc{i}", c, seed=i)
        tbox, tstate, _ = txt_box(tmp_path / f"txt{i}", vendor)
        expected = risk_plain(vendor, client)
        assert run_gc(box, state, image, client).decoded == expected
        assert run_txt(tbox, tstate, client).decoded == expected
