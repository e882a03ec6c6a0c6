import random
import shutil

import pytest
from _support import launch, random_bits

from otpbox import otm
from otpbox.errors import (ArityMismatch, DecryptionFailure, FlagAlreadyDefined,
                           OneTimeViolation, PolicyMismatch, SessionRequired, SimulatedCrash)
from otpbox.garble import fresh_pairs
from otpbox.teesim import SealedBlob

PAYLOAD = b"test payload"


def provision(state, directory, width=224, mode=otm.MASTER_KEY, chunk=1, seed=0,
              reprovision=False):
    pairs = fresh_pairs(width, random.Random(seed))
    kept = list(pairs)
    with launch(state, PAYLOAD, otm.PROVISION) as s:
        image = otm.provision(s, pairs, mode, directory, chunk, reprovision)
    assert pairs == []
    return image, kept


def select(state, image, bits, payload=PAYLOAD):
    with launch(state, payload, otm.EXECUTE) as s:
        return otm.select(s, image, bits)


def test_master_key_provision_counts(state, tmp_path):
    state.reset_counters()
    provision(state, tmp_path / "otm")
    assert state.ops["seal"] == 1
    assert state.ops["nv_write"] == 1
    assert state.ops["nv_define"] == 2


def test_seal_all_provision_counts(state, tmp_path):
    state.reset_counters()
    provision(state, tmp_path / "otm", mode=otm.SEAL_ALL)
    assert state.ops["seal"] == 224
    assert state.ops["nv_write"] == 0


@pytest.mark.parametrize("mode", otm.MODES)
def test_select_releases_chosen_labels_once(state, tmp_path, mode):
    image, pairs = provision(state, tmp_path / "otm", mode=mode)
    bits = random_bits(random.Random(1), 224)
    keys = select(state, image, bits)
    assert keys == [p.label(int(b)) for p, b in zip(pairs, bits)]
    with pytest.raises(OneTimeViolation):
        select(state, image, bits)


def test_meta_round_trip(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=8)
    again = otm.OtmImage.load(tmp_path / "otm")
    assert again == image
    assert (tmp_path / "otm" / "pairs.bin").exists()


def test_flag_is_not_on_disk(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=16)
    snap = tmp_path / "snap"
    shutil.copytree(tmp_path / "otm", snap)
    select(state, image, "0" * 16)
    shutil.rmtree(tmp_path / "otm")
    shutil.copytree(snap, tmp_path / "otm")
    with pytest.raises(OneTimeViolation):
        select(state, otm.OtmImage.load(tmp_path / "otm"), "1" * 16)


def test_crash_after_flag_flip_burns_the_box(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=16)

    def hook(point):
        if point == "secret-unsealed":
            raise SimulatedCrash(point)

    state.fault_hook = hook
    with pytest.raises(SimulatedCrash):
        select(state, image, "0" * 16)
    state.fault_hook = None
    with pytest.raises(OneTimeViolation):
        select(state, image, "0" * 16)


def test_wrong_environment(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=8)
    with pytest.raises(PolicyMismatch):
        select(state, image, "0" * 8, payload=b"some other program")
    # the failed attempt could not touch the flag
    assert len(select(state, image, "0" * 8)) == 8


def test_session_and_mode_required(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=8)
    with launch(state, PAYLOAD, otm.PROVISION) as s:
        with pytest.raises(SessionRequired):
            otm.select(s, image, "0" * 8)
    s = launch(state, PAYLOAD, otm.EXECUTE)
    s.close()
    with pytest.raises(SessionRequired):
        otm.select(s, image, "0" * 8)


def test_arity_checked_before_flag(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=8)
    with pytest.raises(ArityMismatch):
        select(state, image, "0" * 7)
    assert len(select(state, image, "0" * 8)) == 8


def test_provisioning_mode_cannot_read_secrets(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=8, mode=otm.SEAL_ALL)
    blob, _ = SealedBlob.read_from(image.pairs_path.read_bytes(), 0)
    with launch(state, PAYLOAD, otm.PROVISION):
        with pytest.raises(PolicyMismatch):
            state.unseal(blob)


def test_reprovision_must_be_explicit(state, tmp_path):
    provision(state, tmp_path / "otm", width=8)
    with pytest.raises(FlagAlreadyDefined):
        provision(state, tmp_path / "otm", width=8, seed=1)


def test_reprovision_invalidates_old_image(state, tmp_path):
    d = tmp_path / "otm"
    image, _ = provision(state, d, width=32)
    old = tmp_path / "old"
    shutil.copytree(d, old)
    provision(state, d, width=32, seed=1, reprovision=True)
    shutil.rmtree(d)
    shutil.copytree(old, d)
    with pytest.raises(DecryptionFailure):
        select(state, otm.OtmImage.load(d), "0" * 32)


def test_exposure_watermark(state, tmp_path):
    image, _ = provision(state, tmp_path / "mk", width=224)
    select(state, image, "1" * 224)
    assert otm.exposure_report() == 224

    for chunk in (1, 8):
        d = tmp_path / f"sa{chunk}"
        image, _ = provision(state, d, width=224, mode=otm.SEAL_ALL, chunk=chunk)
        select(state, image, random_bits(random.Random(chunk), 224))
        assert otm.exposure_report() == chunk


def test_select_only_unseals_needed_material(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=64)
    state.reset_counters()
    select(state, image, "0" * 64)
    assert state.ops["unseal"] == 1
    assert state.ops["nv_write"] == 1


def test_flag_only_moves_forward(state, tmp_path):
    image, _ = provision(state, tmp_path / "otm", width=8)
    with launch(state, PAYLOAD, otm.EXECUTE) as s:
        assert otm.flag_value(s, image) == 0
        otm.select(s, image, "0" * 8)
        assert otm.flag_value(s, image) == 1
        with pytest.raises(OneTimeViolation):
            otm.select(s, image, "0" * 8)
        assert otm.flag_value(s, image) == 1
