import struct

import numpy as np
import pytest

from cellseer.cycleio import cycle_filename, decode_cycle, encode_cycle, list_cycle_files, read_cycle, \
    read_cycles, write_cycles
from cellseer.errors import FormatError

from helpers import synthetic_cycle


def same(a, b):
    assert (a.electrolyzer_id, a.cycle_index, a.cell_ids, a.startup_len, a.scaled) == \
        (b.electrolyzer_id, b.cycle_index, b.cell_ids, b.startup_len, b.scaled)
    for x, y in ((a.minutes, b.minutes), (a.features, b.features), (a.volts, b.volts)):
        assert np.array_equal(x, y)
        assert x.tobytes() == np.asarray(y, dtype=x.dtype).tobytes()


def test_roundtrip_bit_exact(tmp_path, rng):
    c = synthetic_cycle(rng)
    c.volts[5, 1] = -1.0
    c.features[3, 2] = np.nextafter(0.5, 1)
    same(decode_cycle(encode_cycle(c)), c)
    paths = write_cycles([c, synthetic_cycle(rng, index=1)], tmp_path)
    assert [p.name for p in paths] == ["E0_c000.celc", "E0_c001.celc"]
    same(read_cycle(paths[0]), c)
    assert encode_cycle(read_cycle(paths[0])) == paths[0].read_bytes()
    assert len(read_cycles(tmp_path)) == 2


def test_truncated_payload_names_byte_counts(rng):
    data = encode_cycle(synthetic_cycle(rng))
    with pytest.raises(FormatError) as exc:
        decode_cycle(data[:-8])
    assert exc.value.field == "payload"
    assert exc.value.expected == len(data) and exc.value.found == len(data) - 8


@pytest.mark.parametrize("cut", [0, 3, 9, 20])
def test_truncated_header_or_manifest(rng, cut):
    with pytest.raises(FormatError):
        decode_cycle(encode_cycle(synthetic_cycle(rng))[:cut])


def test_wrong_magic_and_version(rng):
    data = encode_cycle(synthetic_cycle(rng))
    with pytest.raises(FormatError, match="magic"):
        decode_cycle(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="version"):
        decode_cycle(data[:4] + struct.pack("<H", 9) + data[6:])


def test_garbled_manifest(rng):
    data = bytearray(encode_cycle(synthetic_cycle(rng)))
    data[12] = 0xFF
    with pytest.raises(FormatError):
        decode_cycle(bytes(data))


def test_random_corruption_never_crashes(rng):
    data = encode_cycle(synthetic_cycle(rng))
    for _ in range(200):
        bad = bytearray(data)
        for i in rng.integers(0, len(bad), size=3):
            bad[i] = int(rng.integers(256))
        bad = bytes(bad[: int(rng.integers(0, len(bad) + 1))])
        try:
            decode_cycle(bad)
        except FormatError:
            pass


def test_listing_missing_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        list_cycle_files(tmp_path / "nope")
    assert cycle_filename(synthetic_cycle(np.random.default_rng(0), eid="E3", index=12)) == "E3_c012.celc"
