"""Array container: ROM programming, addressing, word reads, state hygiene."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from romram.device import VariationSpec, VtFlavor, sample_device
from romram.memory import (
    AddressError,
    ArrayConfig,
    MemoryArray,
    RomImage,
    RomImageError,
    build_array,
)
from romram.protocol import ProtocolError


@pytest.fixture
def small_array(variation, params):
    rom = RomImage.from_text("10110100\n01001011\n11110000\n00001111\n")
    return build_array(ArrayConfig(rows=4, cols=8), rom, variation, params)


class TestRomImage:
    def test_text_round_trip(self):
        text = "1010\n0101\n1111\n"
        image = RomImage.from_text(text)
        assert image.to_text() == text

    def test_hex_round_trip(self):
        image = RomImage.from_text("10110100\n01001011\n")
        hex_text = image.to_hex()
        assert hex_text == "b4\n4b\n"
        assert RomImage.from_hex(hex_text, cols=8) == image

    def test_hex_msb_first(self):
        # column 0 is the most significant bit of each line
        image = RomImage.from_hex("8\n", cols=4)
        assert list(image.bits[0]) == [1, 0, 0, 0]

    def test_non_multiple_of_four_width(self):
        image = RomImage.from_text("101101\n010010\n")
        assert RomImage.from_hex(image.to_hex(), cols=6) == image

    @pytest.mark.parametrize("text", ["", "10\n1\n", "10\n1x\n"])
    def test_bad_text_rejected(self, text):
        with pytest.raises(RomImageError):
            RomImage.from_text(text)

    @pytest.mark.parametrize("text,cols", [("zz\n", 8), ("fff\n", 8), ("ff\n", 4)])
    def test_bad_hex_rejected(self, text, cols):
        with pytest.raises(RomImageError):
            RomImage.from_hex(text, cols)

    def test_immutable(self):
        image = RomImage.from_text("10\n01\n")
        with pytest.raises(ValueError):
            image.bits[0, 0] = 0

    def test_checkerboard_low_vt_count(self):
        # 64x64 checkerboard: exactly half the cells are low-Vt (ROM bit 1)
        image = RomImage.checkerboard(64, 64)
        assert int(image.bits.sum()) == 2048

    def test_file_loading(self, tmp_path):
        p = tmp_path / "image.rom"
        p.write_text("1100\n0011\n")
        assert RomImage.from_file(p) == RomImage.from_text("1100\n0011\n")
        h = tmp_path / "image.hex"
        h.write_text("c\n3\n")
        assert RomImage.from_file(h, cols=4) == RomImage.from_text("1100\n0011\n")
        with pytest.raises(RomImageError):
            RomImage.from_file(h)  # hex needs the column count


class TestBuildArray:
    def test_single_cell(self, variation, params):
        arr = build_array(ArrayConfig(1, 1), RomImage.from_text("1\n"), variation, params)
        cell = arr.cell(0, 0)
        assert cell.rom_flavor is VtFlavor.LOW_VT
        assert cell.q == 0

    def test_flavor_matches_image(self, small_array):
        for r in range(4):
            for c in range(8):
                want = VtFlavor.LOW_VT if small_array.rom.bits[r, c] else VtFlavor.HIGH_VT
                assert small_array.cell(r, c).rom_flavor is want

    def test_deterministic_rebuild(self, small_array, variation, params):
        again = build_array(ArrayConfig(4, 8), small_array.rom, variation, params)
        for r in range(4):
            for c in range(8):
                assert small_array.cell(r, c) == again.cell(r, c)

    def test_draw_index_mapping(self, small_array, variation):
        # draw_index = (row*cols + col)*2 + device_position, position 0 = upper
        r, c = 2, 5
        cell = small_array.cell(r, c)
        base = (r * 8 + c) * 2
        assert cell.upper_device == sample_device(cell.rom_flavor, variation, base)
        assert cell.lower_device == sample_device(cell.rom_flavor, variation, base + 1)

    def test_dimension_mismatch(self, variation):
        with pytest.raises(RomImageError):
            build_array(ArrayConfig(2, 2), RomImage.from_text("1\n"), variation)


class TestWrites:
    def test_write_readback_state(self, small_array):
        small_array.write_ram(1, 3, 1)
        assert small_array.cell(1, 3).q == 1
        small_array.write_ram(1, 3, 0)
        assert small_array.cell(1, 3).q == 0

    def test_write_isolation_full_state(self, variation, params):
        rom = RomImage.checkerboard(64, 64)
        arr = build_array(ArrayConfig(64, 64), rom, variation, params)
        before_q = arr.ram_state
        arr.write_ram(10, 20, 1)
        after_q = arr.ram_state
        changed = before_q != after_q
        assert changed.sum() == 1 and changed[10, 20]
        assert np.array_equal(arr.rom.bits, rom.bits)

    def test_write_does_not_change_flavor(self, small_array):
        flavor_before = small_array.cell(0, 0).rom_flavor
        small_array.write_ram(0, 0, 1)
        assert small_array.cell(0, 0).rom_flavor is flavor_before

    def test_address_errors(self, small_array):
        with pytest.raises(AddressError):
            small_array.write_ram(4, 0, 1)
        with pytest.raises(AddressError):
            small_array.write_ram(0, 8, 1)
        with pytest.raises(ValueError):
            small_array.write_ram(0, 0, 2)

    def test_dump_load_round_trip(self, small_array):
        small_array.write_ram(2, 2, 1)
        dump = small_array.dump_ram()
        other = MemoryArray(small_array.config, small_array.rom, small_array.variation)
        other.load_ram(dump)
        assert np.array_equal(other.ram_state, small_array.ram_state)


class TestRomOnlyModeEntry:
    def test_zeroes_ram(self, small_array):
        for c in range(8):
            small_array.write_ram(0, c, 1)
        small_array.enter_rom_only_mode()
        assert not small_array.ram_state.any()
        assert small_array.rom_only_mode

    def test_idempotent(self, small_array):
        small_array.enter_rom_only_mode()
        state = small_array.ram_state
        small_array.enter_rom_only_mode()
        assert np.array_equal(small_array.ram_state, state)
        assert small_array.rom_only_mode

    def test_write_leaves_rom_only_mode(self, small_array):
        small_array.enter_rom_only_mode()
        small_array.write_ram(0, 0, 1)
        assert not small_array.rom_only_mode


class TestReadWord:
    def test_rom_only_requires_entry(self, small_array, run_config, cfg, params):
        mode = run_config.mode_config("rom_only")
        with pytest.raises(ProtocolError):
            small_array.read_word(mode, 0, cfg, params)

    def test_rom_readout_equals_image(self, small_array, run_config, cfg, params):
        small_array.enter_rom_only_mode()
        mode = run_config.mode_config("rom_only")
        for r in range(4):
            assert small_array.read_word(mode, r, cfg, params) == list(small_array.rom.bits[r])

    def test_ram_word_readback(self, small_array, run_config, cfg, params):
        word = [1, 0, 1, 0, 0, 1, 0, 1]  # 0xA5
        for c, b in enumerate(word):
            small_array.write_ram(0, c, b)
        mode = run_config.mode_config("ram_only_reliability")
        assert small_array.read_word(mode, 0, cfg, params) == word

    def test_dual_context_word(self, variation, params, run_config, cfg):
        # RAM = 0b10, ROM = 0b01 over two columns: cases 10 and 01
        rom = RomImage.from_text("01\n")
        arr = build_array(ArrayConfig(1, 2), rom, variation, params)
        arr.write_ram(0, 0, 1)
        mode = run_config.mode_config("dual_context")
        ram, rom_bits = arr.read_word(mode, 0, cfg, params)
        assert ram == [1, 0]
        assert rom_bits == [0, 1]

    def test_dual_context_non_destructive(self, small_array, run_config, cfg, params):
        for c in range(8):
            small_array.write_ram(2, c, c % 2)
        before = small_array.ram_state
        mode = run_config.mode_config("dual_context")
        for _ in range(3):
            small_array.read_word(mode, 2, cfg, params)
        assert np.array_equal(small_array.ram_state, before)

    def test_per_array_granularity_same_answers(self, small_array, run_config, cfg, params):
        from dataclasses import replace

        for c in range(8):
            small_array.write_ram(1, c, (c // 2) % 2)
        mode = run_config.mode_config("dual_context")
        shared = replace(mode, sl_granularity="per_array")
        assert small_array.read_word(mode, 1, cfg, params) == small_array.read_word(
            shared, 1, cfg, params
        )

    def test_row_address_checked(self, small_array, run_config, cfg, params):
        with pytest.raises(AddressError):
            small_array.read_word(run_config.mode_config("ram_only_delay"), 9, cfg, params)

    def test_reads_between_writes_see_first_write(self, small_array, run_config, cfg, params):
        mode = run_config.mode_config("ram_only_delay")
        small_array.write_ram(3, 0, 1)
        first = small_array.read_word(mode, 3, cfg, params)
        assert first[0] == 1
        small_array.write_ram(3, 0, 0)
        assert small_array.read_word(mode, 3, cfg, params)[0] == 0


class TestRomImmutability:
    @given(
        ops=st.lists(
            st.tuples(
                st.sampled_from(["write", "enter_rom", "read_ram", "read_state"]),
                st.integers(0, 3),
                st.integers(0, 7),
                st.integers(0, 1),
            ),
            min_size=1,
            max_size=60,
        )
    )
    @settings(max_examples=25, deadline=None)
    def test_no_op_sequence_changes_rom(self, variation, params, run_config, cfg, ops):
        rom = RomImage.checkerboard(4, 8)
        arr = build_array(ArrayConfig(4, 8), rom, variation, params)
        flavors_before = [[arr.cell(r, c).rom_flavor for c in range(8)] for r in range(4)]
        mode = run_config.mode_config("ram_only_delay")
        for op, r, c, b in ops:
            if op == "write":
                arr.write_ram(r, c, b)
            elif op == "enter_rom":
                arr.enter_rom_only_mode()
            elif op == "read_ram":
                arr.ram_word(r)
            else:
                arr.ram_state
        assert np.array_equal(arr.rom.bits, rom.bits)
        flavors_after = [[arr.cell(r, c).rom_flavor for c in range(8)] for r in range(4)]
        assert flavors_after == flavors_before
