import pytest

from errors import ConfigError, InputError, OrderingError, ParseError
from evaluation import EvalConfig
from fileio import (
    atomic_write_text,
    build_config,
    parse_kv_text,
    read_decisions_csv,
    read_gps_csv,
    read_origin,
    read_pose_times_csv,
    write_origin,
)
from geometry import MapOrigin
from gps_filter import GpsFix
from simulator import SimConfig


class TestTables:

    def test_bad_number_names_line_and_column(self, tmp_path):
        path = tmp_path / "gps.csv"
        path.write_text("t,easting,northing,sigma\n0,1,2,3\n1,abc,2,3\n")
        with pytest.raises(ParseError) as exc:
            read_gps_csv(path)
        assert (exc.value.file, exc.value.line, exc.value.column) == (str(path), 3, 2)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "gps.csv"
        path.write_text("t,easting,northing\n0,1,2\n")
        with pytest.raises(ParseError) as exc:
            read_gps_csv(path)
        assert exc.value.line == 1

    def test_non_increasing_time(self, tmp_path):
        path = tmp_path / "gps.csv"
        path.write_text("t,easting,northing,sigma\n0,1,2,3\n2,1,2,3\n1,1,2,3\n")
        with pytest.raises(OrderingError) as exc:
            read_gps_csv(path)
        assert exc.value.record == 2

    def test_missing_and_empty_files(self, tmp_path):
        with pytest.raises(InputError):
            read_gps_csv(tmp_path / "nope.csv")
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(ParseError):
            read_gps_csv(empty)

    def test_optional_outlier_column_and_spaces(self, tmp_path):
        path = tmp_path / "gps.csv"
        path.write_text("t, easting, northing, sigma\n0, 100.5, 200.25, 3\n")
        fixes = read_gps_csv(path)
        assert fixes == [GpsFix(0.0, 100.5, 200.25, 3.0, False)]

    def test_integer_column(self, tmp_path):
        path = tmp_path / "pose_times.csv"
        path.write_text("pose_id,t\n0,0.0\n1.5,1.0\n")
        with pytest.raises(ParseError) as exc:
            read_pose_times_csv(path)
        assert exc.value.line == 3 and exc.value.column == 1

    def test_decision_without_fix(self, tmp_path):
        path = tmp_path / "decisions.csv"
        path.write_text("t,easting,northing,d2,threshold,accepted\n5.0,1,2,0.5,5.99,1\n")
        with pytest.raises(ParseError):
            read_decisions_csv(path, [GpsFix(1.0, 1.0, 2.0)])

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        target = tmp_path / "out" / "file.txt"
        atomic_write_text(target, "first")
        atomic_write_text(target, "second")
        assert target.read_text() == "second"
        assert [p.name for p in target.parent.iterdir()] == ["file.txt"]


class TestKeyValue:

    def test_parse(self):
        values = parse_kv_text("a = 1\n# comment\nb.c = x, y  # trailing\n\nd = 1:2\n")
        assert values == {"a": "1", "b.c": ["x", "y"], "d": [("1", "2")]}

    def test_missing_equals(self):
        with pytest.raises(ParseError) as exc:
            parse_kv_text("a = 1\n  broken\n", source="run.cfg")
        assert (exc.value.line, exc.value.column) == (2, 3)

    def test_flag_beats_file_beats_default(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("seed = 5\npreset = line\ngps.sigma = 2.0\n")
        config = build_config(SimConfig, path, {"seed": 9, "preset": None})
        assert (config.seed, config.preset, config.gps.sigma) == (9, "line", 2.0)
        assert config.gps.rate_hz == 1.0

    def test_windows_from_file(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("gps.outage_windows = 10:20, 30:40\naerial.tile_bias_range = 0.1:0.2\n")
        config = build_config(SimConfig, path)
        assert config.gps.outage_windows == [(10.0, 20.0), (30.0, 40.0)]
        assert config.aerial.tile_bias_range == (0.1, 0.2)

    @pytest.mark.parametrize("text,expected", [("n_values = 3\n", [3]), ("n_values = 0, 2, 4\n", [0, 2, 4])])
    def test_n_values_from_file(self, tmp_path, text, expected):
        path = tmp_path / "eval.cfg"
        path.write_text(text)
        assert build_config(EvalConfig, path).n_values == expected

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("bogus = 1\n")
        with pytest.raises(ConfigError) as exc:
            build_config(SimConfig, path)
        assert exc.value.key == "bogus"

    def test_invalid_value_named(self):
        with pytest.raises(ConfigError) as exc:
            build_config(SimConfig, overrides={"gps.sigma": -1.0})
        assert exc.value.key == "gps.sigma"
        assert exc.value.exit_code == 4

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            build_config(SimConfig, tmp_path / "missing.cfg")


class TestOrigin:

    def test_round_trip(self, tmp_path):
        path = tmp_path / "origin.cfg"
        origin = MapOrigin(332000.125, 6248000.5, "56H")
        write_origin(path, origin)
        assert read_origin(path) == origin

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "origin.cfg"
        path.write_text("easting_offset = 1\nheading = 0.3\n")
        with pytest.raises(ConfigError) as exc:
            read_origin(path)
        assert exc.value.key == "heading"
