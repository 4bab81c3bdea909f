import hashlib

from manifest import Invocation, hash_files, init_manifest, load_invocations, record_invocation, sha256_file


class TestHashing:

    def test_sha256_matches_hashlib(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_bytes(b"georeg\n")
        assert sha256_file(path) == hashlib.sha256(b"georeg\n").hexdigest()

    def test_missing_files_are_skipped(self, tmp_path):
        present = tmp_path / "here.csv"
        present.write_text("t\n")
        hashes = hash_files([present, tmp_path / "gone.csv", None])
        assert list(hashes) == [str(present)]


class TestInvocations:

    def test_missing_database_is_empty(self, tmp_path):
        assert load_invocations(tmp_path / "none.db") == []

    def test_empty_table(self, tmp_path):
        db = tmp_path / "m.db"
        init_manifest(db)
        init_manifest(db)
        assert load_invocations(db) == []

    def test_records_come_back_in_order(self, tmp_path):
        db = tmp_path / "m.db"
        first = Invocation(command="simulate", argv=["simulate", "--out", "sim"], config={"seed": 3},
                           outputs={"sim/graph.g2o": "ab"})
        second = Invocation(command="optimize", argv=["optimize"], inputs={"g.g2o": "cd"}, exit_code=3)
        ids = [record_invocation(first, db), record_invocation(second, db)]
        assert ids[0] < ids[1]

        loaded = load_invocations(db)
        assert [inv.command for inv in loaded] == ["simulate", "optimize"]
        assert loaded[0].config == {"seed": 3}
        assert loaded[0].outputs == {"sim/graph.g2o": "ab"}
        assert loaded[0].started_at
        assert loaded[1].inputs == {"g.g2o": "cd"}
        assert loaded[1].exit_code == 3
        assert loaded[1].outputs == {}
