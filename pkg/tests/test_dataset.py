import numpy as np
import pytest

from alkdrec import dataset
from alkdrec.dataset import DatasetError, Interaction, InteractionLog, Session


def _log(rows):
    return InteractionLog(tuple(Interaction(*r) for r in rows))


class TestLoadInteractions:
    def test_parses_rows_and_skips_blank_lines(self, tmp_path):
        p = tmp_path / "log.tsv"
        p.write_bytes(b"1\t10\t100\r\n\n2\t11\t200\n")
        log = dataset.load_interactions(p)
        assert [(r.user_id, r.item_id, r.timestamp) for r in log.records] == [(1, 10, 100), (2, 11, 200)]

    def test_bad_row_names_line(self, tmp_path):
        p = tmp_path / "log.tsv"
        p.write_text("1\t10\t100\n1\tx\t5\n")
        with pytest.raises(DatasetError, match="line 2"):
            dataset.load_interactions(p)

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "log.tsv"
        p.write_text("1\t10\n")
        with pytest.raises(DatasetError, match="line 1"):
            dataset.load_interactions(p)

    def test_empty_file_is_error(self, tmp_path):
        p = tmp_path / "log.tsv"
        p.write_text("\n\n")
        with pytest.raises(DatasetError):
            dataset.load_interactions(p)

    def test_hetrec_reader(self, tmp_path):
        p = tmp_path / "r.dat"
        p.write_text("userID\tmovieID\trating\ttimestamp\n75\t3\t1\t1162160236000\n75\t32\t4.5\t1162160624000\n")
        log = dataset.load_hetrec_ratings(p)
        assert [(r.user_id, r.item_id, r.timestamp) for r in log.records] == [(75, 3, 1162160236), (75, 32, 1162160624)]


class TestSessionize:
    def test_windows_anchor_at_first_event(self):
        h = 3600
        log = _log([(1, 5, 0), (1, 6, 23 * h), (1, 7, 24 * h), (1, 8, 47 * h), (2, 9, 10)])
        sessions = dataset.sessionize(log, 24)
        assert [s.items for s in sessions] == [(5, 6), (7, 8), (9,)]
        assert [s.sid for s in sessions] == [0, 1, 2]

    def test_order_within_window_is_by_time(self):
        log = _log([(1, 7, 50), (1, 5, 10), (1, 6, 30)])
        assert dataset.sessionize(log)[0].items == (5, 6, 7)

    def test_bad_window(self):
        with pytest.raises(DatasetError):
            dataset.sessionize(_log([(1, 1, 1)]), 0)


class TestFilterShort:
    def test_threshold(self):
        sessions = [Session(i, tuple(range(10 * i, 10 * i + n))) for i, n in enumerate([4, 5, 6])]
        kept, _ = dataset.filter_short(sessions, 5)
        assert [len(s) for s in kept] == [5, 6]

    def test_dense_reindex_preserves_order(self):
        kept, id_map = dataset.filter_short([Session(3, (40, 7, 99, 7, 12))], 5)
        assert id_map == {7: 0, 12: 1, 40: 2, 99: 3}
        assert kept[0].items == (2, 0, 3, 0, 1)
        assert kept[0].sid == 3


class TestSplit:
    def test_sizes_and_determinism(self):
        sessions = [Session(i, (i, i + 1)) for i in range(11)]
        a = dataset.split_sessions(sessions, seed=4)
        b = dataset.split_sessions(sessions, seed=4)
        assert a.split == b.split
        assert a.counts() == {"train": 7, "valid": 2, "test": 2}

    def test_too_few_sessions(self):
        with pytest.raises(DatasetError):
            dataset.split_sessions([Session(0, (1, 2))] * 2)

    def test_partition_is_disjoint_and_complete(self, small_ds):
        parts = [set(s.sid for s in small_ds.part(n)) for n in dataset.SPLITS]
        assert sum(len(p) for p in parts) == len(small_ds.sessions)
        assert not (parts[0] & parts[1]) and not (parts[0] & parts[2]) and not (parts[1] & parts[2])


class TestLeaveOneOut:
    def test_last_item_is_target(self):
        inst = dataset.leave_one_out(Session(9, (1, 2, 3)))
        assert inst.prefix == (1, 2) and inst.target == 3 and inst.sid == 9

    def test_single_item_session(self):
        with pytest.raises(DatasetError):
            dataset.leave_one_out(Session(0, (1,)))


class TestPersistence:
    def test_roundtrip(self, tmp_path, small_ds):
        dataset.save_dataset(tmp_path, small_ds, {5: 0})
        back = dataset.load_dataset(tmp_path)
        assert back.sessions == small_ds.sessions
        assert back.split == small_ds.split
        assert back.n_items == small_ds.n_items
        assert back.catalog.titles == small_ds.catalog.titles
        assert dataset.read_id_map(tmp_path / "id_map.tsv") == {5: 0}

    def test_catalog_rejects_empty_title(self):
        with pytest.raises(DatasetError):
            dataset.ItemCatalog({1: "  "})

    def test_catalog_missing_title_names_id(self):
        with pytest.raises(KeyError, match="42"):
            dataset.ItemCatalog({1: "a"}).title(42)
