from kiteupset.workpool import WORKERS_ENV, ordered_map, resolve_workers


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert resolve_workers() == 1
    assert resolve_workers(0) == 1
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.setenv(WORKERS_ENV, "many")
    assert resolve_workers() == 1


def test_ordered_map_keeps_submission_order():
    items = [5, -3, 8, -1, 0, 7, -2]
    assert ordered_map(abs, items, workers=1, progress=False) == [5, 3, 8, 1, 0, 7, 2]
    assert ordered_map(abs, items, workers=2, progress=False) == [5, 3, 8, 1, 0, 7, 2]
