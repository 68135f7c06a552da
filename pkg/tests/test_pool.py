import logging

from erwlab.pool import THREADS_ENV, resolve_workers, run_ordered


def _square(x):
    return x * x


def test_default_is_single_worker(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_workers() == 1
    assert resolve_workers(0) == 1
    assert resolve_workers(6) == 6


def test_environment_caps_workers(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "2")
    assert resolve_workers(8) == 2
    assert resolve_workers(1) == 1


def test_bad_cap_is_ignored(monkeypatch, caplog):
    monkeypatch.setenv(THREADS_ENV, "many")
    with caplog.at_level(logging.WARNING, logger="erwlab.pool"):
        assert resolve_workers(3) == 3
    assert THREADS_ENV in caplog.text


def test_run_ordered_inline_and_in_processes():
    items = list(range(12))
    assert run_ordered(_square, items) == [x * x for x in items]
    assert run_ordered(_square, items, workers=2) == [x * x for x in items]
    assert run_ordered(_square, [], workers=4) == []
