"""Write-once store semantics: exclusive create, metadata flattening, pools."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import pytest

from eballot.errors import AlreadyExists, InvalidName, NotFound, WormError
from eballot.worm import CompletionJournal, WormStore


@pytest.fixture
def store(tmp_path):
    return WormStore(tmp_path / "records")


def test_create_read_roundtrip(store):
    store.create_exclusive("alpha", b"one")
    store.create_exclusive("beta", b"two")
    assert store.read("alpha") == b"one"
    assert store.exists("beta")
    assert not store.exists("gamma")
    assert store.count() == 2


def test_duplicate_create_rejected(store):
    store.create_exclusive("name", b"first")
    with pytest.raises(AlreadyExists):
        store.create_exclusive("name", b"second")
    assert store.read("name") == b"first"


def test_concurrent_create_single_winner(tmp_path):
    store = WormStore(tmp_path / "records")
    attempts = 50

    def attempt(i: int):
        try:
            store.create_exclusive("contested", b"writer-%d" % i)
            return "ok"
        except AlreadyExists:
            return "dup"

    with ThreadPoolExecutor(max_workers=16) as pool:
        results = list(pool.map(attempt, range(attempts)))
    assert results.count("ok") == 1
    assert results.count("dup") == attempts - 1
    assert store.list_names() == ["contested"]
    content = store.read("contested")
    assert content.startswith(b"writer-")


def test_invalid_names_rejected(store):
    for bad in ("", "a/b", "../up", "x" * 129, ".", "..", ".pool", "semi;colon", "sp ace"):
        with pytest.raises(InvalidName):
            store.create_exclusive(bad, b"x")


def test_leading_dot_names_are_storable(store):
    # Token charset includes '.', so credentials can begin with one.
    store.create_exclusive(".hidden_looking_token", b"x")
    assert store.exists(".hidden_looking_token")
    assert store.list_names() == [".hidden_looking_token"]


def test_empty_content_refused(store):
    with pytest.raises(WormError):
        store.create_exclusive("name", b"")


def test_empty_file_is_in_flight_not_committed(store):
    (store.path / "claimed").touch()
    assert not store.exists("claimed")
    with pytest.raises(NotFound):
        store.read("claimed")
    assert store.list_names() == []
    # The claim still blocks duplicate creation.
    with pytest.raises(AlreadyExists):
        store.create_exclusive("claimed", b"x")


def test_read_missing(store):
    with pytest.raises(NotFound):
        store.read("absent")


def test_listing_is_lexicographic_and_mtimes_flattened(tmp_path):
    store = WormStore(tmp_path / "records", fixed_mtime=946684800.0)
    for name in ("zeta", "alpha", "mid", "beta"):
        store.create_exclusive(name, name.encode())
    assert store.list_names() == ["alpha", "beta", "mid", "zeta"]
    mtimes = {os.stat(store.path / n).st_mtime for n in store.list_names()}
    assert mtimes == {946684800.0}


def test_inode_order_does_not_reveal_arrival_order(tmp_path):
    store = WormStore(tmp_path / "records", pool_size=64)
    names = [f"rec{i:02d}" for i in range(20)]
    for name in names:
        store.create_exclusive(name, b"x")
    inodes = [os.stat(store.path / n).st_ino for n in names]
    # Pool inodes are taken at random, so arrival order must not show as a
    # monotone inode sequence (chance of that is 1/20!).
    assert inodes != sorted(inodes)


def test_pool_refills(tmp_path):
    store = WormStore(tmp_path / "records", pool_size=2)
    for i in range(7):
        store.create_exclusive(f"r{i}", b"x")
    assert store.count() == 7


def test_purge_only_when_allowed(tmp_path):
    plain = WormStore(tmp_path / "plain")
    plain.create_exclusive("keep", b"x")
    with pytest.raises(WormError):
        plain.purge_all()
    temp = WormStore(tmp_path / "temp", allow_purge=True)
    temp.create_exclusive("a", b"x")
    temp.create_exclusive("b", b"y")
    assert temp.purge_all() == 2
    assert temp.count() == 0


def test_store_reopens_existing_directory(tmp_path):
    first = WormStore(tmp_path / "records")
    first.create_exclusive("persist", b"data")
    second = WormStore(tmp_path / "records")
    assert second.read("persist") == b"data"
    with pytest.raises(AlreadyExists):
        second.create_exclusive("persist", b"other")


def test_completion_journal(tmp_path):
    journal = CompletionJournal(tmp_path / "done.log")
    assert journal.load() == set()
    journal.append("aa" * 32)
    journal.append("bb" * 32)
    assert journal.load() == {"aa" * 32, "bb" * 32}
    reopened = CompletionJournal(tmp_path / "done.log")
    assert reopened.load() == {"aa" * 32, "bb" * 32}
