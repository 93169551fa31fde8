"""Fixed-size page I/O through an LRU write-back cache with physical I/O counters."""

from __future__ import annotations

import os
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional


@dataclass
class IoCounter:
    reads: int = 0
    writes: int = 0

    def reset(self):
        self.reads = 0
        self.writes = 0

    def snapshot(self) -> tuple[int, int]:
        return self.reads, self.writes

    def __str__(self):
        return f"reads={self.reads} writes={self.writes}"


class PageFile:
    """Raw page-granular access to a file; every call is one physical I/O."""

    def __init__(self, path, page_size: int, counter: Optional[IoCounter] = None, create: bool = False):
        self.path = os.fspath(path)
        self.page_size = page_size
        self.counter = counter if counter is not None else IoCounter()
        self._fh = open(self.path, "w+b" if create else "r+b")

    @property
    def n_pages(self) -> int:
        self._fh.seek(0, os.SEEK_END)
        return self._fh.tell() // self.page_size

    def read(self, page_no: int) -> bytearray:
        self._fh.seek(page_no * self.page_size)
        data = self._fh.read(self.page_size)
        self.counter.reads += 1
        if len(data) < self.page_size:
            data = data + bytes(self.page_size - len(data))
        return bytearray(data)

    def write(self, page_no: int, data) -> None:
        if len(data) != self.page_size:
            raise ValueError(f"page must be exactly {self.page_size} bytes, got {len(data)}")
        self._fh.seek(page_no * self.page_size)
        self._fh.write(data)
        self.counter.writes += 1

    def close(self):
        if not self._fh.closed:
            self._fh.close()


class PageCache:
    """LRU cache of decoded pages with write-back of dirty entries.

    ``load(page_no)`` and ``store(page_no, obj)`` do the physical I/O (and
    counting); the cache only decides when they happen.
    """

    def __init__(self, capacity: int, load: Callable, store: Callable):
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1 page")
        self.capacity = capacity
        self._load = load
        self._store = store
        self._pages: OrderedDict = OrderedDict()  # page_no -> [obj, dirty]
        self.hits = 0
        self.misses = 0

    def __contains__(self, page_no):
        return page_no in self._pages

    def get(self, page_no: int):
        slot = self._pages.get(page_no)
        if slot is not None:
            self._pages.move_to_end(page_no)
            self.hits += 1
            return slot[0]
        self.misses += 1
        obj = self._load(page_no)
        self._insert(page_no, obj, False)
        return obj

    def put(self, page_no: int, obj) -> None:
        """Install ``obj`` as the (dirty) content of ``page_no`` without reading."""
        slot = self._pages.get(page_no)
        if slot is not None:
            slot[0] = obj
            slot[1] = True
            self._pages.move_to_end(page_no)
            return
        self._insert(page_no, obj, True)

    def mark_dirty(self, page_no: int) -> None:
        self._pages[page_no][1] = True

    def _insert(self, page_no, obj, dirty):
        self._pages[page_no] = [obj, dirty]
        while len(self._pages) > self.capacity:
            old, (old_obj, old_dirty) = self._pages.popitem(last=False)
            if old_dirty:
                self._store(old, old_obj)

    def discard(self, page_no: int) -> None:
        """Drop a page without writing it back (its content is dead)."""
        self._pages.pop(page_no, None)

    def flush(self) -> None:
        for page_no, slot in self._pages.items():
            if slot[1]:
                self._store(page_no, slot[0])
                slot[1] = False

    def clear(self) -> None:
        self.flush()
        self._pages.clear()
