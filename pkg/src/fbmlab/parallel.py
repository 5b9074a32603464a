"""Deterministic chunked map for the Monte Carlo reducers.

Work is split into fixed-size chunks of path indices and handed to a
worker(payload, start, stop) that returns a small reduced result.  Because
every path draws from its own (seed, index) stream and results are
reassembled in chunk order, the output is bit-identical whether chunks run
inline or across a process pool, and whatever the pool size.
"""

import concurrent.futures

CHUNK = 64


def chunk_ranges(n_items: int, chunk: int = CHUNK):
    return [(a, min(a + chunk, n_items)) for a in range(0, n_items, chunk)]


def map_chunks(worker, payload, n_items: int, threads: int = 1, chunk: int = CHUNK):
    ranges = chunk_ranges(n_items, chunk)
    if threads is None:
        threads = 1
    if threads <= 1 or len(ranges) <= 1:
        return [worker(payload, a, b) for a, b in ranges]
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, payload, a, b) for a, b in ranges]
        return [f.result() for f in futures]
