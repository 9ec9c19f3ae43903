"""
Per-bag worker pool. Tasks share nothing; results are keyed and ordered by bag_id.
"""
import logging
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor

from django.conf import settings

log = logging.getLogger(__name__)


def worker_count(threads=None):
    if threads is None:
        threads = getattr(settings, 'CDPMIL_THREADS', 0)
    if not threads:
        threads = os.cpu_count() or 1
    return max(int(threads), 1)


def map_bags(func, bags, threads=None):
    """
    Apply `func` to every bag.

    :return: OrderedDict of bag_id -> result, sorted by bag_id
    """
    bags = sorted(bags, key=lambda bag: bag.bag_id)
    workers = min(worker_count(threads), max(len(bags), 1))
    if workers == 1:
        results = [func(bag) for bag in bags]
    else:
        log.debug("Running %d bags on %d workers", len(bags), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(func, bags))
    return OrderedDict((bag.bag_id, result) for bag, result in zip(bags, results))
