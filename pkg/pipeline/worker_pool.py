import asyncio
import concurrent.futures
import heapq
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from kdvist.common.exceptions import KdvIstError
from kdvist.common.serialization import cloudpickle_deserialization, cloudpickle_serialization

# items per executor submission; smaller batches give smoother progress, larger ones less pickling
BATCH_SIZE: int = 8

# engine installed once per worker process by the pool initializer
_ENGINE: object | None = None


def _install_engine(payload: bytes):
    global _ENGINE
    _ENGINE = cloudpickle_deserialization(payload)


def _run_batch(task: str, batch: list[tuple[int, tuple]]) -> list[tuple[int, object | None, str | None]]:
    out = []
    for index, args in batch:
        try:
            out.append((index, getattr(_ENGINE, task)(*args), None))
        except KdvIstError as e:
            out.append((index, None, f'{type(e).__name__}: {e}'))
    return out


@dataclass
class Worker(object):
    worker_id: int
    # (item index, call arguments), in the order the items were scheduled
    assigned_items: list[tuple[int, tuple]] = field(default_factory=list)
    assigned_cost: float = 0.0

    @property
    def priority(self) -> float:
        return self.assigned_cost

    def batches(self, batch_size: int = BATCH_SIZE) -> list[list[tuple[int, tuple]]]:
        return [self.assigned_items[i:i + batch_size] for i in range(0, len(self.assigned_items), batch_size)]

    def __hash__(self):
        return hash(self.worker_id)


@dataclass
class PoolOutcome:
    # results[i] belongs to items[i]; failed items hold None
    results: list[object | None]
    failures: list[tuple[int, str]]

    @property
    def ok(self) -> bool:
        return not self.failures


class WorkerPool(object):
    """Least-loaded scheduling of independent work items over a process pool.

    Items carry an estimated cost; each goes to the worker with the smallest assigned cost, ties broken by worker
    id, so the assignment (and hence every per-worker computation) is deterministic. Results are merged back by
    item index, never by completion order.
    """

    def __init__(self, n_workers: int = 1, batch_size: int = BATCH_SIZE):
        if n_workers < 1:
            raise KdvIstError(f'worker count must be positive, got {n_workers}')
        self.n_workers = n_workers
        self.batch_size = batch_size
        self._queue: list[list[float | int | Worker]] = []
        self._index: int = 0

    def _put(self, worker: Worker):
        # O(log(n)) [heappush]
        heapq.heappush(self._queue, [worker.priority, worker.worker_id, self._index, worker])
        self._index += 1

    def _pop(self) -> Worker:
        # O(log(n)) [heappop]
        return heapq.heappop(self._queue)[-1]

    def schedule(self, items: Sequence[tuple], costs: Sequence[float] | None = None) -> list[Worker]:
        self._queue = []
        self._index = 0
        for worker_id in range(1, self.n_workers + 1):
            self._put(Worker(worker_id=worker_id))
        for index, args in enumerate(items):
            worker = self._pop()
            worker.assigned_items.append((index, tuple(args)))
            worker.assigned_cost += 1.0 if costs is None else float(costs[index])
            self._put(worker)
        workers = [entry[-1] for entry in self._queue]
        return sorted(workers, key=lambda w: w.worker_id)

    async def map(self,
                  engine: object,
                  task: str,
                  items: Sequence[tuple],
                  costs: Sequence[float] | None = None,
                  progress: Callable[[int], None] | None = None) -> PoolOutcome:
        """Calls `engine.<task>(*item)` for every item.

        The engine is cloudpickled once and installed in each worker process. A `KdvIstError` raised by one item
        is recorded against its index and the other items still run.
        """
        results: list[object | None] = [None] * len(items)
        failures: list[tuple[int, str]] = []
        workers = self.schedule(items, costs)
        batches = [batch for worker in workers for batch in worker.batches(self.batch_size)]

        def collect(done: list[tuple[int, object | None, str | None]]):
            for index, value, error in done:
                results[index] = value
                if error is not None:
                    failures.append((index, error))
            if progress is not None:
                progress(len(done))

        if self.n_workers == 1:
            _install_engine(cloudpickle_serialization(engine))
            for batch in batches:
                collect(_run_batch(task, batch))
                # let the event loop flush pending log records between batches
                await asyncio.sleep(0)
        else:
            loop = asyncio.get_running_loop()
            payload = cloudpickle_serialization(engine)
            with concurrent.futures.ProcessPoolExecutor(self.n_workers,
                                                        initializer=_install_engine,
                                                        initargs=(payload,)) as pool:
                pending = [loop.run_in_executor(pool, _run_batch, task, batch) for batch in batches]
                for future in asyncio.as_completed(pending):
                    collect(await future)
        failures.sort()
        return PoolOutcome(results=results, failures=failures)
