import pytest

from chanagg.queues import (FULL, DualQueueController, FifoQueue, QueuedEntry, dequeue_first_servable,
                            enqueue, expire_deadlines)


def entry(t, need=1, deadline=float("inf")):
    return QueuedEntry({"need": need, "t": t}, t, deadline)


def need(req):
    return req["need"]


def test_primary_then_overflow_then_full():
    ctrl = DualQueueController(2, 2)
    assert enqueue(entry(0), ctrl, primary=0) == 1
    assert enqueue(entry(1), ctrl, primary=0) == 1
    assert enqueue(entry(2), ctrl, primary=0) == 2
    assert enqueue(entry(3), ctrl, primary=0) == 2
    assert enqueue(entry(4), ctrl, primary=0) is FULL
    assert ctrl.occupancy() == (2, 2)


def test_class_j_prefers_queue_two():
    ctrl = DualQueueController(2, 2)
    assert enqueue(entry(0), ctrl, primary=1) == 2


def test_zero_capacity_is_always_full():
    assert enqueue(entry(0), DualQueueController(0, 0)) is FULL


def test_fifo_scan_skips_unservable_head():
    ctrl = DualQueueController(2, 2)
    head, second = entry(0, need=3), entry(1, need=2)
    enqueue(head, ctrl)
    enqueue(second, ctrl, primary=1)
    assert dequeue_first_servable(ctrl, 2, need) is second
    assert len(ctrl) == 1


def test_strict_head_of_line_waits():
    ctrl = DualQueueController(2, 2, strict_hol=True)
    enqueue(entry(0, need=3), ctrl)
    enqueue(entry(1, need=2), ctrl)
    assert dequeue_first_servable(ctrl, 2, need) is None
    assert len(ctrl) == 2


def test_global_fifo_across_queues():
    a, b, c = entry(0), entry(1), entry(2)
    ctrl = DualQueueController(2, 2)
    enqueue(a, ctrl, primary=1)
    enqueue(b, ctrl, primary=0)
    enqueue(c, ctrl, primary=1)
    assert [dequeue_first_servable(ctrl, 5, need) for _ in range(3)] == [a, b, c]


def test_nothing_fits_or_no_free_slots():
    ctrl = DualQueueController(2, 0)
    enqueue(entry(0, need=4), ctrl)
    enqueue(entry(1, need=5), ctrl)
    assert dequeue_first_servable(ctrl, 3, need) is None
    assert dequeue_first_servable(ctrl, 0, lambda r: 1 / 0) is None
    assert len(ctrl) == 2


def test_expire_deadlines():
    ctrl = DualQueueController(3, 0)
    es = [entry(0, deadline=5), entry(1, deadline=2), entry(2, deadline=9)]
    for e in es:
        enqueue(e, ctrl)
    assert expire_deadlines(ctrl, 1.0) == []
    assert expire_deadlines(ctrl, 2.0) == [es[1]]
    assert ctrl.in_fifo_order() == [es[0], es[2]]
    assert expire_deadlines(ctrl, 100) == [es[0], es[2]]
    assert ctrl.occupancy() == (0, 0)


def test_fifo_queue_guards():
    q = FifoQueue(1)
    q.push(entry(3))
    with pytest.raises(OverflowError):
        q.push(entry(4))
    q2 = FifoQueue(2)
    q2.push(entry(3))
    with pytest.raises(ValueError):
        q2.push(entry(1))
    with pytest.raises(ValueError):
        FifoQueue(-1)
    with pytest.raises(ValueError):
        QueuedEntry(None, 5.0, 4.0)
