import pytest

from chanagg.cli import builtin_scenario
from chanagg.policy import PolicyKind, SuRequest, SystemState
from chanagg.queues import DualQueueController
from chanagg.spectrum import SnrClass, SpectrumPool


@pytest.fixture
def default_scenario():
    return builtin_scenario("default.scn")


def make_state(channels, slots, policy, q1=0, q2=0, deadline=None, strict_hol=False):
    pool = SpectrumPool(channels, slots)
    fn = (lambda req, now: now + deadline) if deadline is not None else None
    return SystemState(pool, PolicyKind(policy), DualQueueController(q1, q2, strict_hol), fn)


def req(su_id, theta=1, tmin=None, tmax=None, t=None, queue=0):
    tmax = theta if tmax is None else tmax
    tmin = tmax if tmin is None else tmin
    return SuRequest(su_id, "i", float(su_id) if t is None else t, theta, tmin, tmax,
                     SnrClass.GOOD, queue)
