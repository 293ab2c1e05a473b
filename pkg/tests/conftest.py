import numpy as np
import pytest

from ctxae.ais import AisMessage, NavStatus, Trajectory, VesselType


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_message(mmsi=1001, timestamp=0, lat=10.0, lon=-30.0, sog=8.0,
                 cog=45.0, heading=44.0, nav_status=NavStatus.UNDER_WAY_USING_ENGINE,
                 vessel_type=VesselType.DRIFTING_LONGLINES) -> AisMessage:
    return AisMessage(mmsi=mmsi, timestamp=timestamp, lat=lat, lon=lon,
                      sog=sog, cog=cog, heading=heading, nav_status=nav_status,
                      vessel_type=vessel_type)


def make_trajectory(n=5, mmsi=1001, dt=30, dlat=0.001, **kw) -> Trajectory:
    msgs = [make_message(mmsi=mmsi, timestamp=i * dt, lat=10.0 + i * dlat, **kw)
            for i in range(n)]
    return Trajectory(mmsi=mmsi, messages=tuple(msgs))
