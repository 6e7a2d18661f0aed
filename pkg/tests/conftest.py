import numpy as np
import pytest

from danarm.config import load_config
from danarm.plant import ArmConfig


@pytest.fixture(scope="session")
def lab_config():
    return load_config()


@pytest.fixture(scope="session")
def default_arm(lab_config):
    return lab_config.arm


@pytest.fixture()
def pair_arm():
    """1-DOF joint driven by an antagonistic muscle pair, no zones/noise."""
    return ArmConfig(n_joints=1, n_muscles=2,
                     moment_arm=[[40.0], [-40.0]],
                     natural_length=[300.0, 310.0],
                     joint_lower=[-1.0], joint_upper=[1.0],
                     elastic_k=[0.5, 0.5])


@pytest.fixture()
def planar_arm():
    """2-DOF arm with a polyarticular muscle, used for zone grid checks."""
    return ArmConfig(n_joints=2, n_muscles=5,
                     moment_arm=[[50.0, 0.0], [-45.0, 0.0], [0.0, 40.0],
                                 [0.0, -38.0], [20.0, 25.0]],
                     natural_length=[300.0, 305.0, 295.0, 300.0, 320.0],
                     joint_lower=[-1.0, -0.8], joint_upper=[1.0, 1.2],
                     elastic_k=np.full(5, 0.4))
