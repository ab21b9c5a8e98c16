import pytest

from elastiq.controller import LearningParams, RewardParams
from elastiq.simcore import Cluster, NodeModel, default_op_table


@pytest.fixture
def op_table():
    return default_op_table()


@pytest.fixture
def node(op_table):
    return NodeModel(
        op_table=op_table,
        s0_s=0.05,
        cores_eff=4.0,
        p_idle_w=2.5,
        p_dyn_max_w=6.0,
        rho_cap=0.95,
        rt_sat_s=2.0,
    )


@pytest.fixture
def cluster(node):
    return Cluster(node, n_max=4, r_u=1.0, interval_s=1.0)


@pytest.fixture
def reward_params():
    return RewardParams(t_rt_s=0.2, beta0=2.0, beta1=1.0, r_max=100.0)


@pytest.fixture
def learning_params():
    return LearningParams(alpha=0.5, gamma=0.5, epsilon0=0.15, epsilon_decay=0.995, bin_width=25)
