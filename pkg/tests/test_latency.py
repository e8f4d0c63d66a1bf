"""Closed-form uplink/downlink latency and the equal-rate optimality."""

import numpy as np
import pytest

from fedinc.latency import (
    Assignment,
    RateAllocation,
    downlink_latency,
    equal_rate_allocation,
    evaluate_assignment,
    evaluate_with_rates,
)
from fedinc.model import CLOUD, NodeCapacities, Topology, UserProfile

D = 1_856_000_000  # 232 MB in decimal bits


def star_topology(k, cloud_up=2e9, cloud_down=2e9):
    caps = NodeCapacities.uniform(0, 1e9, 1e9, cloud_up, cloud_down)
    return Topology(area_side_m=1.0, edge_positions=np.zeros((0, 2)), capacities=caps,
                    users=[UserProfile() for _ in range(k)],
                    reachable=[frozenset({CLOUD})] * k)


def one_edge_topology(k, fronthaul=1e9, backhaul=1e9, cloud_up=2e9):
    caps = NodeCapacities.uniform(1, fronthaul, backhaul, cloud_up, 2e9)
    return Topology(area_side_m=1.0, edge_positions=[(0.0, 0.0)], capacities=caps,
                    users=[UserProfile() for _ in range(k)],
                    reachable=[frozenset({0, 1})] * k)


def test_downlink_broadcast():
    assert downlink_latency(D, 2e9) == pytest.approx(0.928, abs=1e-12)
    with pytest.raises(ValueError):
        downlink_latency(0, 2e9)


def test_only_cloud_500_users():
    topo = star_topology(500)
    asg = Assignment.from_nodes(np.zeros(500, dtype=int), 0)
    rep = evaluate_assignment(asg, topo, D)
    assert rep.uplink_s == pytest.approx(464.0, abs=1e-9)
    assert rep.bottleneck_node == CLOUD


def test_ten_users_one_edge_inc():
    topo = one_edge_topology(10)
    asg = Assignment.from_nodes(np.ones(10, dtype=int), 1)
    rep = evaluate_assignment(asg, topo, D, inc_enabled=True)
    # 10 fronthaul shares plus a single merged forward: 10*1.856 + 1.856
    assert rep.uplink_s == pytest.approx(20.416, abs=1e-9)
    assert rep.edge_backhaul_s[0] == pytest.approx(1.856, abs=1e-12)


def test_ten_users_one_edge_non_inc():
    topo = one_edge_topology(10)
    asg = Assignment.from_nodes(np.ones(10, dtype=int), 1)
    rep = evaluate_assignment(asg, topo, D, inc_enabled=False)
    # every copy crosses the backhaul: 18.56 + 18.56
    assert rep.uplink_s == pytest.approx(37.12, abs=1e-9)


def test_empty_node_contributes_zero():
    topo = one_edge_topology(4)
    asg = Assignment.from_nodes(np.zeros(4, dtype=int), 1)
    rep = evaluate_assignment(asg, topo, D)
    assert rep.per_node_uplink_s[1] == 0.0
    assert rep.edge_backhaul_s[0] == 0.0


def test_inc_never_slower():
    rng = np.random.default_rng(12)
    caps = NodeCapacities(fronthaul_bps=rng.uniform(0.5e9, 4e9, 3),
                          backhaul_bps=rng.uniform(0.5e9, 4e9, 3),
                          cloud_up_bps=2e9, cloud_down_bps=2e9)
    topo = Topology(area_side_m=1.0, edge_positions=np.zeros((3, 2)), capacities=caps,
                    users=[UserProfile() for _ in range(30)],
                    reachable=[frozenset({0, 1, 2, 3})] * 30)
    for _ in range(50):
        asg = Assignment.from_nodes(rng.integers(0, 4, 30), 3)
        on = evaluate_assignment(asg, topo, D, inc_enabled=True).uplink_s
        off = evaluate_assignment(asg, topo, D, inc_enabled=False).uplink_s
        assert on <= off + 1e-12


def test_moving_a_user_is_local():
    """Reassigning one user only touches the two nodes involved."""
    rng = np.random.default_rng(4)
    caps = NodeCapacities(fronthaul_bps=rng.uniform(0.5e9, 4e9, 4),
                          backhaul_bps=rng.uniform(0.5e9, 4e9, 4),
                          cloud_up_bps=2e9, cloud_down_bps=2e9)
    topo = Topology(area_side_m=1.0, edge_positions=np.zeros((4, 2)), capacities=caps,
                    users=[UserProfile() for _ in range(20)],
                    reachable=[frozenset(range(5))] * 20)
    nodes = rng.integers(0, 5, 20)
    before = evaluate_assignment(Assignment.from_nodes(nodes, 4), topo, D)
    moved = nodes.copy()
    moved[7] = (nodes[7] + 2) % 5
    after = evaluate_assignment(Assignment.from_nodes(moved, 4), topo, D)
    for m in range(5):
        if m not in (nodes[7], moved[7]):
            assert after.per_node_uplink_s[m] == before.per_node_uplink_s[m]


def test_assignment_validation():
    with pytest.raises(ValueError):
        Assignment(np.array([[1, 1], [0, 1]]))  # row sums 2
    with pytest.raises(ValueError):
        Assignment(np.array([[0.5, 0.5]]))      # fractional entries
    with pytest.raises(ValueError):
        Assignment(np.array([1, 0]))            # 1-D
    with pytest.raises(ValueError):
        Assignment.from_nodes([0, 3], num_edges=1)
    with pytest.raises(ValueError):
        Assignment(np.eye(2, dtype=int), user_ids=[5])


def test_assignment_roundtrip():
    asg = Assignment.from_nodes([2, 0, 2, 1], 2)
    np.testing.assert_array_equal(asg.nodes, [2, 0, 2, 1])
    np.testing.assert_array_equal(asg.loads, [1, 1, 2])


def test_reachability_enforced():
    topo = one_edge_topology(2)
    narrowed = Topology(area_side_m=1.0, edge_positions=[(0.0, 0.0)],
                        capacities=topo.capacities,
                        users=[UserProfile(), UserProfile()],
                        reachable=[frozenset({0, 1}), frozenset({0})])
    asg = Assignment.from_nodes([1, 1], 1)
    with pytest.raises(ValueError):
        evaluate_assignment(asg, narrowed, D)


def test_equal_rate_split_values():
    topo = star_topology(2)
    rates = equal_rate_allocation(Assignment.from_nodes([0, 0], 0), topo)
    np.testing.assert_allclose(rates.uplink_bps, [1e9, 1e9])

    topo = one_edge_topology(4)
    rates = equal_rate_allocation(Assignment.from_nodes([1, 1, 1, 1], 1), topo)
    np.testing.assert_allclose(rates.uplink_bps, [0.25e9] * 4)


def test_equal_rates_match_closed_form():
    topo = one_edge_topology(7)
    asg = Assignment.from_nodes([0, 1, 1, 0, 1, 1, 1], 1)
    rates = equal_rate_allocation(asg, topo)
    direct = evaluate_with_rates(asg, topo, D, rates)
    assert direct == pytest.approx(evaluate_assignment(asg, topo, D).uplink_s, rel=1e-12)


def test_equal_rates_never_beaten():
    """Random feasible uneven splits are never faster than the equal split."""
    rng = np.random.default_rng(99)
    topo = one_edge_topology(6)
    asg = Assignment.from_nodes([0, 0, 1, 1, 1, 1], 1)
    baseline = evaluate_assignment(asg, topo, D).uplink_s
    nodes = asg.nodes
    for _ in range(200):
        rates = np.empty(6)
        for node, cap in ((0, 2e9), (1, 1e9)):
            member = np.flatnonzero(nodes == node)
            shares = rng.dirichlet(np.ones(member.size)) * cap
            rates[member] = np.maximum(shares, 1e-6)
        perturbed = evaluate_with_rates(asg, topo, D, RateAllocation(rates))
        assert perturbed >= baseline - 1e-9


def test_rate_validation():
    topo = one_edge_topology(2)
    asg = Assignment.from_nodes([1, 1], 1)
    with pytest.raises(ValueError):
        evaluate_with_rates(asg, topo, D, RateAllocation([0.9e9, 0.9e9]))  # over cap
    with pytest.raises(ValueError):
        evaluate_with_rates(asg, topo, D, RateAllocation([1e9]))  # misaligned
    with pytest.raises(ValueError):
        RateAllocation([1e9, -1.0])
