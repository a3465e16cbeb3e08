import pytest

from bamsim import (
    DuplicateNodeError,
    ResourceClass,
    SelfLinkError,
    UnknownEndpointError,
    UnknownLinkError,
    build_network,
    connectivity,
    validate_capacity,
)


def classes(*constraints):
    return [ResourceClass(index=i, priority=i, constraint=c) for i, c in enumerate(constraints)]


def test_two_node_link_carries_capacity_both_ways():
    g = build_network(["a", "b"], [("a", "b", 100, 100)])
    assert g.capacity[("a", "b")] == 100
    assert g.capacity[("b", "a")] == 100
    assert g.has_link("a", "b") and g.has_link("b", "a")


def test_single_capacity_spreads_to_both_directions():
    g = build_network(["a", "b"], [("a", "b", 40)])
    assert g.capacity[("a", "b")] == 40
    assert g.capacity[("b", "a")] == 40


def test_single_node_graph_is_valid_and_unconnected():
    g = build_network(["a"], [])
    assert g.nodes == ("a",)
    assert g.links == ()
    assert connectivity(g).entries == ((0,),)


def test_self_link_rejected():
    with pytest.raises(SelfLinkError) as exc:
        build_network(["a", "b"], [("a", "a", 5, 5)])
    assert exc.value.node == "a"


def test_duplicate_node_rejected():
    with pytest.raises(DuplicateNodeError) as exc:
        build_network(["a", "b", "a"], [])
    assert exc.value.node == "a"


def test_unknown_endpoint_rejected():
    with pytest.raises(UnknownEndpointError) as exc:
        build_network(["a", "b"], [("a", "c", 10, 10)])
    assert exc.value.node == "c"


def test_negative_capacity_rejected():
    with pytest.raises(ValueError):
        build_network(["a", "b"], [("a", "b", -1, 10)])


def test_connectivity_two_nodes_one_link():
    g = build_network(["a", "b"], [("a", "b", 1, 1)])
    assert connectivity(g).entries == ((0, 1), (1, 0))


def test_connectivity_three_nodes_chain():
    g = build_network(["a", "b", "c"], [("a", "b", 1, 1), ("b", "c", 1, 1)])
    m = connectivity(g)
    assert m.at("a", "c") == 0
    assert m.at("a", "b") == 1
    assert m.at("b", "c") == 1


def test_connectivity_symmetric_zero_diagonal_random_graphs():
    import random

    rng = random.Random(7)
    for _ in range(50):
        n = rng.randint(1, 6)
        nodes = [f"n{i}" for i in range(n)]
        links = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.5:
                    links.append((nodes[i], nodes[j], rng.randint(0, 50), rng.randint(0, 50)))
        m = connectivity(build_network(nodes, links))
        for i in range(n):
            assert m.entries[i][i] == 0
            for j in range(n):
                assert m.entries[i][j] == m.entries[j][i]


def test_validate_capacity_exact_fit_is_ok():
    g = build_network(["a", "b"], [("a", "b", 100, 100)])
    check = validate_capacity(g, ("a", "b"), classes(30, 50, 20))
    assert check.ok
    assert check.deficit == 0


def test_validate_capacity_reports_deficit():
    g = build_network(["a", "b"], [("a", "b", 100, 100)])
    check = validate_capacity(g, ("a", "b"), classes(60, 50, 20))
    assert not check.ok
    assert check.deficit == 30


def test_validate_capacity_empty_classes_on_zero_capacity():
    g = build_network(["a", "b"], [("a", "b", 0, 0)])
    assert validate_capacity(g, ("a", "b"), []).ok


def test_validate_capacity_unknown_link():
    g = build_network(["a", "b", "c"], [("a", "b", 10, 10)])
    with pytest.raises(UnknownLinkError):
        validate_capacity(g, ("a", "c"), classes(5))


def test_validate_capacity_matches_direct_sum_on_random_configs():
    import random

    rng = random.Random(11)
    g = build_network(["a", "b"], [("a", "b", 60, 45)])
    for _ in range(200):
        cfgs = classes(*(rng.randint(0, 30) for _ in range(rng.randint(0, 4))))
        for link in (("a", "b"), ("b", "a")):
            check = validate_capacity(g, link, cfgs)
            assert check.ok == (sum(c.constraint for c in cfgs) <= g.capacity[link])
