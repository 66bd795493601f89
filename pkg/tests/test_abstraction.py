import numpy as np
import pytest

from impulsym.abstraction import (AbstractState, ConcreteState, build_symbolic, check_nonblocking,
                                  concrete_post, dumps_model, parse_model_dump, post)
from impulsym.config import case_config
from impulsym.dynamics import flow_map, storage_delivery
from impulsym.geometry import Box, GridDomain, quantize
from oracles import naive_successors


def test_coarse_instance_matches_naive_oracle(coarse_case1):
    model = coarse_case1
    assert model.n_points == 26 and model.n_modes == 6 and model.n_inputs == 3
    oracle = naive_successors(model)
    m = model.n_inputs
    for (scen, i, j), (succ, esc) in oracle.items():
        tab = model.flow if scen == "F" else model.jump
        r = i * m + j
        assert tab.row(r).tolist() == succ, (scen, i, j)
        assert bool(tab.escape[r]) == esc, (scen, i, j)


def test_coarse_post_sets_match_oracle_for_every_state_input_pair(coarse_case1):
    model = coarse_case1
    oracle = naive_successors(model)
    pts = model.points
    count = 0
    for i in range(model.n_points):
        for l in range(model.n_modes):
            for j in range(model.n_inputs):
                want = []
                if l <= model.p2 - 1:
                    want += [(tuple(pts[s]), l + 1) for s in oracle[("F", i, j)][0]]
                if model.p1 <= l:
                    want += [(tuple(pts[s]), 0) for s in oracle[("J", i, j)][0]]
                got = post(model, AbstractState(tuple(pts[i]), l), j)
                assert set(got) == set(want)
                count += 1
    assert count == 26 * 6 * 3


def test_case1_counts_and_mode_windows(case1):
    model = case1[0].model
    assert model.n_points == 2501 and model.n_states == 15006 and model.n_inputs == 3
    q = tuple(model.points[1000])
    flow_only = post(model, AbstractState(q, 0), 1)
    jump_only = post(model, AbstractState(q, 5), 1)
    both = post(model, AbstractState(q, 3), 1)
    assert flow_only and all(s.mode == 1 for s in flow_only)
    assert jump_only and all(s.mode == 0 for s in jump_only)
    assert set(both) == {AbstractState(s.grid, 4) for s in flow_only} | set(jump_only)
    assert len(both) == len(flow_only) + len(jump_only)


def test_mode_algebra_on_coarse_instance(coarse_case1):
    model = coarse_case1
    for i in range(model.n_points):
        g = tuple(model.points[i])
        for l in range(model.n_modes):
            for j in range(model.n_inputs):
                for s in post(model, AbstractState(g, l), j):
                    assert s.mode in (0, l + 1)
                    if s.mode == l + 1:
                        assert l <= model.p2 - 1
                    if s.mode == 0:
                        assert l >= model.p1


def test_nominal_on_grid_point_contains_it():
    # a = 0, c = 0: the flow keeps x fixed, so the nominal is the grid point itself
    s = storage_delivery(0.0, 1.0, 0.0, 0.0, tau=0.2, p1=1, p2=2, inputs=[0.0],
                         region=Box((0.0,), (1.0,)))
    model = build_symbolic(s, 0.1)
    for i in range(model.n_points):
        row = model.flow.row(i).tolist()
        assert i in row
        assert row == [k for k in (i - 1, i, i + 1) if 0 <= k < model.n_points]


def test_nominal_far_outside_contributes_nothing():
    s = storage_delivery(-0.2, 0.9, 10.0, 100.0, tau=0.2, p1=1, p2=2, inputs=[1.0],
                         region=Box((25.0,), (50.0,)))
    model = build_symbolic(s, 0.5)
    assert np.all(model.jump.sizes() == 0) and np.all(model.jump.escape)


def test_concrete_post_scenarios():
    cfg = case_config(1)
    s = cfg.system()
    x = np.array([30.0])
    assert [c.mode for c in concrete_post(s, ConcreteState(x, 0), [1.0])] == [1]
    two = concrete_post(s, ConcreteState(x, 2), [1.0])
    assert [c.mode for c in two] == [3, 0]
    assert two[1].x[0] == pytest.approx(37.0)
    assert [c.mode for c in concrete_post(s, ConcreteState(x, 5), [1.0])] == [0]


def test_concrete_successor_quantizes_into_abstract_set(case1, rng):
    model = case1[0].model
    m = model.n_inputs
    for i in rng.integers(0, model.n_points, size=300):
        xh = model.domain.decode(model.points[i])
        for j, u in enumerate(model.inputs):
            xf = flow_map(model.system, xh, u)
            if model.domain.contains(xf[None], slack=model.eta / 2)[0]:
                q = quantize(xf, model.domain)
                pos = model.domain.lookup(q)[0]
                assert pos in model.flow.row(i * m + j)


def test_blocking_examples():
    s = storage_delivery(1.0, 3.0, 0.0, 0.0, tau=1.0, p1=1, p2=1, inputs=[0.0],
                         region=Box((0.9,), (1.1,)))
    model = build_symbolic(s, 0.2)
    assert model.n_points == 1
    rep = check_nonblocking(model)
    assert len(rep.blocking_states) == model.n_states == 2
    # identity dynamics on the whole grid block nothing
    s2 = storage_delivery(0.0, 1.0, 0.0, 0.0, tau=0.2, p1=1, p2=2, inputs=[0.0],
                          region=Box((0.0,), (1.0,)))
    assert check_nonblocking(build_symbolic(s2, 0.1)).nonblocking


def test_case1_interior_is_nonblocking(case1):
    model = case1[0].model
    rep = check_nonblocking(model)
    coords = model.points[rep.blocking_states[:, 0], 0] if len(rep.blocking_states) else []
    assert all(c < 2600 or c > 4900 for c in coords)


def test_builds_are_deterministic():
    cfg = case_config(2)
    a = build_symbolic(cfg.system(), 0.05)
    b = build_symbolic(cfg.system(), 0.05)
    assert dumps_model(a) == dumps_model(b)


def test_dump_round_trip(coarse_case1):
    model = coarse_case1
    parsed = parse_model_dump(dumps_model(model))
    assert int(parsed["header"]["points"]) == 26
    assert float(parsed["header"]["eta"]) == 1.0
    assert parsed["points"][3] == tuple(model.points[3])
    m = model.n_inputs
    for (i, j), (esc, succ) in parsed["flow"].items():
        assert list(succ) == model.flow.row(i * m + j).tolist()
        assert esc == bool(model.flow.escape[i * m + j])


def test_post_rejects_bad_arguments(coarse_case1):
    with pytest.raises(ValueError):
        post(coarse_case1, AbstractState((30,), 9), 0)
    with pytest.raises(KeyError):
        post(coarse_case1, AbstractState((80,), 0), 0)


def test_domain_override_must_agree_with_eta():
    s = case_config(1).system()
    with pytest.raises(ValueError):
        build_symbolic(s, 0.5, domain=GridDomain(s.region, 1.0))
