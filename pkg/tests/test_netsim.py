"""Simulation substrate: scenario parsing, KPI processes, events, installs and walks."""

from __future__ import annotations

import math
import statistics

import pytest

from iraas.errors import BadSpec, ClockRegression, DeviceReadFailure, UnknownController, UnknownDevice
from iraas.netsim import ScenarioSpec, Simulation, advance, apply_install, export_topology, load_scenario

from conftest import FIXTURES


def small_doc(**extra):
    doc = {
        "seed": 1,
        "controllers": [
            {
                "controller_id": "c",
                "topology": {
                    "nodes": ["a", "b", "c"],
                    "links": [
                        {"a": "a", "b": "b", "link_id": "c/a-b"},
                        {"a": "b", "b": "c", "link_id": "c/b-c"},
                        {"a": "a", "b": "c", "link_id": "c/a-c"},
                    ],
                },
            }
        ],
        "kpi": {"period_ms": 100},
    }
    doc.update(extra)
    return doc


class TestScenario:
    def test_poc_fixture_shape(self):
        sim = load_scenario(FIXTURES / "poc_scenario.json")
        ctrl = sim.controllers["odl"]
        assert sorted(ctrl.nodes) == [f"s{i}" for i in range(1, 7)]
        assert len(ctrl.links) == 8
        assert all(len(n.hosts) == 2 for n in ctrl.nodes.values())

    def test_desk_scale_generator(self):
        sim = load_scenario(FIXTURES / "desk_scale_scenario.json")
        ctrl = next(iter(sim.controllers.values()))
        assert len(ctrl.nodes) == 100
        density = len(ctrl.links) / (100 * 99 / 2)
        assert 0.03 < density < 0.07

    def test_partial_mesh_generator(self):
        doc = small_doc()
        doc["controllers"] = [{"controller_id": "m", "generator": {"model": "partial-mesh", "nodes": 6, "degree": 3}}]
        ctrl = load_scenario(doc).controllers["m"]
        degrees = {n: len(ctrl.live_neighbors(n)) for n in ctrl.nodes}
        assert set(degrees.values()) == {3}

    @pytest.mark.parametrize(
        "events",
        [
            [{"at_ms": 50, "kind": "fail_link", "target": "c/a-b"}, {"at_ms": 10, "kind": "fail_link", "target": "c/a-b"}],
            [{"at_ms": 10, "kind": "fail_link", "target": "c/x-y"}],
            [{"at_ms": 10, "kind": "explode", "target": "c/a-b"}],
            [{"at_ms": 10, "kind": "remove_node", "target": "c:zz"}],
            [{"at_ms": 10, "kind": "add_link", "target": {"controller_id": "c", "a": "a", "b": "b", "link_id": "c/a-b"}}],
        ],
    )
    def test_bad_events(self, events):
        with pytest.raises(BadSpec):
            load_scenario(small_doc(events=events))

    def test_malformed_document(self):
        with pytest.raises(BadSpec):
            ScenarioSpec.from_document({"seed": 1})


class TestKpi:
    def test_advance_emits_one_sample_per_link_per_period(self):
        sim = load_scenario(small_doc())
        res = advance(sim, 1000)
        assert len(res.samples) == 3 * 10
        assert {s.timestamp for s in res.samples} == set(range(100, 1001, 100))

    def test_clock_regression(self):
        sim = load_scenario(small_doc())
        sim.advance(500)
        with pytest.raises(ClockRegression):
            sim.advance(400)

    def test_same_seed_same_values(self):
        a = [s.key() for s in load_scenario(small_doc()).advance(2000).samples]
        b = [s.key() for s in load_scenario(small_doc()).advance(2000).samples]
        assert a == b
        c = [s.key() for s in load_scenario(small_doc(seed=2)).advance(2000).samples]
        assert a != c

    def test_noise_statistics(self):
        doc = small_doc(
            kpi={"period_ms": 10, "attributes": {"latency": {"base": 5.0, "amplitude": 0.0, "noise_sigma": 0.5}}}
        )
        values = [s.values["latency"] for s in load_scenario(doc).advance(20000).samples]
        n = len(values)
        assert abs(statistics.fmean(values) - 5.0) < 4 * 0.5 / math.sqrt(n)
        assert statistics.pstdev(values) == pytest.approx(0.5, rel=0.1)

    def test_unit_interval_clamp(self):
        doc = small_doc(kpi={"period_ms": 10, "attributes": {"load": {"base": 0.99, "noise_sigma": 0.5}}})
        values = [s.values["load"] for s in load_scenario(doc).advance(2000).samples]
        assert min(values) >= 0.0 and max(values) <= 1.0

    def test_device_counters_and_read_failure(self):
        sim = load_scenario(small_doc())
        sim.advance(100)
        dev = sim.devices["c:a"]
        assert dev.device_links() == ["c/a-b", "c/a-c"]
        dev.fail_reads.add("c/a-b")
        with pytest.raises(DeviceReadFailure):
            dev.read("c/a-b")


class TestEvents:
    def test_fail_and_restore(self):
        events = [
            {"at_ms": 150, "kind": "fail_link", "target": "c/a-b"},
            {"at_ms": 350, "kind": "restore_link", "target": "c/a-b"},
        ]
        sim = load_scenario(small_doc(events=events))
        res = sim.advance(200)
        assert [e["kind"] for e in res.events] == ["fail_link"]
        assert not any(s.link_or_node_id == "c/a-b" and s.timestamp == 200 for s in res.samples)
        doc = export_topology(sim, "c")
        usable = {lk["link_id"]: lk["attrs"]["usable"] for lk in doc["links"]}
        assert usable["c/a-b"] is False
        sim.advance(400)
        assert sim.controllers["c"].links["c/a-b"].usable

    def test_event_applied_before_coinciding_tick(self):
        sim = load_scenario(small_doc(events=[{"at_ms": 100, "kind": "fail_link", "target": "c/a-b"}]))
        res = sim.advance(100)
        assert {s.link_or_node_id for s in res.samples} == {"c/b-c", "c/a-c"}

    def test_add_link_and_remove_node(self):
        events = [
            {"at_ms": 10, "kind": "remove_node", "target": "c:c"},
            {"at_ms": 20, "kind": "add_link", "target": {"controller_id": "c", "a": "b", "b": "a", "link_id": "c/b-a2"}},
        ]
        doc = small_doc(events=events)
        doc["controllers"][0]["topology"]["links"].pop(0)  # drop a-b so the re-add is legal
        sim = load_scenario(doc)
        sim.advance(30)
        topo = export_topology(sim, "c")
        assert [n["id"] for n in topo["nodes"]] == ["a", "b"]
        assert [lk["link_id"] for lk in topo["links"]] == ["c/b-a2"]
        assert "c:c" not in sim.devices

    def test_unknown_controller(self):
        with pytest.raises(UnknownController):
            export_topology(load_scenario(small_doc()), "zz")


class TestInstallAndWalk:
    def test_walk_follows_installed_hops(self):
        sim = load_scenario(small_doc())
        apply_install(sim, "c", [{"src": "c:a", "dst": "c:c", "next_hops": ["b", "c"]}])
        apply_install(sim, "c", [{"src": "c:b", "dst": "c:c", "next_hops": ["c"]}])
        walk = sim.forward_walk("c:a", "c:c")
        assert walk.reached and walk.path == ["c:a", "c:b", "c:c"]

    def test_walk_uses_floating_backup_when_primary_fails(self):
        sim = load_scenario(small_doc(events=[{"at_ms": 10, "kind": "fail_link", "target": "c/a-b"}]))
        apply_install(sim, "c", [{"src": "a", "dst": "c:c", "next_hops": ["b", "c"]}])
        sim.advance(10)
        walk = sim.forward_walk("c:a", "c:c")
        assert walk.reached and walk.path == ["c:a", "c:c"]

    def test_walk_failures(self):
        sim = load_scenario(small_doc())
        assert sim.forward_walk("c:a", "c:c").reason.startswith("no route")
        apply_install(sim, "c", [{"src": "a", "dst": "c:c", "next_hops": ["b"]}, {"src": "b", "dst": "c:c", "next_hops": ["a"]}])
        assert sim.forward_walk("c:a", "c:c").reason == "forwarding loop"

    def test_exterior_hop_enters_destination_controller(self):
        sim = load_scenario(FIXTURES / "two_controller_scenario.json")
        apply_install(sim, "c1", [{"src": "c1:a", "dst": "c2:b", "next_hops": ["exterior"]}])
        apply_install(sim, "c2", [{"src": "c2:a", "dst": "c2:b", "next_hops": ["b"]}])
        walk = sim.forward_walk("c1:a", "c2:b")
        assert walk.reached and walk.path == ["c1:a", "c2:a", "c2:b"]

    def test_install_rejects_foreign_devices(self):
        sim = load_scenario(FIXTURES / "two_controller_scenario.json")
        with pytest.raises(UnknownDevice):
            apply_install(sim, "c1", [{"src": "c2:a", "dst": "c2:b", "next_hops": ["b"]}])
        with pytest.raises(UnknownDevice):
            apply_install(sim, "c1", [{"src": "c1:zz", "dst": "c2:b", "next_hops": ["b"]}])


def test_simulation_is_constructible_from_spec():
    spec = ScenarioSpec.from_document(small_doc())
    assert Simulation(spec).now_ms == 0
