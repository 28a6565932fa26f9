from __future__ import annotations

import copy

import numpy as np
import pytest
import yaml

from combsim.errors import ScenarioError
from combsim.scenario import (
    build_context,
    build_layers,
    build_phi,
    export_scenario,
    load_scenario,
    parse_scenario,
    perturb_scenario,
)


@pytest.fixture()
def raw(arrhenius_scenario):
    return copy.deepcopy(arrhenius_scenario.to_dict())


class TestParsing:
    def test_shipped_scenarios_load(self, scenario_dir):
        for name in ("constant_2layer", "diffusion_2layer", "arrhenius_2layer"):
            scn = load_scenario(scenario_dir / f"{name}.yaml")
            assert scn.name == name
            assert scn.n_layers == 2

    def test_round_trip_canonical(self, arrhenius_scenario):
        text = export_scenario(arrhenius_scenario)
        again = parse_scenario(yaml.safe_load(text))
        assert again.to_dict() == arrhenius_scenario.to_dict()
        assert export_scenario(again) == text

    def test_unknown_key_rejected(self, raw):
        raw["turbo"] = True
        with pytest.raises(ScenarioError, match="turbo"):
            parse_scenario(raw)

    def test_wrong_q_count(self, raw):
        raw["coupling"]["q"] = [0.1, 0.2]
        with pytest.raises(ScenarioError, match="coupling.q"):
            parse_scenario(raw)

    def test_negative_q_rejected(self, raw):
        raw["coupling"]["q"] = [-0.1]
        with pytest.raises(ScenarioError, match="nonnegative"):
            parse_scenario(raw)

    def test_time_dependent_coefficient_rejected(self, raw):
        raw["layers"][0]["a"] = {"type": "gauss", "center": [0.0, 1.0], "width": 1.0, "amp": 0.1}
        with pytest.raises(ScenarioError, match="must not depend on time"):
            parse_scenario(raw)

    def test_bad_expression_path_named(self, raw):
        raw["layers"][1]["d"] = {"type": "gauss", "amp": 1.0}
        with pytest.raises(ScenarioError, match=r"layers\[1\]\.d"):
            parse_scenario(raw)

    def test_missing_layer_field(self, raw):
        del raw["layers"][0]["lambda"]
        with pytest.raises(ScenarioError, match="lambda"):
            parse_scenario(raw)

    def test_nx_too_small(self, raw):
        raw["grid"]["nx"] = 4
        with pytest.raises(ScenarioError, match="grid.nx"):
            parse_scenario(raw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_scenario(tmp_path / "nope.yaml")


class TestBuilders:
    def test_coupling_distribution(self, arrhenius_scenario):
        layers, fuel = build_layers(arrhenius_scenario)
        q = arrhenius_scenario.to_dict()["coupling"]["q"][0]
        assert layers[0].q_left == 0.0 and layers[0].q_right == q
        assert layers[1].q_left == q and layers[1].q_right == 0.0
        assert layers[0].qbar == 0.1 and layers[1].qbar == 0.1
        assert all(p.E == 1.0 and p.u_e == 0.0 for p in layers)
        assert fuel.n_layers == 2 and not fuel.time_dependent

    def test_three_layer_coupling(self, raw):
        raw["layers"].append(copy.deepcopy(raw["layers"][1]))
        raw["coupling"]["q"] = [0.3, 0.2]
        scn = parse_scenario(raw)
        layers, _ = build_layers(scn)
        assert layers[1].q_left == 0.3 and layers[1].q_right == 0.2
        assert layers[1].qbar == 0.0
        assert layers[2].q_left == 0.2 and layers[2].q_right == 0.0

    def test_phi_decay_validated(self, raw):
        raw["layers"][0]["phi"] = {"type": "gauss", "center": 0.0, "width": 5.0, "amp": 1.0}
        scn = parse_scenario(raw)
        with pytest.raises(ScenarioError, match="decay"):
            build_phi(scn)

    def test_context_rho_from_phi(self, arrhenius_scenario):
        ctx, phi = build_context(arrhenius_scenario)
        from combsim.grid import h2_array

        expected = max(h2_array(p.values, ctx.grid.dx) for p in phi)
        assert ctx.rho == pytest.approx(expected)

    def test_window_rho_override_enlarges(self, raw):
        raw["window"] = {"rho": 5.0}
        scn = parse_scenario(raw)
        ctx, _ = build_context(scn)
        assert ctx.rho == 5.0


class TestPerturbScenario:
    def test_perturb_adds_to_field(self, arrhenius_scenario):
        add = {"type": "gauss", "center": 0.0, "width": 1.0, "amp": 0.01}
        pscn = perturb_scenario(arrhenius_scenario, "a", 0, add)
        base_layers, fuel = build_layers(arrhenius_scenario)
        pert_layers, _ = build_layers(pscn)
        x = arrhenius_scenario.grid().nodes()
        from combsim.expressions import parse_expression

        delta = parse_expression(add)(x, 0.0)
        assert pert_layers[0].a.value.values - base_layers[0].a.value.values == pytest.approx(delta, abs=1e-15)
        # untouched layer and untouched fields stay identical
        assert np.array_equal(pert_layers[1].a.value.values, base_layers[1].a.value.values)
        assert np.array_equal(pert_layers[0].b.value.values, base_layers[0].b.value.values)

    def test_perturb_cx_goes_through_c(self, arrhenius_scenario):
        add = {"type": "gauss", "center": 0.0, "width": 1.0, "amp": 0.01}
        pscn = perturb_scenario(arrhenius_scenario, "c_x", "all", add)
        base_layers, _ = build_layers(arrhenius_scenario)
        pert_layers, _ = build_layers(pscn)
        from combsim.expressions import parse_expression

        x = arrhenius_scenario.grid().nodes()
        d1 = parse_expression(add).dx()(x, 0.0)
        assert pert_layers[0].c.d1.values - base_layers[0].c.d1.values == pytest.approx(d1, abs=1e-15)

    def test_perturbed_scenario_round_trips(self, arrhenius_scenario):
        add = {"type": "gauss", "center": 0.0, "width": 1.0, "amp": 0.01}
        pscn = perturb_scenario(arrhenius_scenario, "y", "all", add)
        text = export_scenario(pscn)
        assert parse_scenario(yaml.safe_load(text)).to_dict() == pscn.to_dict()

    def test_unknown_target(self, arrhenius_scenario):
        with pytest.raises(ScenarioError, match="cannot perturb"):
            perturb_scenario(arrhenius_scenario, "phi", 0, 1.0)
