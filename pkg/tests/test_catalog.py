import math

import numpy as np
import pytest

from modco.catalog import (Assembly, ModuleCatalog, ModuleKind,
                           assembly_length, missing_module_cost,
                           validate_assembly)

from conftest import random_default_assembly


def test_default_catalog_loads(default_catalog):
    kinds = {k: default_catalog.ids_of_kind(k) for k in ModuleKind}
    assert len(kinds[ModuleKind.BASE]) == 4
    assert len(kinds[ModuleKind.JOINT]) == 2
    assert len(kinds[ModuleKind.EEF]) == 2
    assert len(kinds[ModuleKind.LINK]) >= 5
    for m in default_catalog.types.values():
        span = (m.proximal_frame.inverse() @ m.distal_frame).t
        assert m.length + 1e-9 >= np.linalg.norm(span)


def test_validate_well_formed_chain(default_catalog):
    a = Assembly(["base_big_up", "joint_big", "link_l_big_350", "joint_big", "eef_big"])
    assert validate_assembly(a, default_catalog) == []


def test_validate_missing_base(default_catalog):
    a = Assembly(["joint_big", "eef_big"])
    violations = validate_assembly(a, default_catalog)
    assert any("not a base" in v for v in violations)


def test_validate_size_mismatch(default_catalog):
    a = Assembly(["base_big_up", "joint_small", "eef_big"])
    violations = validate_assembly(a, default_catalog)
    assert any("size mismatch" in v for v in violations)


def test_validate_unknown_id(default_catalog):
    with pytest.raises(KeyError):
        validate_assembly(Assembly(["base_big_up", "nope", "eef_big"]), default_catalog)


def test_missing_modules_within_stock(default_catalog):
    cat = default_catalog.with_availability({"joint_small": 4})
    a = Assembly(["base_small_up"] + ["joint_small"] * 3 + ["eef_small"])
    assert missing_module_cost(a, cat) == 0


def test_missing_modules_over_stock(default_catalog):
    cat = default_catalog.with_availability({"joint_small": 4})
    a = Assembly(["base_small_up"] + ["joint_small"] * 5 + ["eef_small"])
    assert missing_module_cost(a, cat) == 1


def test_missing_modules_two_types():
    # derived oracle: per-type max(0, used - available), summed
    cat = ModuleCatalog.default().with_availability({"joint_small": 2, "joint_big": 2})
    a = Assembly(["base_small_up"] + ["joint_small"] * 3 + ["joint_big"] * 3 + ["eef_small"])
    assert missing_module_cost(a, cat) == 2


def test_missing_modules_unlimited_by_default(default_catalog):
    a = Assembly(["base_small_up"] + ["joint_small"] * 40 + ["eef_small"])
    assert missing_module_cost(a, default_catalog) == 0


def test_missing_module_cost_monotone(default_catalog):
    rng = np.random.default_rng(5)
    cat = default_catalog.with_availability({"joint_small": 1, "link_i_small_150": 0})
    for _ in range(50):
        a = random_default_assembly(rng, cat, size="small")
        base_cost = missing_module_cost(a, cat)
        grown = Assembly(list(a.module_ids[:-1]) + ["joint_small", a.module_ids[-1]])
        assert missing_module_cost(grown, cat) >= base_cost


def test_assembly_length_sums():
    cat = ModuleCatalog.default()
    a = Assembly(["base_small_up", "link_i_small_150", "eef_small"])
    assert assembly_length(a, cat) == pytest.approx(0.10 + 0.15 + 0.12)


def test_assembly_length_empty():
    assert assembly_length(Assembly([]), ModuleCatalog.default()) == 0.0


def test_assembly_length_demo_arm(default_catalog):
    # shipped default values: base 0.12 + joint 0.2 + L-link 0.35 + joint 0.2 + eef 0.15
    a = Assembly(["base_big_up", "joint_big", "link_l_big_350", "joint_big", "eef_big"])
    expected = sum(default_catalog[m].length for m in a)
    assert assembly_length(a, default_catalog) == pytest.approx(expected)
    assert expected == pytest.approx(1.02)


def test_catalog_json_round_trip(default_catalog):
    obj = default_catalog.to_json()
    back = ModuleCatalog.from_json(obj)
    assert set(back.types) == set(default_catalog.types)
    m0 = default_catalog["joint_big"]
    m1 = back["joint_big"]
    np.testing.assert_allclose(m0.inertia, m1.inertia, atol=1e-12)
    assert m0.joint.tau_max == m1.joint.tau_max
    assert math.isinf(back.available("joint_big"))
