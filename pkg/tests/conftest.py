import math

import numpy as np
import pytest

from modco.catalog import (Assembly, JointSpec, ModuleCatalog, ModuleKind,
                           ModuleType, SizeClass)
from modco.spatial import Pose


def _module(mid, kind, size, length, mass, distal, com=None, inertia=None,
            joint=None, radius=0.04):
    distal_pose = distal if isinstance(distal, Pose) else Pose.from_translation(distal)
    com = np.asarray(com if com is not None else distal_pose.t / 2.0, dtype=float)
    inertia = np.asarray(inertia if inertia is not None else np.zeros((3, 3)), dtype=float)
    return ModuleType(id=mid, kind=kind, size_class=size, length=length,
                      mass=mass, com=com, inertia=inertia,
                      distal_frame=distal_pose, joint=joint, body_radius=radius)


def planar_catalog(link_length=0.5, base_height=0.1, link_mass=1.0,
                   v_max=1.0, a_max=1.0, tau_max=1e4, q_lim=math.pi):
    """Test catalog for planar arms: vertical-axis joints, x-direction links."""
    joint = JointSpec(axis=(0, 0, 1), q_min=-q_lim, q_max=q_lim, v_max=v_max,
                      a_max=a_max, tau_max=tau_max)
    mods = [
        _module("base_t", ModuleKind.BASE, SizeClass.SMALL, base_height, 1.0,
                (0, 0, base_height)),
        _module("joint_t", ModuleKind.JOINT, SizeClass.SMALL, 0.0, 0.5,
                (0, 0, 0), com=(0, 0, 0), joint=joint),
        _module("link_t", ModuleKind.LINK, SizeClass.SMALL, link_length,
                link_mass, (link_length, 0, 0)),
        _module("eef_t", ModuleKind.EEF, SizeClass.SMALL, 0.0, 0.2, (0, 0, 0),
                com=(0, 0, 0)),
    ]
    return ModuleCatalog(mods)


def pendulum_catalog(mass=2.0, length=0.7, tau_max=1e4):
    """Single revolute joint about y with a point mass at distance `length`."""
    joint = JointSpec(axis=(0, 1, 0), q_min=-2 * math.pi, q_max=2 * math.pi,
                      v_max=100.0, a_max=1e4, tau_max=tau_max)
    mods = [
        _module("base_p", ModuleKind.BASE, SizeClass.SMALL, 0.0, 1.0, (0, 0, 0),
                com=(0, 0, 0)),
        _module("joint_p", ModuleKind.JOINT, SizeClass.SMALL, 0.0, 0.0,
                (0, 0, 0), com=(0, 0, 0), joint=joint),
        _module("rod_p", ModuleKind.LINK, SizeClass.SMALL, length, mass,
                (0, 0, length), com=(0, 0, length)),
        _module("eef_p", ModuleKind.EEF, SizeClass.SMALL, 0.0, 0.0, (0, 0, 0),
                com=(0, 0, 0)),
    ]
    return ModuleCatalog(mods)


@pytest.fixture
def planar_2r():
    catalog = planar_catalog()
    assembly = Assembly(["base_t", "joint_t", "link_t", "joint_t", "link_t", "eef_t"])
    return catalog, assembly


@pytest.fixture
def default_catalog():
    return ModuleCatalog.default()


def random_default_assembly(rng, catalog, n_joints=None, size=None):
    """Random valid single-size chain from the default catalog."""
    size = size or rng.choice(["small", "big"])
    bases = [m for m in catalog.ids_of_kind(ModuleKind.BASE)
             if catalog[m].size_class.value == size]
    eefs = [m for m in catalog.ids_of_kind(ModuleKind.EEF)
            if catalog[m].size_class.value == size]
    joints = [m for m in catalog.ids_of_kind(ModuleKind.JOINT)
              if catalog[m].size_class.value == size]
    links = [m for m in catalog.ids_of_kind(ModuleKind.LINK)
             if catalog[m].size_class.value == size]
    n_joints = int(n_joints if n_joints is not None else rng.integers(1, 5))
    interior = []
    for _ in range(n_joints):
        interior.append(str(rng.choice(joints)))
        if rng.random() < 0.7:
            interior.append(str(rng.choice(links)))
    return Assembly([str(rng.choice(bases))] + interior + [str(rng.choice(eefs))])
