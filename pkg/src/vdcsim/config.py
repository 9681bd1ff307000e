"""JSON scenario configs: load, validate and map onto simulation objects.

A config document has five top-level keys: ``chain``, ``gains``,
``trajectory``, ``initial`` and ``integration``.  Trajectories are named
closed-form families so their first two derivatives are exact.  Validation
errors name the offending key.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .chain import ChainModel, FrictionModel, JointModel
from .controller import ControlGains, offset_cosine_trajectory
from .observer import JointObserverState, LinkObserverState, ObserverGains
from .sim import ClosedLoopState, ScenarioConfig
from .spatial import LinkModel
from .chain import forward_poses


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


def builtin_config(name: str) -> dict:
    """Built-in scenario documents by name (currently only ``twodof``)."""
    if name != "twodof":
        raise ConfigError(f"unknown builtin scenario {name!r}")
    return {
        "chain": {
            "base_rotation": 0.0,
            "links": [
                {"mass": 1.0, "com_offset": 1.0, "inertia_com": 1.0,
                 "length": 1.0, "gravity": 9.81},
                {"mass": 1.0, "com_offset": 1.0, "inertia_com": 1.0,
                 "length": 1.0, "gravity": 9.81},
            ],
            "joints": [
                {"rotor_inertia": 0.1,
                 "friction": {"kind": "tanh", "a": 1.0, "b": 1.0}},
                {"rotor_inertia": 0.1,
                 "friction": {"kind": "tanh", "a": 1.0, "b": 1.0}},
            ],
        },
        "gains": {
            "lambda": [10.0, 10.0],
            "k": [10.0, 10.0],
            "K_B": [100.0, 100.0],
            "L_B": [200.0, 200.0],
            "ell": [200.0, 200.0],
        },
        "trajectory": {
            "family": "offset_cosine",
            "offset": [0.8, 0.8],
            "amplitude": [-1.0, -1.0],
            "period": [8.0, 10.0],
        },
        "initial": {
            "q": [0.0, 0.0],
            "qdot": [0.0, 0.0],
            "q_hat": None,
            "z": [0.0, 0.0],
            "p_hat_offset": 0.0,
        },
        "integration": {"t_end": 20.0, "dt": 1e-4, "stride": 1},
    }


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"missing key {where}.{key}")
    return mapping[key]


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from a parsed config document."""
    try:
        ch = _require(doc, "chain", "")
        links = []
        for i, entry in enumerate(_require(ch, "links", "chain")):
            links.append(LinkModel(
                mass=_require(entry, "mass", f"chain.links[{i}]"),
                com_offset=_require(entry, "com_offset", f"chain.links[{i}]"),
                inertia_com=_require(entry, "inertia_com", f"chain.links[{i}]"),
                length=_require(entry, "length", f"chain.links[{i}]"),
                gravity=entry.get("gravity", 9.81)))
        joints = []
        for i, entry in enumerate(_require(ch, "joints", "chain")):
            fr = entry.get("friction", {"kind": "tanh", "a": 1.0, "b": 1.0})
            friction = FrictionModel(
                _require(fr, "kind", f"chain.joints[{i}].friction"),
                a=fr.get("a", 1.0), b=fr.get("b", 1.0))
            joints.append(JointModel(
                rotor_inertia=_require(entry, "rotor_inertia",
                                       f"chain.joints[{i}]"),
                friction=friction))
        chain = ChainModel(tuple(links), tuple(joints),
                           base_rotation=ch.get("base_rotation", 0.0))

        g = _require(doc, "gains", "")
        obs = ObserverGains(link_gain=_require(g, "L_B", "gains"),
                            joint_ell=_require(g, "ell", "gains"))
        ctl = ControlGains(lam=_require(g, "lambda", "gains"),
                           k=_require(g, "k", "gains"),
                           link_gain=_require(g, "K_B", "gains"))

        tr = _require(doc, "trajectory", "")
        family = _require(tr, "family", "trajectory")
        if family != "offset_cosine":
            raise ConfigError(f"unknown trajectory.family {family!r}")
        traj = offset_cosine_trajectory(
            _require(tr, "offset", "trajectory"),
            _require(tr, "amplitude", "trajectory"),
            _require(tr, "period", "trajectory"))

        init = _require(doc, "initial", "")
        q0 = np.asarray(_require(init, "q", "initial"), dtype=float)
        qdot0 = np.asarray(_require(init, "qdot", "initial"), dtype=float)
        q_hat0 = init.get("q_hat")
        if q_hat0 is None:
            q_hat0 = traj.position(0.0)
        q_hat0 = np.asarray(q_hat0, dtype=float)
        z0 = np.asarray(init.get("z", np.zeros(chain.n)), dtype=float)
        p_off = float(init.get("p_hat_offset", 0.0))
        poses = forward_poses(chain, q0)
        link_pose = np.array([poses[f"B{i + 1}"] for i in range(chain.n)])
        initial = ClosedLoopState(
            q=q0, qdot=qdot0, link_pose=link_pose,
            joint_obs=[JointObserverState(q_hat0[i], z0[i])
                       for i in range(chain.n)],
            link_obs=[LinkObserverState(link_pose[i] + p_off, np.zeros(3))
                      for i in range(chain.n)])

        it = _require(doc, "integration", "")
        return ScenarioConfig(
            chain, obs, ctl, traj, initial,
            t_end=float(_require(it, "t_end", "integration")),
            dt=float(_require(it, "dt", "integration")),
            stride=int(it.get("stride", 1)))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path) -> tuple[ScenarioConfig, dict]:
    """Read a config file; returns the scenario and the raw document."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc), doc
