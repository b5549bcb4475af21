#!/usr/bin/env python3
"""Smoke test for the evsched_py extension module.

Build the module first, then run this script from the repository root:

    cargo build -p evsched-py
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile


def import_extension():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates = [
        os.path.join(root, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libevsched_py.so", "evsched_py.so", "libevsched_py.dylib")
    ]
    built = [p for p in candidates if os.path.exists(p)]
    if not built:
        sys.exit("evsched_py is not built; run `cargo build -p evsched-py` first")
    stage = tempfile.mkdtemp(prefix="evsched_py_")
    shutil.copy(built[0], os.path.join(stage, "evsched_py.so"))
    sys.path.insert(0, stage)
    import evsched_py

    return evsched_py


def main():
    ev = import_extension()

    # action space of the headline configuration: 2 * 6 * 30 * 5
    assert ev.action_space_size(6, 30, 5) == 1800

    # pearson fidelity
    r = ev.pearson([1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 5.0, 4.0])
    assert abs(r - 0.8) < 1e-9, r
    try:
        ev.pearson([1.0, 1.0], [1.0, 2.0])
    except ValueError as e:
        assert "correlation" in str(e)
    else:
        sys.exit("expected an error for a constant series")

    # deterministic fleet generation
    fleet = ev.gen_fleet(6, mix=(0.5, 0.25, 0.25), seed=7)
    again = ev.gen_fleet(6, mix=(0.5, 0.25, 0.25), seed=7)
    assert [e.soc for e in fleet] == [e.soc for e in again]
    assert [e.id for e in fleet] == [1, 2, 3, 4, 5, 6]
    assert sum(e.model == "Renault ZOE 22" for e in fleet) == 3

    # the learning-check instance: two charge-eligible ZOE 41s
    program = ev.DrProgram("charge", [20.0, 3.12, 3.12])
    assert program.horizon == 3
    toy_fleet = [
        ev.ElectricVehicle(1, "Renault ZOE 22", 22.0, 22.0, "Type2", 0.88),
        ev.ElectricVehicle(2, "Renault ZOE 41", 22.0, 41.0, "Type2", 0.50),
        ev.ElectricVehicle(3, "Nissan LEAF", 7.0, 24.0, "CHAdeMO", 0.88),
        ev.ElectricVehicle(4, "Renault ZOE 41", 22.0, 41.0, "Type2", 0.50),
    ]

    best = ev.oracle(program, toy_fleet, 2)
    assert abs(best.l1_distance - 9.84) < 1e-9, best.l1_distance

    fcfs = ev.baseline(program, toy_fleet, 2)
    assert fcfs.l1_distance > best.l1_distance

    policy, rewards = ev.train(program, toy_fleet, 2, epochs=1500, seed=3)
    assert len(rewards) == 1500
    rollout = policy.rollout(program, toy_fleet, 2)
    assert rollout.l1_distance >= best.l1_distance - 1e-9
    assert len(rollout.per_slot_kwh) == 3
    for station, slot, ev_id, kind, energy in rollout.assignments:
        assert kind == "C" and energy > 0.0

    # training is deterministic per seed
    policy2, rewards2 = ev.train(program, toy_fleet, 2, epochs=1500, seed=3)
    assert rewards == rewards2
    assert policy.weights() == policy2.weights()

    # checkpoint round-trip
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "policy.bin")
        policy.save(path)
        reloaded = ev.Policy.load(path)
        assert reloaded.weights() == policy.weights()

    trained_gap = rollout.l1_distance
    print(f"oracle L1 {best.l1_distance:.3f} kWh | baseline {fcfs.l1_distance:.3f} | "
          f"trained rollout {trained_gap:.3f}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
