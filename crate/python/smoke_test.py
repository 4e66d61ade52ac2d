"""Smoke test for the `qest` Python extension.

Build and install first, e.g. `pip install maturin && maturin develop -m crates/py/Cargo.toml`.
"""

import json

import qest


def main():
    config = json.loads(qest.preset("qubit_rabi"))
    config["horizon"] = 2.0
    config["n_trajectories"] = 4
    text = json.dumps(config)

    first = json.loads(qest.simulate(text))
    again = json.loads(qest.simulate(text))
    assert first == again, "same seed must reproduce the same run"
    assert len(first["trajectories"]) == 4
    fid = first["stats"]["fidelity"]["mean"]
    assert fid[-1] > fid[0], f"mean fidelity did not grow: {fid[0]} -> {fid[-1]}"

    stuck = json.loads(qest.simulate(qest.preset("stuck_pair")))
    assert max(stuck["trajectories"][0]["fidelity"]) <= 1e-10

    half = [[0.5, 0.0], [0.0, 0.5]]
    sz = [[1.0, 0.0], [0.0, -1.0]]
    assert abs(qest.purity_rate(half, sz, 1.0) - 0.5) < 1e-12
    assert abs(qest.fidelity_rate(half, half, sz, 1.0) - 0.5) < 1e-12

    try:
        qest.preset("no_such_preset")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset should raise ValueError")

    print(f"ok: mean fidelity {fid[0]:.3f} -> {fid[-1]:.3f}")


if __name__ == "__main__":
    main()
