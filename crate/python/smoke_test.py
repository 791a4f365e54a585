"""Smoke test for the qcbo_gadgets extension module.

Build and install first, e.g.
    pip install maturin && maturin develop -m crates/python/Cargo.toml
then run `python python/smoke_test.py`.
"""

import json
import math

import qcbo_gadgets as qg


def check(condition, message):
    if not condition:
        raise SystemExit(f"FAILED: {message}")
    print(f"ok: {message}")


def main():
    c = qg.Constraint("x0 + x1 = 1")
    check(c.coeffs == [1, 1] and c.sense == "=" and c.rhs == 1, "constraint parses")
    check(c.is_feasible([False, True]) and not c.is_feasible([True, True]), "feasibility")

    try:
        qg.Constraint("x0 ++ 1")
    except ValueError as err:
        check("position" in str(err), "malformed constraint reports a position")
    else:
        raise SystemExit("FAILED: malformed constraint was accepted")

    h = qg.diagonal_to_pauli([1, -1, -1, 1, -1, 1, 1, -1])
    check(h.terms == [([0, 1, 2], 1.0)], "label diagonal decomposes to one ZZZ term")

    hf = qg.qubo_to_ising(2, [(0, 1, 1.0), (0, 0, 3.0), (1, 1, 4.0)])
    check(hf.diagonal() == [0.0, 4.0, 3.0, 8.0], "Ising form reproduces the objective")

    g = qg.train_gadget(["x0 + x1 = 1"], restarts=6)
    check(g.gadget_ar > 0.999, f"gadget_ar {g.gadget_ar:.6f}")
    check(abs(g.proper_mass() - g.gadget_ar) < 1e-9, "gadget_ar is the proper mass")
    probs = g.probabilities()
    check(math.isclose(sum(probs), 1.0, abs_tol=1e-9), "state is normalized")
    check(len(g.amplitudes()) == 8 and isinstance(g.amplitudes()[0], complex), "amplitudes")
    json.loads(g.to_json())

    inst = qg.Instance(2, [(0, 1, 1.0), (0, 0, 3.0), (1, 1, 4.0)], ["x0 + x1 = 1"])
    check(inst.brute_force() == (3.0, ["10"]), "brute force optimum")
    report = qg.solve(inst, g, delta=10.0)
    check(report.modal_ket == "100", f"modal ket {report.modal_ket}")
    check(report.p_opt > report.baseline, f"p_opt {report.p_opt:.4f} beats {report.baseline}")
    check(json.loads(report.to_json())["modal_ket"] == "100", "report JSON")

    store = qg.GadgetStore()
    _, hit = store.get_or_train(["x0 + 2x1 <= 2"], restarts=4)
    moved, hit2 = store.get_or_train(["2x3 + x5 <= 2"], restarts=4)
    check(not hit and hit2 and len(store) == 1, "store reuses gadgets across relabelings")
    check(moved.gadget_ar > 0.99, "relabeled gadget keeps its quality")

    csv = qg.sweep_single(n_max=2, b_max=2, instances=2, restarts=4)
    check(csv.startswith("# qcbo-gadgets sweep-single"), "single sweep CSV")
    check(csv == qg.sweep_single(n_max=2, b_max=2, instances=2, restarts=4), "sweep is deterministic")
    print("all checks passed")


if __name__ == "__main__":
    main()
