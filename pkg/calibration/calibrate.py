"""Calibration runs behind the convergence thresholds in ``prehol.scaling``.

Run ``python3 calibration/calibrate.py`` to regenerate the JSON files here.
"""
import json
import pathlib

from prehol import scaling

HERE = pathlib.Path(__file__).parent


def observable():
    trio = [1 / 8, 1 / 16, 1 / 32]
    errors = [scaling.disk_observable_error(m)["error"] for m in trio]
    order = scaling.empirical_order(trio, errors)
    return {
        "meshes": trio,
        "errors": errors,
        "empiricalOrder": order,
        # about two thirds of the calibrated order, rounded down
        "threshold": scaling.OBSERVABLE_ORDER_MIN,
    }


def dirichlet():
    out = {}
    for name in scaling.HARMONIC_DATA:
        rep = scaling.dirichlet_convergence_study(name, [1 / 8, 1 / 16, 1 / 32])
        out[name] = {"meshes": rep.meshes, "errors": rep.errors, "empiricalOrder": rep.order}
    return out


if __name__ == "__main__":
    for name, fn in [("observable_order", observable), ("dirichlet_order", dirichlet)]:
        path = HERE / f"{name}.json"
        path.write_text(json.dumps(fn(), indent=2) + "\n")
        print(path.read_text())
