"""Smoke test for the thermoforge Python extension.

Build first:
    cargo build --release -p thermoforge-py --features extension-module
then run from the repository root:
    python3 python/smoke_test.py
"""

import importlib.util
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path


def load_module():
    try:
        import thermoforge  # installed wheel, if any

        return thermoforge
    except ImportError:
        pass
    root = Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        lib = root / "target" / profile / "libthermoforge_py.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "thermoforge.so")
            spec = importlib.util.spec_from_file_location("thermoforge", tmp / "thermoforge.so")
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("thermoforge extension not found; build it with cargo first")


def main():
    tf = load_module()

    part = tf.generate_shape(4, "stacked", (6, 6, 5), 2.0)
    assert part.voxel_count() > 0
    domain = tf.attach_substrate(part, 2)
    assert domain.dims == (6, 6, 7)

    sched = tf.plan_zigzag(domain, 5.0)
    assert len(sched) == part.voxel_count()
    assert abs(sched.dt - 0.4) < 1e-12

    hist = tf.simulate(domain, sched)
    assert len(hist) == len(sched) + 1
    assert 25.0 <= hist.max_temperature() <= 1750.0 + 1e-3

    ds = tf.extract_windows(hist, domain, sched, 0, 16, 1)
    assert len(ds) == 16
    gid, event, anchor, data = ds.sample(0)
    assert len(data) == len(tf.WindowDataset.channels()) * 11**3

    assert tf.r2([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert abs(tf.nl2([2.0, 4.0], [1.0, 4.0]) - 1.0) < 1e-15
    assert abs(tf.characteristic_radius(12.0, 0.4) - math.sqrt(4.8)) < 1e-12
    assert tf.window_count(20, 10) == 155

    model = tf.FnoModel(width=4, depth=2, modes=(3, 3, 3), proj_hidden=8, seed=0)
    out = model.forward([0.1] * (8 * 11**3), (11, 11, 11))
    assert len(out) == 11**3 and all(math.isfinite(v) for v in out)
    trained, history = tf.train(model, ds, epochs=1, batch_size=8)
    assert len(json.loads(history)) == 1
    assert trained.param_count() == model.param_count()

    try:
        model.forward([0.0] * 10, (11, 11, 11))
    except ValueError:
        pass
    else:
        raise AssertionError("bad input shape should raise ValueError")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
