"""Smoke test for the mamba_va Python module.

Build and install the extension first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/mamba_va-*.whl

If a `mamba-va` binary is found (PATH or target/release), a tiny model is
trained for one epoch and used to exercise `Model`.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import mamba_va as mv

ROOT = Path(__file__).resolve().parents[1]


def find_cli():
    local = ROOT / "target" / "release" / "mamba-va"
    if local.exists():
        return str(local)
    return shutil.which("mamba-va")


def main():
    assert abs(mv.ccc([1, 2, 3], [2, 3, 4]) - 4 / 7) < 1e-12
    assert mv.ccc([1, 2, 3, 100], [2, 3, 4, -50], [True, True, True, False]) == mv.ccc([1, 2, 3], [2, 3, 4])
    assert round(mv.p_va(0.5454, 0.3848), 4) == 0.4651
    assert mv.segment_video(10, 4, 3) == [(0, 4), (3, 4), (6, 4), (9, 1)]
    a_bar, b_bar = mv.discretize(0.1, -2.0, 1.0)
    assert abs(a_bar - math.exp(-0.2)) < 1e-12
    assert abs(b_bar - (a_bar - 1) / -2.0) < 1e-12

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        digest = mv.generate_synthetic(tmp / "data", seed=0, videos=3, min_frames=60, max_frames=80, dim=8)
        assert digest == mv.generate_synthetic(tmp / "again", seed=0, videos=3, min_frames=60, max_frames=80, dim=8)
        vid, rows = mv.load_features(tmp / "data" / "features" / "synth_0000.fvec")
        assert vid == "synth_0000" and 60 <= len(rows) <= 80 and len(rows[0]) == 8
        mv.save_features(tmp / "copy.fvec", vid, rows)
        assert mv.load_features(tmp / "copy.fvec") == ("copy", rows)

        labels = [[[0.1 * (t % 7) - 0.3, 0.05 * (t % 5)] for t in range(50)]]
        report = mv.evaluate(labels, labels)
        assert abs(report["p_va"] - 1.0) < 1e-12 and report["n_valid"] == 50
        try:
            mv.load_features(tmp / "missing.fvec")
        except OSError:
            pass
        else:
            raise AssertionError("missing file not reported")

        cli = find_cli()
        if cli is None:
            print("mamba-va binary not found, skipping Model check")
        else:
            data = tmp / "data"
            subprocess.run(
                [cli, "train", "--epochs", "1", "--out", str(tmp / "run"),
                 "--set", f"features_dir={data / 'features'}",
                 "--set", f"annotations_dir={data / 'annotations'}",
                 "--set", "folds=3", "--set", "hidden_dim=16", "--set", "state_dim=4",
                 "--set", "tcn_layers=1", "--set", "dilations=1", "--set", "mamba_layers=1",
                 "--set", "window=32", "--set", "stride=16"],
                check=True, capture_output=True,
            )
            model = mv.Model.load(tmp / "run" / "checkpoint.mva")
            assert model.in_dim == 8 and model.window == 32 and model.stride == 16
            pred = model.predict(rows)
            assert len(pred) == len(rows)
            assert all(-1 <= v <= 1 and -1 <= a <= 1 for v, a in pred)
            try:
                model.predict([[0.0] * 5])
            except ValueError:
                pass
            else:
                raise AssertionError("wrong feature width accepted")
            print(f"model: {model.n_params} parameters, predicted {len(pred)} frames")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
