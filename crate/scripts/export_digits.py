"""Writes scikit-learn's handwritten digits as a prepared dataset directory.

    python3 scripts/export_digits.py data/digits
    hdc sweep --config data/digits/config.json
"""
import json
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    d = load_digits()
    idx = np.random.default_rng(0).permutation(len(d.target))
    n_train = int(np.ceil(0.8 * len(idx)))
    header = ",".join(f"f{j}" for j in range(d.data.shape[1])) + ",label\n"
    for name, rows in (("train", idx[:n_train]), ("test", idx[n_train:])):
        with open(out / f"{name}.csv", "w") as f:
            f.write(header)
            for i in rows:
                f.write(",".join(str(float(x)) for x in d.data[i]) + f",{d.target[i]}\n")
    schema = {"n_features": 64, "label_column": "label", "v_min": 0.0, "v_max": 16.0, "step": 0.8}
    config = {
        "train": "train.csv",
        "test": "test.csv",
        "schema": "schema.json",
        "alphas": [0, 0.5, 1, 2, 3, 4, 6],
        "runs": 5,
        "out": "results",
    }
    (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"{n_train} train / {len(idx) - n_train} test samples -> {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "data/digits"))
