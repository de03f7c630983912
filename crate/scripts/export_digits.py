"""Export the UCI hand-written digits set (1797 x 64) bundled with scikit-learn.

Writes data/digits.csv (features, no header) and data/digits_labels.txt
(one class per line) next to the repository root.
"""
import pathlib

import numpy as np
from sklearn.datasets import load_digits

root = pathlib.Path(__file__).resolve().parent.parent / "data"
root.mkdir(exist_ok=True)
digits = load_digits()
np.savetxt(root / "digits.csv", digits.data.astype(int), fmt="%d", delimiter=",")
np.savetxt(root / "digits_labels.txt", digits.target.astype(int), fmt="%d")
print(digits.data.shape)
