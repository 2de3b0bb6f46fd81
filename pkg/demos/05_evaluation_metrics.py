"""The evaluation battery: rank AUROC, tolerance accuracy, clinical binary
splits, and subject-grouped cross-validation."""

import numpy as np

from painforge.metrics import (binarize_pspi, binary_auroc, f1_binary,
                               macro_auroc, subject_kfold, tolerance_accuracy)

# Rank-based AUROC handles ties exactly: equal scores count half.
scores = [0.1, 0.4, 0.35, 0.8]
labels = [0, 0, 1, 1]
print(f"binary AUROC {scores} vs {labels}: {binary_auroc(scores, labels)}")

# Macro AUROC averages one-vs-rest per class; a perfect one-hot predictor
# scores 1.0, a uniform predictor 0.5 by the tie convention.
rng = np.random.default_rng(0)
true = rng.integers(0, 17, size=400)
one_hot = np.eye(17)[true]
uniform = np.full((400, 17), 1.0 / 17)
print(f"macro AUROC, perfect predictor: {macro_auroc(one_hot, true):.3f}")
print(f"macro AUROC, uniform predictor: {macro_auroc(uniform, true):.3f}")

# Tolerance bands reflect the ordinal nature of pain scores.
preds = np.clip(true + rng.integers(-2, 3, size=400), 0, 16)
for tol in (0, 1, 2):
    print(f"accuracy within +/-{tol}: {tolerance_accuracy(preds, true, tol):.3f}")

# Clinical binary splits at thresholds 2 and 3.
for threshold in (2, 3):
    binary = binarize_pspi(true, threshold)
    pred_binary = binarize_pspi(preds, threshold)
    print(f"threshold {threshold}: positive rate {binary.mean():.3f}, "
          f"F1 {f1_binary(pred_binary, binary):.3f}")

# 25 subjects into 5 folds of 5, never splitting a subject across folds.
plan = subject_kfold(list(range(25)), k=5, seed=0)
print("fold sizes:", [len(f) for f in plan.folds])
print("first fold:", sorted(plan.folds[0]))
