"""Train the from-scratch random forest and read its diagnostics.

Every tree fits a bootstrap resample without pruning, trying a random subset
of features at each node; prediction is a majority vote and the out-of-bag
error estimates held-out performance without a validation split. Run:

    python demos/05_random_forest.py
"""

import numpy as np

from gazeact.forest import ForestParams, predict, predict_proba, train_forest

rng = np.random.default_rng(2)
n, d = 600, 10

# only features 2 and 7 matter; the rest is noise
X = rng.random((n, d))
margin = X[:, 2] + 0.5 * X[:, 7]
y = list(np.select([margin < 0.6, margin < 1.0], ["read", "write"], default="browse"))

X_train, y_train = X[:450], y[:450]
X_test, y_test = X[450:], y[450:]

model = train_forest(X_train, y_train, ForestParams(n_trees=200, seed=0))
print(f"forest: {len(model.trees)} trees, classes {model.classes}")
print(f"out-of-bag error: {model.oob_error:.3f}")

pred = predict(model, X_test)
accuracy = np.mean(np.array(pred) == np.array(y_test))
print(f"held-out accuracy: {accuracy:.3f} (OOB predicted {1 - model.oob_error:.3f})")

proba = predict_proba(model, X_test[:3])
print("\nvote fractions for three held-out windows:")
for row, want, got in zip(proba, y_test[:3], pred[:3]):
    votes = ", ".join(f"{c}={v:.2f}" for c, v in zip(model.classes, row))
    print(f"  true {want:6s} -> predicted {got:6s} ({votes})")

imp = model.feature_importances
print("\nimpurity-decrease feature importances (diagnostic only):")
for f in np.argsort(-imp)[:4]:
    print(f"  feature {f}: {imp[f]:.3f}")
print("features 2 and 7 carry the signal, and the forest finds them")
