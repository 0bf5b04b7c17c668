"""Two regression lines hidden in one scatter plot.

Half the points follow a straight line, the other half a parabola.  A
two-component normal mixture with quadratic means separates them.
"""
import numpy as np

from moedist import TrainConfig, OptimizerConfig, sammer, simulate

data = simulate("npreg", 1000, seed=0)

# one formula per distribution parameter: mean first, then scale
fit = sammer("yn", "normal", 2, ["~1+x+xsq", "~1"], data=data,
             train_config=TrainConfig(OptimizerConfig("rmsprop", 0.01), batch_size=512),
             n_init=3)

h = fit.history
print(f"stopped after {h.stopped_epoch} epochs, best epoch {h.best_epoch}")
for m in ("m1", "m2"):
    print(m, {k: round(v, 3) for k, v in fit.coef()[m]["mean"].items()})
# truth: 5 x for one class, 40 - (x - 5)^2 = 15 + 10 x - x^2 for the other

# each point is assigned to the component with the larger posterior
labels = fit.get_pis().argmax(axis=1) + 1
agree = np.mean(labels == data["true_class"])
print(f"class agreement {max(agree, 1 - agree):.3f}")
