"""Distributional regression inside each component.

The straight-line class gets noisier as x grows.  Giving the scale its own
formula lets the model pick that up: one component's scale slope in x is
clearly positive, the other stays near zero.
"""
import numpy as np

from moedist import TrainConfig, sammer, simulate

data = simulate("hetero", 1000, seed=0)
fit = sammer("yn", "normal", 2, ["~1+x+xsq", "~1+x"], data=data, train_config=TrainConfig())

post = fit.get_pis()
noisy = int(np.argmax(post[data["true_class"] == 1].sum(axis=0))) + 1
for m in (1, 2):
    slope = fit.coef()[f"m{m}"]["scale"]["x"]
    tag = "growing noise" if m == noisy else "constant noise"
    print(f"component {m} ({tag}): scale slope in x = {slope:.3f}")

# fitted sd of the noisy component across x (softplus of its predictor)
grid = {"x": np.linspace(0, 10, 5)}
grid["xsq"] = grid["x"] ** 2
sd = fit.get_stats(grid)["params"][noisy - 1][:, 1]
print("x    ", grid["x"])
print("sd   ", sd.round(2))
