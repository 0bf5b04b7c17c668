"""Zero inflation as a two-component mixture.

Half the responses are exactly zero.  zinreg puts a point mass at 0 next to
a normal regression; the gate weight of the point mass estimates the share
of structural zeros.
"""
import numpy as np

from moedist import TrainConfig, simulate, zinreg

data = simulate("zeroinf", 1000, seed=0)
print("share of exact zeros in the data:", np.mean(data["yn"] == 0.0))

fit = zinreg("yn", "normal", ["~1+x+xsq", "~1+x"], data=data, train_config=TrainConfig())
weights = fit.get_stats()["pi"].mean(axis=0)
print("gate weights (point mass, normal):", weights.round(4))

# nonzero responses can only come from the normal component
post = fit.get_pis()
print("mean posterior of the point mass, zeros:", post[data["yn"] == 0, 0].mean().round(3))
print("mean posterior of the point mass, nonzeros:", post[data["yn"] != 0, 0].mean())
