"""Components need not share a family.

Here a normal component and a Laplace component, each with its own mean
and scale formula, describe the same two-class data.
"""
from moedist import TrainConfig, mixdistreg, simulate

data = simulate("npreg", 500, seed=1)

fit = mixdistreg("yn", ["normal", "laplace"],
                 [{"mean": "~1+x+xsq", "scale": "~1"},
                  {"location": "~1+x+xsq", "scale": "~1"}],
                 data=data, train_config=TrainConfig(batch_size=128), n_init=2)

# the laplace names its first parameter "location" rather than "mean"
for m, comp in zip(("m1", "m2"), fit.spec.components):
    loc = fit.coef()[m][comp.names[0]]
    print(comp.family, {k: round(v, 2) for k, v in loc.items()})

stats = fit.get_stats()
print("average weights", stats["pi"].mean(axis=0).round(3))
print("mixture mean at the first rows", stats["mixture_mean"][:5].round(2))
