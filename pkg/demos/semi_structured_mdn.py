"""A mixture density network with a structured part.

The means keep an interpretable linear effect of x and add a deep term
d(x) computed by a 64-64-32 ReLU network.  The linear part and the network
are fitted jointly.
"""
from moedist import (OptimizerConfig, TrainConfig, default_architecture, sammer,
                     simulate)

data = simulate("npreg", 500, seed=0)
networks = {"d": default_architecture("identity")}

fit = sammer("yn", "normal", 2, ["~1+x+d(x)", "~1"], data=data, networks=networks,
             train_config=TrainConfig(OptimizerConfig("adam", 0.001), epochs=50))

h = fit.history
print("train NLL, first and last epoch:", round(h.train_loss[0], 4), round(h.train_loss[-1], 4))
print("structured x effects:",
      [round(fit.coef()[m]["mean"]["x"], 3) for m in ("m1", "m2")])
print("component means at three rows:\n", fit.component_means()[:3].round(2))
