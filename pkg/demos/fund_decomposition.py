# Fund decomposition of the optimal portfolio as the horizon grows.
# The static funds do not move; only the intertemporal fund shrinks.

import numpy as np

from fundsep.defaults import default_market, default_model
from fundsep.model import derive_constants
from fundsep.portfolio import dynamic_portfolio, fund_table
from fundsep.sde import SimConfig

spec = default_market()
model = default_model("invB")
consts = derive_constants(spec, model)
z = 0.9
cfg = SimConfig(dt=1e-3, n_paths=20000, seed=2)

print("funds and their preference weights")
for f in fund_table(spec, model, consts):
    w = "wealth residual" if f.weight is None and f.static else ("f_z/f, horizon dependent" if f.weight is None else f"{f.weight:+.5f}")
    print(f"  {f.name:14s} {w}  direction {np.round(f.vector(z), 4)}")

print("\n  T     weight f_z/f        total dynamic           static")
for T in (0.5, 1.0, 2.0, 4.0):
    d = dynamic_portfolio(spec, model, consts, z, 0.0, T, cfg)
    w = d.intertemporal_weight
    print(f"{T:5.1f}  {w.value:+.5f} +- {w.std_error:.1e}  {np.round(d.total_dynamic, 5)}  {np.round(d.total_static, 5)}")
