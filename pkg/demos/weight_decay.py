# Decay of the intertemporal hedging weight f_z/f for the three state models.
# Prints the fitted rate next to lambda_hat and writes a gnuplot-ready table.

import numpy as np

from fundsep.convergence import fit_decay_rate, stationary_mean
from fundsep.defaults import default_market, default_model
from fundsep.io import write_plot_data
from fundsep.model import derive_constants
from fundsep.sde import SimConfig

spec = default_market()
cfg = SimConfig(dt=1e-3, n_paths=20000, seed=1)
grid = np.linspace(1.0, 6.0, 11)

rows = []
for kind in ("3/2", "invB", "fou"):
    model = default_model(kind)
    consts = derive_constants(spec, model)
    z = stationary_mean(model, consts)
    fit = fit_decay_rate(model, consts, z, grid, cfg, burn_in=1.0)
    print(f"{model.kind:15s} z={z:.4f}  fitted {fit.fitted_rate:.4f}  lambda_hat {consts.lam_hat:.4f}"
          f"  R^2 {fit.r_squared:.4f}")
    for t, v, se in zip(fit.t_grid, fit.values, fit.std_errors):
        rows.append((model.kind, t, v, se))

# one block per model, blank-line separated for gnuplot's `index`
with open("weight_decay.dat", "w") as fh:
    for kind in ("three_halves", "inverse_bessel", "filtered_ou"):
        fh.write(f"# {kind}: t |f_z/f| se\n")
        for k, t, v, se in rows:
            if k == kind:
                fh.write(f"{t!r} {v!r} {se!r}\n")
        fh.write("\n\n")
print("wrote weight_decay.dat")
