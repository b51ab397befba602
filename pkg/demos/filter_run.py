# Steady-state Kalman filter on simulated prices: the filter error settles at P0.

import numpy as np

from fundsep.defaults import default_market, default_model
from fundsep.kalman import filter_log_returns, mean_square_error, simulate_joint, steady_state_variance
from fundsep.sde import SimConfig

spec = default_market()
model = default_model("fou")
P0 = steady_state_variance(spec, model)

dt = 1e-3
sim = simulate_joint(spec, model, SimConfig(dt=dt, horizon=50.0, n_paths=8, seed=3))
y_hat, nu = filter_log_returns(spec, model, P0, np.diff(sim.log_prices, axis=1), dt)

start = int(5.0 / model.a / dt)
print(f"P0 = {P0:.6f}")
print(f"mean square error after burn-in = {mean_square_error(sim.true_path, y_hat, start):.6f}")
# innovations should look like Sigma dW: covariance close to Sigma Sigma' dt
cov = np.cov(nu.reshape(-1, spec.n).T) / dt
print("innovation covariance / dt\n", np.round(cov, 4))
print("Sigma Sigma'\n", np.round(spec.Sigma @ spec.Sigma.T, 4))
