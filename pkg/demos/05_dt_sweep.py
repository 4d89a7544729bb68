"""How the filter step size affects accuracy.

Truth always runs at 1 ms; only the estimator and controller slow down.
"""

# %%
from pathlib import Path

from mecanum_ekf import experiments as ex, plotting
from mecanum_ekf.config import config_from_dict

res = ex.experiment_dt_sweep(config_from_dict({}), dt_values=[0.01, 0.05, 0.2, 0.5], n_trials=5)
print(ex.format_dt_table(res))

# %%
Path("demo_out").mkdir(exist_ok=True)
Path("demo_out/dt_sweep.svg").write_text(plotting.line_chart(
    {"fused_camera": (res.dt_values, res.mean)}, errors={"fused_camera": res.stderr},
    title="Accuracy vs filter step", xlabel="filter dt (s)", ylabel="(x,y) RMSE (in)",
    log_x=True))
