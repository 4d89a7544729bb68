"""Repeated warehouse loops: dead reckoning drifts, landmarks hold it in place."""

# %%
from mecanum_ekf import experiments as ex
from mecanum_ekf.config import config_from_dict

# three seeds keep this quick; single loops are noisy, the full run averages ten
res = ex.experiment_cycle_drift(config_from_dict({}), n_trials=3, n_cycles=5)
print(ex.format_cycle_table(res))

# %% Growth from the first to the last return
for mode in res.modes:
    e = res.mean_estimate_error(mode)
    print(f"{mode:>13}: cycle {res.n_cycles} / cycle 1 = {e[-1] / e[0]:.2f}")
