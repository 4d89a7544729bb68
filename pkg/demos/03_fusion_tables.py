"""Velocity fusion and camera fusion over a handful of seeds.

The full runs use 100 seeds (``mecanum-ekf experiment velocity``); 10 is
enough to see the ordering.
"""

# %%
from mecanum_ekf import experiments as ex
from mecanum_ekf.config import config_from_dict

cfg = config_from_dict({})

# %% Fusing model and encoders beats either source alone on the velocities
vel = ex.experiment_velocity_fusion(cfg, n_trials=10)
print(ex.format_rmse_table(vel))

# %% Adding landmark sightings pulls the position back toward truth
cam = ex.experiment_camera_fusion(cfg, n_trials=10)
print(ex.format_rmse_table(cam))
gain = cam.mean["fused"].xy_rmse / cam.mean["fused_camera"].xy_rmse
print(f"(x,y) RMSE improves {gain:.2f}x with the camera")
