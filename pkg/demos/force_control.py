"""Force tracking, disturbance rejection, the gain condition and grasping.

    python3 demos/force_control.py [checkpoint.svae]

Without a checkpoint every scenario uses the oracle estimator (true plant
force). With one, tracking and grasping also run through the learned
estimator, which renders the finger each tick and reads the force back.
"""

import sys

from tactile_svae import control, svae
from tactile_svae.plant import DomainTag

plan = [(0.4, 60), (1.6, 60), (3.0, 60)]

trace = control.run_force_tracking(plan)
print("oracle tracking, ticks to settle per step:",
      [s["ticks"] for s in trace.settling("step", 0.05)])

sched = control.rotation_schedule([45, 60, -90], period_ticks=120, loop_rate=120.0)
dist = control.run_disturbance(control.DEFAULT_PLANT.with_shifts(sched), f_ref=0.4)
print("tube rotation, ticks to recover per shift:",
      [s["ticks"] for s in dist.settling("shift", 0.05)])

rep = control.verify_contraction(trials=100)
print(f"random plants: {rep['eligible']} runs with K > Lambda/2, pass rate {rep['pass_rate']:.2f}, "
      f"slowest {rep['max_steps']} steps")
for k in (0.6, 0.5, 0.4):
    r = control.contraction_run(control.GraspPlant.linear(1.0), k, 1.0, max_steps=200)
    print(f"  linear plant Lambda=1, K={k}: converged={r['converged']} first errors {r['errors'][:4]}")

estimators = None
if len(sys.argv) > 1:
    ckpt = svae.load_checkpoint(sys.argv[1])
    est = control.SVAEEstimator(ckpt)
    trace = control.run_force_tracking(plan, estimator=est)
    print("svae tracking, ticks to settle per step:",
          [s["ticks"] for s in trace.settling("step", 0.05)])
    trace.write_csv("svae_tracking.csv")

    def factory(tag):
        return lambda obj: control.SVAEEstimator(ckpt, domain=tag, z_cm=obj.z_cm, theta_rad=obj.theta_rad)

    estimators = {"land": factory(DomainTag.land()), "water": factory(DomainTag.water())}

table = control.grasp_experiment(trials=10, sigma_mm=5.0, estimators=estimators)
for cell, v in table.items():
    objs = ", ".join(f"{k} {r:.0%}" for k, r in v["per_object"].items())
    print(f"{cell:13s} {v['average']:.0%}   ({objs})")
