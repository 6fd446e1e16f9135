"""End-to-end walkthrough: simulate a hard pair, detect, compare baselines.

Sensor 1 sees the scene at full spectral resolution but blurred and
decimated by 4; sensor 2 sees it at full spatial resolution with its four
bands averaged into two.  The robust-fusion detector recovers a latent
change image on the fine grid, while the worst-case baseline has to throw
both observations down to the coarse common grid first.

Run with:  python3 demos/end_to_end.py
"""

import numpy as np

from rfcd import (
    ChangeSpec,
    Decimation,
    DegradationModel,
    NoiseModel,
    RegularizationParams,
    SceneSpec,
    SolverOptions,
    apply_forward,
    build_band_averaging,
    build_gaussian_blur,
    change_energy,
    classify_scenario,
    evaluate,
    generate_latent_scene,
    plant_changes,
    robust_fusion_cd,
    simulate_observation,
    threshold_map,
    wc_baseline,
)

SEED = 3
NB, H, W = 4, 64, 64

print("1. latent scene: 64x64, 4 bands, 10 Voronoi regions")
scene = generate_latent_scene(SceneSpec(W, H, NB, region_count=10, seed=SEED))
x2, truth = plant_changes(scene, ChangeSpec(0.10, blob_count=10,
                                            magnitude=1.0), seed=SEED + 100)
print(f"   planted {int(truth.sum())} changed pixels "
      f"({truth.mean():.1%} of the grid)")

print("2. two sensors with complementary degradations")
m1 = DegradationModel(blur=build_gaussian_blur(1.6, 9),
                      decimation=Decimation(4, 4))
m2 = DegradationModel(spectral=build_band_averaging([[0, 1], [2, 3]], NB))
c1 = apply_forward(m1, scene)
c2 = apply_forward(m2, x2)
n1 = NoiseModel.isotropic(float(np.mean(c1.data ** 2)) / 1000.0,
                          c1.band_count)
n2 = NoiseModel.isotropic(float(np.mean(c2.data ** 2)) / 1000.0,
                          c2.band_count)
y1 = simulate_observation(scene, m1, n1, seed=SEED + 1)
y2 = simulate_observation(x2, m2, n2, seed=SEED + 2)
print(f"   y1: {y1.band_count} bands at {y1.height}x{y1.width} (before)")
print(f"   y2: {y2.band_count} bands at {y2.height}x{y2.width} (after)")

print("3. classify the degradation pattern")
plan = classify_scenario(m1, m2, NB, H, W)
print(f"   scenario {plan.scenario_id}, swapped={plan.swapped}")

print("4. robust fusion with column-sparse change regularization")
params = RegularizationParams(lam=0.5, gamma=10.0)
state = robust_fusion_cd(y1, y2, plan, n1, n2, params,
                         SolverOptions(tol=1e-6, max_iters=300))
trace = state.objective_trace
print(f"   {state.iteration} outer iterations")
print(f"   objective {trace[0]:.1f} -> {trace[-1]:.1f} (monotone: "
      f"{bool(np.all(np.diff(trace) <= 1e-10))})")

print("5. score against the planted truth")
energy = change_energy(state.dx).reshape(H, W)
truth_grid = truth.reshape(H, W)
rf = evaluate(energy, truth_grid, sweep=True)
tau, _ = threshold_map(energy)
at_tau = evaluate(energy, truth_grid, tau=tau)
print(f"   robust fusion: AUC = {rf.auc:.4f}, "
      f"f1 at Otsu threshold = {at_tau.f1:.4f}")

wc = wc_baseline(y1, y2, m1, m2)
wc_grid = wc.energy.reshape(wc.dx.height, wc.dx.width)
wc_rep = evaluate(wc_grid, truth_grid, sweep=True)
print(f"   worst-case baseline ({wc.dx.height}x{wc.dx.width} grid): "
      f"AUC = {wc_rep.auc:.4f}")
print(f"   margin: {rf.auc - wc_rep.auc:+.4f}")
