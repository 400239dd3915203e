"""Genuine and false accept rates on synthetic minutiae as positional noise grows."""
from biokey.synth import EvalParams, PerturbModel, run_evaluation

params = EvalParams()
print(f"grid {params.grid}, match radius {params.tau} px, 20% deletions, 10% spurious")
print(f"{'jitter':>6}  {'GAR':>6}  {'FAR':>6}")
for sigma in (0.0, 1.5, 3.0, 4.5, 6.0):
    model = PerturbModel(jitter_sigma=sigma, delete_rate=0.2, spurious_rate=0.1)
    r = run_evaluation(params, model, trials=100, seed=1, impostor_trials=100)
    print(f"{sigma:6.1f}  {r.genuine_accept_rate:6.2f}  {r.false_accept_rate:6.2f}")
