"""How much noise does a privacy budget of epsilon=10 buy?

Calibrates the noise multiplier for a few dataset sizes and step counts,
with the usual 10x virtual batch (640 trajectories per step).

    python demos/dp_budget.py
"""
from trajcnn.dp import PrivacyLedger, account, calibrate_sigma

batch = 64 * 10
print(f"{'n':>7} {'steps':>6} {'q':>6} {'delta':>9} {'sigma':>7} {'eps':>7}")
for n in (5000, 7270, 20000):
    delta = 1 / n ** 1.1
    q = batch / n
    for steps in (200, 2000, 10000):
        sigma = calibrate_sigma(10.0, delta, q, steps)
        eps = account(PrivacyLedger(q, sigma, steps), delta)
        print(f"{n:>7} {steps:>6} {q:>6.3f} {delta:>9.2e} {sigma:>7.3f} {eps:>7.4f}")
