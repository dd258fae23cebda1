"""The integrate-and-fire neuron: closed form, brute force, and gradients.

A neuron collects weighted input spikes; its membrane potential rises as
each synaptic current decays, and the output spike time has a closed form
over the causal inputs.  The forward-Euler integrator is the independent
check on that algebra.
"""

from spikeyolo.neuron import (
    membrane_potential,
    simulate_spike_time,
    solve_spike_time,
    spike_gradients,
)

inputs = [(0.0, 0.9), (0.3, 0.6), (0.8, -0.4), (1.1, 1.2), (5.0, 2.0)]
print("inputs (time, weight):", inputs)

solved = solve_spike_time(inputs)
print(f"closed form: fires at t = {solved.time:.6f} "
      f"with {solved.causal_count} causal inputs")

simulated = simulate_spike_time(inputs, dt=1e-4)
print(f"forward Euler (dt=1e-4): t = {simulated.time:.6f} "
      f"(gap {abs(simulated.time - solved.time):.2e})")

# The late t=5 input never participates: the neuron has already fired.
early_only = solve_spike_time(inputs[:4])
print(f"dropping the late input leaves t unchanged: {early_only.time:.6f}")

print("\nmembrane potential on the way up:")
for t in (0.0, 0.3, 0.6, 0.9, solved.time):
    print(f"  V({t:.3f}) = {membrane_potential(inputs, t):.4f}")

grads = spike_gradients(inputs, solved)
print("\nsensitivities of the spike time (causal inputs only):")
for i, (t, w) in enumerate(inputs):
    if grads.causal[i]:
        print(f"  input {i} (t={t}, w={w:+.1f}): dt/dw = {grads.dt_dw[i]:+.4f}, "
              f"dt/dt_i = {grads.dt_dt[i]:+.4f}")
print(f"shift check: sum of dt/dt_i = {grads.dt_dt.sum():.6f} (moving every input"
      " by x moves the output by x)")

weak = solve_spike_time([(0.0, 0.5)])
print(f"\nsub-threshold neuron: weight sum 0.5 < 1 -> spike time = {weak.time}")
