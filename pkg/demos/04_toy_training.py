"""Training the reduced network on synthetic single-object scenes.

Gradients flow through the closed-form spike times in the exponential
domain; min-pools route to their winning input, silent neurons pass
nothing.  SGD with momentum 0.9 and weight decay 5e-4 warms up at lr 5e-5
then runs at 5e-4.
"""

from spikeyolo.config import builtin_config
from spikeyolo.synthetic import SceneGenerator
from spikeyolo.train import TrainHyper, train_toy
from spikeyolo.weights import save_weights_file

spec = builtin_config("toy.cfg")
scenes = SceneGenerator(seed=0)
hyper = TrainHyper(iterations=200)


def report(iteration, loss):
    if iteration % 20 == 0:
        print(f"  iteration {iteration:3d}: loss {loss:8.3f}")


print(f"training {hyper.iterations} iterations "
      f"(momentum {hyper.momentum}, weight decay {hyper.weight_decay}, "
      f"lr {hyper.lr_warmup} -> {hyper.lr})")
result = train_toy(spec, scenes, hyper, seed=0, threads=2, progress=report)

first, last = result.trace[0], result.trace[-1]
print(f"loss {first:.2f} -> {last:.2f} ({100 * last / first:.1f}% of initial)")
save_weights_file(result.weights, "demo_trained.scnw")
print("wrote demo_trained.scnw (float32-quantized from the float64 master)")
