"""The aging effect: stored latents drift as the lower layers move.

With the lower weights blocked after the first batch but the BRN moving
moments left free to adapt, the activations a stored pattern would
produce today drift away from its stored snapshot. The speed of the
moment window controls the trade: a fast window tracks the stream but
invalidates the memory; freezing removes the drift entirely.
"""

from latentreplay import (ScenarioParams, StrategyConfig, aging_drift,
                          build_tinynic_network, generate_tinynic)
from latentreplay.strategies import ContinualTrainer

params = ScenarioParams(classes=6, instances_per_class=3, frames_per_session=30,
                        first_batch_classes=3, first_batch_instances=1,
                        test_frames_per_instance=10)
scenario = generate_tinynic(params, seed=21)

# all runs adapt normally during the first batch; afterwards the lower
# moment window is left fast, widened (a simple scheduling policy), or
# frozen outright
configs = [("fast window (0.99)", 0.99, False),
           ("widened to 0.9995", 0.9995, False),
           ("moments frozen", None, True)]
for label, later_rate, freeze in configs:
    net = build_tinynic_network(classes=params.classes, seed=2, avg_rate=0.99)
    cfg = StrategyConfig(strategy="ar1*free", replay_kind="latent",
                         rm_capacity=150, lr_first=0.03, lr_head=0.09,
                         lr_other=0.009, mb=32, store_patterns=True,
                         freeze_below_tap_moments=freeze)
    trainer = ContinualTrainer(net, cfg, seed=2)
    drifts = []
    for k, batch in enumerate(scenario.batches):
        trainer.train_batch(batch.x, batch.y)
        drifts.append(aging_drift(trainer.rm, net))
        if k == 0 and later_rate is not None:
            for layer in net.layers[:net.tap_index + 1]:
                if hasattr(layer, "avg_rate"):
                    layer.avg_rate = later_rate
    tail = " ".join(f"{d:.4f}" for d in drifts[-5:])
    print(f"{label:22s} drift (last 5 batches): {tail}   "
          f"final acc {trainer.accuracy(scenario.test_x, scenario.test_y):.3f}")

print("\ndrift is exactly zero when the lower network is fully pinned."
      "\nOn this stationary toy stream the frozen setting also scores best;"
      "\nadapting moments only pay off when the input statistics move, and"
      "\nthen the window must be slow enough that replacement keeps the"
      "\nmemory rejuvenated faster than it ages.")
