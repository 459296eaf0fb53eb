"""Tour of the seven Byzantine behaviors and what each does to a model.

Trains a small MLP on synthetic blobs, then applies every attack and
reports how the uploaded parameters and the model's accuracy change.
"""

import numpy as np

from fedsim import attacks, data, nn

train = data.synth_dataset(classes=5, per_class=100, dims=(1, 10, 10), rng_seed=0, noise=0.1)
test = data.synth_dataset(classes=5, per_class=40, dims=(1, 10, 10), rng_seed=1, noise=0.1)

arch = nn.mlp_arch((1, 10, 10), hidden=(16,), classes=5)
honest = nn.train_local(nn.init_model(arch, 0), train, epochs=30, batch_size=32,
                        lr=0.05, rng_seed=2)
print(f"honest model: {len(honest)} parameters, test accuracy {nn.evaluate(honest, test):.3f}")
print()

# model-poisoning attacks rewrite the parameter vector after training
print(f"{'attack':<16} {'|delta|/|w|':>12} {'test acc':>9}")
for kind in attacks.MODEL_ATTACKS:
    spec = attacks.AttackSpec(kind)
    poisoned = attacks.apply_model_attack(spec, honest, rng_seed=3)
    rel = np.linalg.norm(poisoned.values - honest.values) / np.linalg.norm(honest.values)
    print(f"{kind:<16} {rel:>12.3f} {nn.evaluate(poisoned, test):>9.3f}")
print()

# data-poisoning attacks rewrite the training set and train honestly
for kind in attacks.DATA_ATTACKS:
    spec = attacks.AttackSpec(kind)  # 50% of samples poisoned by default
    poisoned_ds = attacks.apply_data_attack(spec, train, rng_seed=4)
    model = nn.train_local(nn.init_model(arch, 0), poisoned_ds, epochs=30,
                           batch_size=32, lr=0.05, rng_seed=2)
    changed = int(np.sum(poisoned_ds.labels != train.labels))
    print(f"{kind:<16} {changed:>4} labels changed, test acc {nn.evaluate(model, test):.3f}")

# the bit flip is exact: flipping the same bit twice restores the model
flipped = attacks.bit_flip(honest, bit_index=10)
restored = attacks.bit_flip(flipped, bit_index=10)
assert np.array_equal(restored.values.view(np.uint32), honest.values.view(np.uint32))
print("\nbit flip is an exact involution on the IEEE-754 encoding")
