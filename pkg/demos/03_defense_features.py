"""The two-feature view that separates honest clients from attackers.

Builds the offline defense artifacts (shadow models, reference model,
linear SVM) on a replicated seed set, then pushes freshly trained honest
and attacked models through the filter and prints where everyone lands
in [MSE, TCD] space.
"""

import numpy as np

from fedsim import attacks, data, fedguard, nn

seed_ds = data.synth_dataset(classes=5, per_class=2, dims=(1, 10, 10), rng_seed=3, noise=0.1)
pub = data.replicate(seed_ds, 100)
arch = nn.mlp_arch((1, 10, 10), hidden=(16,), classes=5)
catalog = [attacks.AttackSpec(k) for k in attacks.ALL_ATTACKS]
train_cfg = fedguard.LocalTrainConfig(epochs=100, batch_size=32, learning_rate=0.01)

shadows = fedguard.build_shadow_set(pub, k=16, arch=arch, attack_catalog=catalog,
                                    train_cfg=train_cfg, rng_seed=7)
features, labels = fedguard.shadow_features(shadows, pub)
defense = fedguard.train_defense_svm(features, labels, lam=0.001, eta=0.01,
                                     epochs=300, rng_seed=8)

print("shadow features (identity label, attack, MSE, TCD, svm margin):")
for i, (feat, label) in enumerate(zip(features, labels)):
    kind = shadows.attack_kinds[i] or "-"
    tag = "benign" if label == fedguard.BENIGN else "malicious"
    print(f"  {tag:<9} {kind:<14} mse={feat[0]:<10.3g} tcd={feat[1]:<8.3g} "
          f"margin={defense.decision_value(feat):+.2f}")

# now classify models the defense never saw; the honest client trains to
# convergence on the shared public set plus its own private data (an
# undertrained model is indistinguishable from a corrupted one and would
# be rejected, which is what the min-MSE fallback in filter_round is for)
private = data.synth_dataset(classes=5, per_class=60, dims=(1, 10, 10), rng_seed=9, noise=0.1)
honest = nn.train_local(nn.init_model(arch, 1), data.concat([pub, private]),
                        epochs=100, batch_size=32, lr=0.01, rng_seed=10)
print("\nfresh clients against the trained filter:")
for name, model in [
    ("honest", honest),
    ("sign-flipped", attacks.sign_flip(honest)),
    ("half-scaled", attacks.krum_attack(honest, 0.5)),
    ("bit-flipped", attacks.bit_flip(honest, 10)),
]:
    verdict, feat = fedguard.classify_client(model, pub, shadows.reference_model, defense)
    print(f"  {name:<14} -> {'benign' if verdict else 'malicious':<9} "
          f"mse={feat[0]:.3g} tcd={feat[1]:.3g}")

clients = [honest, attacks.sign_flip(honest), attacks.krum_attack(honest, 0.5)]
print(f"\nfilter_round keeps {fedguard.filter_round(clients, pub, shadows.reference_model, defense)} "
      "(indices into the upload list)")
