"""Fit the classical two-state mastery model and recover known parameters.

Sequences are generated from a hidden Markov chain (unmastered -> mastered,
absorbing) with known init/learn/guess/slip; EM should find its way back.
"""

import numpy as np

from lbkt.bkt import BktParams, fit_em, posterior_update, predict_correct_prob

true = BktParams(p_init=0.3, p_learn=0.1, p_guess=0.2, p_slip=0.1)
rng = np.random.default_rng(0)

sequences = []
for _ in range(800):
    mastered = rng.random() < true.p_init
    seq = []
    for _ in range(50):
        seq.append(rng.random() >= true.p_slip if mastered else rng.random() < true.p_guess)
        if not mastered:
            mastered = rng.random() < true.p_learn
    sequences.append(seq)

fit = fit_em(sequences)
print(f"EM converged in {fit.n_iterations} iterations\n")
print("            true    fitted")
for name in ("p_init", "p_learn", "p_guess", "p_slip"):
    print(f"  {name:<8} {getattr(true, name):6.3f}  {getattr(fit.params, name):8.3f}")

lls = fit.log_likelihoods
print(f"\nlog-likelihood path: {lls[0]:.1f} -> {lls[-1]:.1f} (never decreases)")

print("\nposterior walk for one student under the fitted model:")
p = fit.params.p_init
for t, correct in enumerate(sequences[0][:8]):
    pred = predict_correct_prob(p, fit.params)
    p = posterior_update(p, correct, fit.params)
    print(
        f"  t={t}: P(correct)={pred:.3f}, observed {'right' if correct else 'wrong'},"
        f" P(mastered) -> {p:.3f}"
    )
