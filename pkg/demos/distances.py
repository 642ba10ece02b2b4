"""Ordering labels and Kendall tau distances for three shots.

    python demos/distances.py
"""
from shotorder.permlab import apply_shuffle, build_ktd_matrix, kendall_tau_distance, rank, restore, unrank

shots = ["wide", "medium", "close-up"]
K = build_ktd_matrix(3)

print("label  order  presented                     d(identity)")
for label in range(6):
    p = unrank(label, 3)
    print(f"{label:5d}  {str(p):5s}  {str(apply_shuffle(shots, p)):28s}  {K[0, label]}")

# a model that guesses the wrong label still gets partial credit in KTD terms
truth, guess = unrank(3, 3), unrank(4, 3)
shuffled = apply_shuffle(shots, truth)
print("\ntruth", truth, "guess", guess, "distance", kendall_tau_distance(guess, truth))
print("restored with the guess:", restore(shuffled, guess))
print("rank of the guess:", rank(guess).class_index)

print("\nfull matrix (also: shotorder ktd-matrix --k 3)")
print(K.to_csv(), end="")
