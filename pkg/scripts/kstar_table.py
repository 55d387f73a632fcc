"""Smallness threshold 2K* and the k_sss coefficient for several turning numbers."""

from curvediff.diagnostics import k_s3_coefficient, solve_k_star

print(f"{'omega':>5} {'2K*':>14} {'K*':>14} {'k_sss coefficient at 2K*':>26}")
for omega in range(1, 6):
    two_k = solve_k_star(omega)
    print(f"{omega:>5} {two_k:>14.10f} {two_k / 2:>14.10f} {k_s3_coefficient(two_k):>26.10f}")
