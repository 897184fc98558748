"""Regenerate the bundled CPU-time sweep configs (fig5/fig6/fig7 families)."""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "fadingctl" / "configs"
FIG3_A = np.array([[0.01, -1.02, 0.3], [-0.1, 1.01, 0.2], [-0.5, 0.1, 0.2]])


def hilbert_like(rows, cols):
    """B_ij = 1 / (i + j) with 1-based indices."""
    i, j = np.meshgrid(np.arange(1, rows + 1), np.arange(1, cols + 1), indexing="ij")
    return 1.0 / (i + j)


def tridiagonal(S):
    return 1.01 * np.eye(S) - 0.1 * np.eye(S, k=1) - 0.2 * np.eye(S, k=-1)


def fmt(m):
    return "[" + ", ".join("[" + ", ".join(repr(float(v)) for v in row) + "]" for row in m) + "]"


def write(name, sweep, A, B, n_t, note):
    S, n_r = B.shape
    text = f"""# {note}
[experiment]
name = {name}
horizon = 1000
runs = 100
master_seed = 5
sweep = {sweep}

[plant]
A = {fmt(A)}
B = {fmt(B)}
W = 0.05 * eye({S})

[weights]
Q = eye({S})
R = eye({n_t})
M = eye({n_r})

[channel]
n_t = {n_t}
n_r = {n_r}
p_access = 0.5

[learner]
a0 = 0.08
tau = 60
gamma_exp = 1.0

[solver]
xi = 0.5
sample_count = 20000
seed = 0
"""
    (OUT / f"{name}.cfg").write_text(text)


def main():
    for S in range(4, 13):
        write(f"fig5_S{S}", "S", tridiagonal(S), hilbert_like(S, 2), 3, f"CPU-time sweep over the state dimension, S={S}")
    b = hilbert_like(3, 2)
    for n_t in range(2, 7):
        write(f"fig6_Nt{n_t}", "Nt", FIG3_A, b, n_t, f"CPU-time sweep over transmit antennas, N_t={n_t}")
    for n_r in range(2, 7):
        write(f"fig7_Nr{n_r}", "Nr", FIG3_A, hilbert_like(3, n_r), 3, f"CPU-time sweep over receive antennas, N_r={n_r}")


if __name__ == "__main__":
    main()
