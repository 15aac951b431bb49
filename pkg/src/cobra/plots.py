"""Figure rendering for the reporting commands (bench tables, play-length
histograms).  Files are written next to the delimited output; matplotlib is
used in its non-interactive backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def bench_plot(rows: list[tuple[int, float, float]], path: str, title: str) -> None:
    """Per-round average candidate-set sizes before and after the
    isomorphism merge, on a log scale."""
    rounds = [r for r, _, _ in rows]
    s1 = [a for _, a, _ in rows]
    s2 = [b for _, _, b in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rounds, s1, "o-", label="generated (phase 1)")
    ax.plot(rounds, s2, "s-", label="kept (phase 2)")
    ax.set_xlabel("experiment number")
    ax.set_ylabel("average candidate experiments")
    ax.set_yscale("log")
    ax.set_xticks(rounds)
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def lengths_plot(lengths: list[int], path: str, title: str) -> None:
    """Histogram of play lengths over the simulated secrets."""
    fig, ax = plt.subplots(figsize=(6, 4))
    lo, hi = min(lengths), max(lengths)
    bins = [b - 0.5 for b in range(lo, hi + 2)]
    ax.hist(lengths, bins=bins, rwidth=0.8, color="#4878a8")
    ax.set_xlabel("experiments to identify the code")
    ax.set_ylabel("secrets")
    ax.set_xticks(range(lo, hi + 1))
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
