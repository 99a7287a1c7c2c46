"""Corpus report figures rendered next to the exported manifest.

Kept import-light: matplotlib only loads when figures are actually
requested, so plain exports and CLI stats stay fast.
"""

from __future__ import annotations

from pathlib import Path


def render_figures(entries, state_counts: dict[str, int], out_dir: str | Path) -> list[Path]:
    """Duration/word histograms and the lifecycle funnel as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    durations_s = [e.trimmed_duration_ms / 1000 for e in entries]
    word_counts = [len((e.transcript or "").split()) for e in entries]

    if entries:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(durations_s, bins=min(30, max(5, len(durations_s))), color="#4878a8", edgecolor="white")
        ax.set_xlabel("trimmed duration (s)")
        ax.set_ylabel("recordings")
        ax.set_title("Recording durations")
        fig.tight_layout()
        path = out_dir / "durations.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(word_counts, bins=min(30, max(5, len(word_counts))), color="#6aa56a", edgecolor="white")
        ax.set_xlabel("words per recording")
        ax.set_ylabel("recordings")
        ax.set_title("Transcript lengths")
        fig.tight_layout()
        path = out_dir / "word_counts.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    states = list(state_counts)
    counts = [state_counts[s] for s in states]
    ax.bar(range(len(states)), counts, color="#a86048")
    ax.set_xticks(range(len(states)))
    ax.set_xticklabels(states, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("recordings")
    ax.set_title("Lifecycle funnel")
    fig.tight_layout()
    path = out_dir / "lifecycle.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    return written
