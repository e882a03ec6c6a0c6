"""Figures for benchmark sweeps. Uses the Agg backend; nothing is shown."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_rows(rows, path, title=None):
    """Counts (left) and timings (right) against the swept input size."""
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to plot")
    axis = rows[0].axis or "vendor"
    xs = [r.vendor_bits if axis == "vendor" else r.client_bits for r in rows]

    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    left.plot(xs, [r.seal_ops for r in rows], "o-", label="seal ops (provision)")
    left.plot(xs, [r.unseal_ops for r in rows], "s--", label="unseal ops (execute)")
    if any(r.pairs for r in rows):
        left.plot(xs, [r.pairs or 0 for r in rows], "^:", label="OTM label pairs")
    if any(r.gate_count for r in rows):
        left.plot(xs, [r.gate_count or 0 for r in rows], "d-.", label="gates")
    left.set_xscale("log")
    left.set_yscale("symlog")
    left.set_xlabel(f"{axis} input (bits)")
    left.set_ylabel("count")
    left.legend(fontsize=8)

    right.plot(xs, [r.provision_ms for r in rows], "o-", label="provision")
    right.plot(xs, [r.execute_ms for r in rows], "s--", label="execute")
    right.set_xscale("log")
    right.set_yscale("log")
    right.set_xlabel(f"{axis} input (bits)")
    right.set_ylabel("ms (incl. simulated TPM latency)")
    right.legend(fontsize=8)

    for ax in (left, right):
        ax.spines["right"].set_visible(False)
        ax.spines["top"].set_visible(False)
    fig.suptitle(title or f"{rows[0].variant} variant, {axis} sweep")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
