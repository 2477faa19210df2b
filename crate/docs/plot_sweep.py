"""Chart mean query counts from `ssar sweep --out FILE` records.

    python docs/plot_sweep.py sweep.jsonl out.png

x axis: reduced rank / gamma^2 (statistical or effective dimension over gamma^2
for ridge-type instances), y axis: mean draws landing on unlabeled rows.
"""

import json
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main(path, out):
    with open(path) as f:
        recs = [json.loads(line) for line in f if line.strip()]
    if not recs:
        sys.exit("no records")
    x = [r["reference"] for r in recs]
    y = [r["mean_queries"] for r in recs]
    se = [r["se_queries"] for r in recs]
    c = sum(a * b for a, b in zip(x, y)) / sum(a * a for a in x)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(x, y, yerr=[3 * s for s in se], fmt="o", capsize=3)
    for r, xi, yi in zip(recs, x, y):
        ax.annotate(f'{r["param"]}={r["value"]:g}', (xi, yi), fontsize=7,
                    textcoords="offset points", xytext=(4, 4))
    xs = [0, max(x) * 1.05]
    ax.plot(xs, [c * v for v in xs], "--", label=f"fit: {c:.3f} R/gamma^2")
    ax.plot(xs, [4 * v for v in xs], ":", label="4 R/gamma^2")
    ax.set_xlabel("reduced rank / gamma^2")
    ax.set_ylabel("mean unlabeled draws")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:3])
