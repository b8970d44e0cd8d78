"""Tracking a piecewise-constant series through abrupt level changes.

Two identical filters watch the same noisy series. One learns its
forgetting coefficient online; the other keeps gamma pinned at 1 and
behaves like a plain recursive least-squares fit. After each level
shift the learner briefly drops gamma, dumps its stale estimate, and
relocks onto the new level, while the frozen filter averages across
segments and falls behind.

Run:  python3 demos/changepoint_tracking.py [--plot out.png]
"""

import argparse

import numpy as np

from kocl.experiments import dips_after_changes, run_series_comparison


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="series noise seed")
    parser.add_argument("--plot", metavar="PATH", help="save a trace figure to PATH")
    args = parser.parse_args()

    comp = run_series_comparison(seed=args.seed)
    learned, fixed = comp.learned, comp.fixed

    print(f"series: {len(comp.ys)} points, {len(comp.change_points)} level changes")
    print(f"  learned forgetting: avg log predictive {learned.final_avg_log_predictive:+.4f}")
    print(f"  frozen gamma = 1:   avg log predictive {fixed.final_avg_log_predictive:+.4f}")

    dips = dips_after_changes(learned.gamma_sq, comp.change_points)
    print("\nreaction to each change point (gamma^2 < 0.9 within 30 steps):")
    for change, dipped in zip(comp.change_points, dips):
        window = learned.gamma_sq[change : change + 30]
        low = float(window.min()) if len(window) else float("nan")
        mark = "forgot" if dipped else "missed"
        print(f"  t={change:>4}  min gamma^2 {low:.3f}  {mark}")

    seg_edges = (0,) + comp.change_points + (len(comp.ys),)
    print("\nper-segment mean absolute prediction error:")
    for lo, hi in zip(seg_edges[:-1], seg_edges[1:]):
        err_l = float(np.mean(np.abs(learned.pred_mean[lo:hi] - comp.ys[lo:hi])))
        err_f = float(np.mean(np.abs(fixed.pred_mean[lo:hi] - comp.ys[lo:hi])))
        print(f"  [{lo:>4}, {hi:>4})  learned {err_l:.3f}  frozen {err_f:.3f}")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (ax_y, ax_g) = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
        t = np.arange(len(comp.ys))
        ax_y.plot(t, comp.ys, ".", ms=2, color="0.7", label="observations")
        ax_y.plot(t, learned.pred_mean, lw=1.2, label="learned forgetting")
        ax_y.plot(t, fixed.pred_mean, lw=1.2, label="frozen gamma = 1")
        ax_y.set_ylabel("level")
        ax_y.legend(loc="upper right")
        ax_g.plot(t, learned.gamma_sq, lw=1.0)
        for c in comp.change_points:
            ax_g.axvline(c, color="r", lw=0.6, alpha=0.5)
        ax_g.set_ylabel("gamma^2")
        ax_g.set_xlabel("step")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"\nfigure saved to {args.plot}")


if __name__ == "__main__":
    main()
