"""Figures rendered next to the CSV/JSON output of a run."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def new_figure(width=5.0, ncols=1):
    return plt.subplots(ncols=ncols, figsize=(width * ncols, width * GOLDEN))


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_spectrum_table(table, title, path):
    """Bars for the empirical density, lines for every analytic density column."""
    x = np.array([r["x"] for r in table])
    emp = np.array([r["empirical_density"] for r in table])
    width = x[1] - x[0] if x.size > 1 else 1.0
    with plt.rc_context(RC):
        fig, ax = new_figure()
        ax.bar(x, emp, width=width, color="0.8", edgecolor="0.6", linewidth=0.4, label="empirical")
        for key in table[0]:
            if key.endswith("_density") and key != "empirical_density":
                y = np.array([r[key] for r in table])
                ax.plot(x, y, lw=1.2, label=key[: -len("_density")].replace("_", " "))
        top = np.nanmax(emp) if emp.size else 1.0
        ax.set_ylim(0, 1.6 * top)
        ax.set_xlabel("eigenvalue")
        ax.set_ylabel("density")
        ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_theorem_convergence(result, path):
    ns = [c["n"] for c in result.cells]
    med = [c["aggregate"]["arcsine"]["w1"]["median"] for c in result.cells]
    mx = [c["aggregate"]["arcsine"]["w1"]["max"] for c in result.cells]
    with plt.rc_context(RC):
        fig, ax = new_figure()
        ax.loglog(ns, med, "o-", label="median W1")
        ax.loglog(ns, mx, "s--", alpha=0.6, label="max W1")
        ax.set_xlabel("n")
        ax.set_ylabel("W1 to arcsine on [0, 2]")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_conjecture_scan(result, path):
    cs = [c["c"] for c in result.cells]
    arc = [c["aggregate"]["arcsine"]["w1"]["median"] for c in result.cells]
    km = [c["aggregate"].get("kesten-mckay", {}).get("w1", {}).get("median") for c in result.cells]
    m = [np.median([r["km_fit"]["m"] for r in c["replicates"] if r["km_fit"]] or [np.nan])
         for c in result.cells]
    with plt.rc_context(RC):
        fig, (ax0, ax1) = new_figure(ncols=2)
        ax0.semilogy(cs, arc, "o-", label="arcsine")
        ax0.semilogy(cs, [np.nan if v is None else v for v in km], "s-", label="fitted Kesten-McKay")
        ax0.set_xlabel("c = 2p/n")
        ax0.set_ylabel("median W1")
        ax0.legend(frameon=False)
        ax1.plot(cs, m, "o-")
        ax1.set_xlabel("c = 2p/n")
        ax1.set_ylabel("fitted degree m")
        return _save(fig, path)


def render_figures(result, out_dir):
    """Render every figure that applies to ``result.mode``; returns the paths."""
    paths = []
    for name, table in sorted(result.tables.items()):
        if table:
            title = name.replace("hist_", "").replace("_", " ")
            paths.append(plot_spectrum_table(table, title, out_dir / f"{name}.png"))
    if result.mode == "theorem" and result.cells:
        paths.append(plot_theorem_convergence(result, out_dir / "w1_convergence.png"))
    if result.mode == "conjecture" and result.cells:
        paths.append(plot_conjecture_scan(result, out_dir / "conjecture_scan.png"))
    return paths
