"""Report figures rendered to files with matplotlib (Agg backend)."""
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def figure(width=6.0, height=None):
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    if not height:
        height = width * golden_ratio
    fig, ax = plt.subplots(figsize=(width, height), facecolor="w")
    ax.tick_params(labelsize=10)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_r_curve(R, selected_r, path, argmin_r=None):
    fig, ax = figure()
    r = np.arange(len(R))
    positive = np.asarray(R) > 0
    ax.semilogy(r[positive], np.asarray(R)[positive], color="k", lw=1.2, label=r"$R_r$")
    ax.axhline(1.0, color="0.5", lw=0.8, ls=":")
    ax.axvline(selected_r, color="r", ls="--", lw=1.0, label=f"selected r = {selected_r}")
    if argmin_r is not None and argmin_r != selected_r:
        ax.axvline(argmin_r, color="b", ls=":", lw=1.0, label=f"argmin r = {argmin_r}")
    ax.set_xlabel("number of singular vectors r")
    ax.set_ylabel("clutter-to-noise ratio")
    ax.legend(frameon=False, fontsize=9)
    return _save(fig, path)


def plot_spectrum(lam, path):
    fig, ax = figure()
    lam = np.asarray(lam)
    ax.semilogy(np.arange(1, lam.size + 1), np.where(lam > 0, lam, np.nan), color="k", lw=1.0)
    ax.set_xlabel("index j")
    ax.set_ylabel(r"singular value $\lambda_j$")
    return _save(fig, path)


def plot_error_sweep(r_list, errors, path, selected_r=None):
    fig, ax = figure()
    ax.plot(r_list, errors, color="k", lw=1.2)
    i = int(np.argmin(errors))
    ax.plot([r_list[i]], [errors[i]], "o", color="b", ms=4,
            label=f"min d = {errors[i]:.4f} at r = {r_list[i]}")
    if selected_r is not None:
        ax.axvline(selected_r, color="r", ls="--", lw=1.0, label=f"selected r = {selected_r}")
    ax.set_xlabel("truncation rank r")
    ax.set_ylabel("relative error")
    ax.legend(frameon=False, fontsize=9)
    return _save(fig, path)


def plot_images(images, path, ncols=2):
    """Grid of grey-scale images; ``images`` maps titles to 2-D arrays."""
    n = len(images)
    nrows = max(1, math.ceil(n / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 3.2 * nrows), facecolor="w",
                             squeeze=False)
    vals = [np.asarray(v) for v in images.values()]
    vmin = min(float(v.min()) for v in vals)
    vmax = max(float(v.max()) for v in vals)
    for ax, (title, img) in zip(axes.ravel(), images.items()):
        ax.imshow(img, cmap="gray", vmin=vmin, vmax=vmax, origin="lower", interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    for ax in axes.ravel()[n:]:
        ax.axis("off")
    return _save(fig, path)
