"""Full-reference image quality: MSE, PSNR, SSIM (luminance/contrast/
structure), multi-scale SSIM, per-channel histograms with intersection
similarity, and the directory-vs-directory evaluation report."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .images import ImageTensor, load_png, to_unit

# Rec. 601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])

# standard 5-scale exponents; they print as summing to 1.0001, so they are
# normalized to sum exactly 1 at construction
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _gaussian_window(side: int, sigma: float) -> np.ndarray:
    half = (side - 1) / 2.0
    coords = np.arange(side, dtype=np.float64) - half
    g1 = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g1, g1)
    return w / w.sum()


@dataclass(frozen=True)
class SsimParams:
    window_side: int = 11
    window_sigma: float = 1.5
    L: float = 1.0
    ms_weights: tuple[float, ...] = MS_SSIM_WEIGHTS

    def __post_init__(self):
        w = np.asarray(self.ms_weights, dtype=np.float64)
        if w.ndim != 1 or len(w) < 1 or np.any(w <= 0):
            raise ValueError("ms_weights must be a nonempty positive sequence")
        object.__setattr__(self, "ms_weights", tuple(w / w.sum()))

    @property
    def alpha1(self) -> float:
        return (0.01 * self.L) ** 2

    @property
    def alpha2(self) -> float:
        return (0.03 * self.L) ** 2

    @property
    def alpha3(self) -> float:
        return self.alpha2 / 2.0

    @property
    def scales(self) -> int:
        return len(self.ms_weights)

    def window(self) -> np.ndarray:
        return _gaussian_window(self.window_side, self.window_sigma)


def _check_pair(x: ImageTensor, y: ImageTensor) -> None:
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    if x.range_tag != y.range_tag:
        raise ValueError(f"range tags differ: {x.range_tag} vs {y.range_tag}")


def mse(x: ImageTensor, y: ImageTensor) -> float:
    """Mean squared difference over all H*W*C values."""
    _check_pair(x, y)
    d = x.values - y.values
    return float(np.mean(d * d))


def psnr(x: ImageTensor, y: ImageTensor, R: float = 1.0) -> float:
    """10*log10(R^2 / MSE); identical images give math.inf."""
    if R <= 0:
        raise ValueError(f"peak value R must be positive, got {R}")
    err = mse(x, y)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(R * R / err)


def _gray_unit(img: ImageTensor) -> np.ndarray:
    v = to_unit(img).values if img.range_tag is not None else img.values
    if v.shape[2] == 3:
        return v @ _LUMA
    if v.shape[2] == 1:
        return v[:, :, 0]
    raise ValueError(f"expected 1 or 3 channels, got {v.shape[2]}")


def ssim_components(x_window: np.ndarray, y_window: np.ndarray,
                    params: SsimParams = SsimParams(),
                    weights: np.ndarray | None = None
                    ) -> tuple[float, float, float]:
    """Luminance, contrast, and structure ratios of two equal-size windows.

    Moments are weighted by the params' Gaussian window when the inputs have
    that exact size, else uniformly; explicit `weights` override both.
    """
    x = np.asarray(x_window, dtype=np.float64)
    y = np.asarray(y_window, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"window shapes differ: {x.shape} vs {y.shape}")
    if weights is None:
        side = params.window_side
        if x.shape == (side, side):
            weights = params.window()
        else:
            weights = np.full(x.shape, 1.0 / x.size)
    mu_x = float(np.sum(weights * x))
    mu_y = float(np.sum(weights * y))
    var_x = float(np.sum(weights * x * x)) - mu_x ** 2
    var_y = float(np.sum(weights * y * y)) - mu_y ** 2
    cov = float(np.sum(weights * x * y)) - mu_x * mu_y
    a1, a2, a3 = params.alpha1, params.alpha2, params.alpha3
    luminance = (2 * mu_x * mu_y + a1) / (mu_x ** 2 + mu_y ** 2 + a1)
    contrast = (2 * math.sqrt(max(var_x, 0.0)) * math.sqrt(max(var_y, 0.0)) + a2) / (var_x + var_y + a2)
    structure = (cov + a3) / (math.sqrt(max(var_x, 0.0)) * math.sqrt(max(var_y, 0.0)) + a3)
    return luminance, contrast, structure


def _window_moments(x: np.ndarray, y: np.ndarray, window: np.ndarray):
    """Gaussian-weighted moment maps over the valid sliding-window region."""
    half = window.shape[0] // 2

    def corr(a):
        return ndimage.correlate(a, window, mode="constant")[half:-half, half:-half]

    mu_x = corr(x)
    mu_y = corr(y)
    var_x = corr(x * x) - mu_x ** 2
    var_y = corr(y * y) - mu_y ** 2
    cov = corr(x * y) - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov


def _component_maps(x: np.ndarray, y: np.ndarray, params: SsimParams):
    mu_x, mu_y, var_x, var_y, cov = _window_moments(x, y, params.window())
    a1, a2, a3 = params.alpha1, params.alpha2, params.alpha3
    sx = np.sqrt(np.maximum(var_x, 0.0))
    sy = np.sqrt(np.maximum(var_y, 0.0))
    luminance = (2 * mu_x * mu_y + a1) / (mu_x ** 2 + mu_y ** 2 + a1)
    contrast = (2 * sx * sy + a2) / (var_x + var_y + a2)
    structure = (cov + a3) / (sx * sy + a3)
    return luminance, contrast, structure


def ssim(x: ImageTensor, y: ImageTensor, params: SsimParams = SsimParams()) -> float:
    """Mean structural similarity over all stride-1 valid windows of the
    luminance plane (product of the three component ratios per window)."""
    _check_pair(x, y)
    gx, gy = _gray_unit(x), _gray_unit(y)
    if min(gx.shape) < params.window_side:
        raise ValueError(
            f"image {gx.shape} smaller than the {params.window_side}x"
            f"{params.window_side} window"
        )
    luminance, contrast, structure = _component_maps(gx, gy, params)
    return float(np.mean(luminance * contrast * structure))


def _downsample2(a: np.ndarray) -> np.ndarray:
    h, w = a.shape[0] // 2 * 2, a.shape[1] // 2 * 2
    a = a[:h, :w]
    return (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2]) / 4.0


def ms_ssim(x: ImageTensor, y: ImageTensor, params: SsimParams = SsimParams()) -> float:
    """Multi-scale SSIM: per-scale mean contrast and structure raised to the
    scale exponents, times the coarsest-scale mean luminance raised to its
    exponent. Scales are linked by 2x average pooling.

    If the image cannot support the configured scale count, the computation
    falls back to the largest feasible count and warns explicitly.
    """
    _check_pair(x, y)
    gx, gy = _gray_unit(x), _gray_unit(y)
    side = params.window_side
    min_dim = min(gx.shape)
    feasible = int(math.floor(math.log2(min_dim / side))) + 1 if min_dim >= side else 0
    if feasible < 1:
        raise ValueError(f"image {gx.shape} smaller than the analysis window")
    M = params.scales
    weights = params.ms_weights
    if feasible < M:
        warnings.warn(
            f"image {gx.shape} supports only {feasible} of {M} scales; "
            f"falling back to M={feasible} with renormalized exponents",
            stacklevel=2,
        )
        M = feasible
        w = np.asarray(params.ms_weights[:M])
        weights = tuple(w / w.sum())

    result = 1.0
    for j in range(M):
        luminance, contrast, structure = _component_maps(gx, gy, params)
        # a negative mean (anticorrelated content) would make the fractional
        # power undefined; clamp at zero like the reference implementations
        c = max(float(np.mean(contrast)), 0.0)
        s = max(float(np.mean(structure)), 0.0)
        result *= c ** weights[j] * s ** weights[j]
        if j == M - 1:
            result *= max(float(np.mean(luminance)), 0.0) ** weights[j]
        else:
            gx, gy = _downsample2(gx), _downsample2(gy)
    return result


def histogram(x: ImageTensor, bins: int = 256) -> np.ndarray:
    """Per-channel counts, shape (channels, bins); each row sums to H*W."""
    if x.range_tag not in ("unit", "byte"):
        raise ValueError(f"histogram expects unit or byte range, got {x.range_tag!r}")
    v = to_unit(x).clamp().values
    idx = np.minimum((v * bins).astype(np.int64), bins - 1)
    out = np.zeros((x.channels, bins), dtype=np.int64)
    for c in range(x.channels):
        out[c] = np.bincount(idx[:, :, c].ravel(), minlength=bins)
    return out


def histogram_intersection(hx: np.ndarray, hy: np.ndarray) -> float:
    """sum(min)/sum(counts) over all channels and bins; 1.0 iff identical."""
    hx = np.asarray(hx)
    hy = np.asarray(hy)
    if hx.shape != hy.shape:
        raise ValueError(f"histogram shapes differ: {hx.shape} vs {hy.shape}")
    total = hx.sum()
    if total != hy.sum():
        raise ValueError("histograms count different numbers of pixels")
    if total == 0:
        return 1.0
    return float(np.minimum(hx, hy).sum() / total)


def improvement_percent(ours: float, theirs: float) -> float:
    """(ours - theirs)/theirs * 100."""
    if theirs == 0:
        raise ValueError("baseline value is zero")
    return (ours - theirs) / theirs * 100.0


@dataclass
class MetricRow:
    id: str
    method: str
    psnr_db: float
    ssim: float
    ms_ssim: float


@dataclass
class MetricReport:
    rows: list[MetricRow]
    means: dict[str, dict[str, float]]
    improvements: dict[str, dict[str, float]]  # other method -> metric -> %
    reference: str
    inf_psnr_counts: dict[str, int] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    CSV_COLUMNS = ("id", "method", "psnr_db", "ssim", "ms_ssim")

    @staticmethod
    def from_rows(rows: list[MetricRow], reference: str,
                  skipped: list[str] | None = None) -> "MetricReport":
        methods: dict[str, list[MetricRow]] = {}
        for r in rows:
            methods.setdefault(r.method, []).append(r)
        if reference not in methods:
            raise ValueError(f"reference method {reference!r} has no rows")
        means: dict[str, dict[str, float]] = {}
        inf_counts: dict[str, int] = {}
        for m, rs in methods.items():
            finite = [r.psnr_db for r in rs if math.isfinite(r.psnr_db)]
            inf_counts[m] = len(rs) - len(finite)
            means[m] = {
                # inf rows are excluded from the PSNR mean, with a count kept
                "psnr_db": float(np.mean(finite)) if finite else math.inf,
                "ssim": float(np.mean([r.ssim for r in rs])),
                "ms_ssim": float(np.mean([r.ms_ssim for r in rs])),
            }
        improvements = {
            m: {
                metric: improvement_percent(means[reference][metric], means[m][metric])
                for metric in ("psnr_db", "ssim", "ms_ssim")
            }
            for m in methods
            if m != reference
        }
        return MetricReport(rows=rows, means=means, improvements=improvements,
                            reference=reference, inf_psnr_counts=inf_counts,
                            skipped=list(skipped or []))

    def to_json(self, path: Path | str) -> None:
        def fmt(v):
            return "inf" if v == math.inf else v

        doc = {
            "reference": self.reference,
            "per_image": [
                {"id": r.id, "method": r.method, "psnr_db": fmt(r.psnr_db),
                 "ssim": r.ssim, "ms_ssim": r.ms_ssim}
                for r in self.rows
            ],
            "means": self.means,
            "improvement_percent": self.improvements,
            "inf_psnr_excluded": self.inf_psnr_counts,
            "skipped": self.skipped,
        }
        Path(path).write_text(json.dumps(doc, indent=2))

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for r in self.rows:
                p = "inf" if r.psnr_db == math.inf else f"{r.psnr_db:.6f}"
                writer.writerow([r.id, r.method, p, f"{r.ssim:.6f}", f"{r.ms_ssim:.6f}"])
            for m, stats in self.means.items():
                writer.writerow(["<mean>", m, f"{stats['psnr_db']:.6f}",
                                 f"{stats['ssim']:.6f}", f"{stats['ms_ssim']:.6f}"])


def evaluate_directories(gt_dir: Path | str, candidate_dirs: dict[str, Path | str],
                         reference: str | None = None,
                         params: SsimParams = SsimParams()) -> MetricReport:
    """Score every method directory against the ground-truth directory.

    Filenames must match across directories; files missing a counterpart in
    any directory are skipped and listed. Improvement percentages are
    computed for every method against `reference` (first named method by
    default).
    """
    gt_dir = Path(gt_dir)
    if not candidate_dirs:
        raise ValueError("no candidate directories given")
    if reference is None:
        reference = next(iter(candidate_dirs))
    if reference not in candidate_dirs:
        raise ValueError(f"reference {reference!r} not among candidates")

    gt_files = {p.name for p in gt_dir.iterdir() if p.suffix.lower() == ".png"}
    common = set(gt_files)
    for d in candidate_dirs.values():
        common &= {p.name for p in Path(d).iterdir() if p.suffix.lower() == ".png"}
    skipped = sorted(gt_files - common)
    if not common:
        raise ValueError("no filenames common to the ground truth and every method")

    rows = []
    for name in sorted(common):
        gt = load_png(gt_dir / name)
        for method, d in candidate_dirs.items():
            img = load_png(Path(d) / name)
            rows.append(MetricRow(
                id=Path(name).stem,
                method=method,
                psnr_db=psnr(gt, img, R=1.0),
                ssim=ssim(gt, img, params),
                ms_ssim=ms_ssim(gt, img, params),
            ))
    return MetricReport.from_rows(rows, reference=reference, skipped=skipped)
