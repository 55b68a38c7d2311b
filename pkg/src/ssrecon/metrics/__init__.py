from .fullref import FeatureExtractor, center_crop, default_extractor, perc_dis, psnr, ssim
from .noref import nrjpeg, piqe
from .report import DIRECTIONS, MetricReport
from .stats import BONFERRONI_ALPHA, significant, wilcoxon_signed_rank

FULL_REFERENCE = {"psnr": psnr, "ssim": ssim, "perc_dis": perc_dis}
NO_REFERENCE = {"nrjpeg": nrjpeg, "piqe": piqe}

__all__ = [
    "FeatureExtractor", "center_crop", "default_extractor", "perc_dis", "psnr", "ssim",
    "nrjpeg", "piqe", "DIRECTIONS", "MetricReport", "BONFERRONI_ALPHA", "significant",
    "wilcoxon_signed_rank", "FULL_REFERENCE", "NO_REFERENCE",
]
