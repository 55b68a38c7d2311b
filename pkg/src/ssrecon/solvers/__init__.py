from .cg import CgConfig, CgInfo, ConvergenceWarning, cg_sense, conjugate_gradient, dc_layer, dc_solve
from .cs import DEFAULT_LAMBDA, CsConfig, cs_l1wavelet, cs_objective, soft_threshold
from .deep_decoder import deep_decoder_fit
from .ssdu import SplitPair, SsduConfig, init_ssdu, ssdu_infer, ssdu_loss, ssdu_split, ssdu_train
from .wavelet import wavelet_forward, wavelet_inverse

__all__ = [
    "CgConfig", "CgInfo", "ConvergenceWarning", "cg_sense", "conjugate_gradient", "dc_layer", "dc_solve",
    "DEFAULT_LAMBDA", "CsConfig", "cs_l1wavelet", "cs_objective", "soft_threshold",
    "deep_decoder_fit",
    "SplitPair", "SsduConfig", "init_ssdu", "ssdu_infer", "ssdu_loss", "ssdu_split", "ssdu_train",
    "wavelet_forward", "wavelet_inverse",
]
