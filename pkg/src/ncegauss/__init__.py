"""Desk-scale laboratory for Gaussian structure under the InfoNCE objective."""

from .encoder import (Encoder, EmbeddingBatch, backward, forward,
                      grad_through_normalization, init_encoder, load_encoder,
                      save_encoder)
from .gaussdiag import (AD_THRESHOLD, DiagnosticsReport, anderson_darling,
                        coordinate_report, cv_norms, dagostino_pearson,
                        likelihood_correlation, whiten)
from .hgr import (HgrEstimate, alignment_bound, eta2_binned, eta2_channel,
                  eta2_from_joint, eta2_gaussian)
from .objective import (LossParams, LossReport, alignment_term, entropy_estimate,
                        infonce_grad, infonce_loss, kl_to_gaussian,
                        regularized_objective, surrogate_jq, uniformity_potential)
from .spherestats import (SphereSample, empirical_gauss_distance, project_scaled,
                          sample_uniform_sphere, sample_vmf, tv_rate_bound,
                          vmf_kl_uniform, vmf_mean_resultant)
from .synthdata import (AugmentationChannel, Dataset, Jitter, PairBatch,
                        augment_pair, sample_gmm, sample_laplace,
                        sample_sparse_binary)
from .trainer import (AdamState, TrainConfig, TrainHistory, TrainingDiverged,
                      adam_step, train)

__version__ = "0.1.0"
