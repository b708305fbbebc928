"""Sparse Bayesian clipped generalised linear models.

Exponential-family geometry, clipping functions, the spike-and-Laplace
complexity prior, compatibility-constant estimation, a trans-dimensional
posterior sampler and a replicated experiment harness.
"""
from .clipping import (ClippingFn, certify_clipping, default_clip, eval_clip, ia_interval,
                       identity, soft_clip_at_pole, soft_clip_upper)
from .expfam import (FAMILIES, ExpFamilyMember, cgf_centered, kl_divergence, log_density,
                     log_partition, make_family, mean_var, sample_one)
from .icgeom import lemma3_check, membership, phi1_estimate, phi_b, phibar0_estimate
from .model import (CglmModel, Dataset, DesignMatrix, SparseCoef, divergence_profile,
                    dn_membership, eta_vector, generate_dataset, log_lik_ratio, make_design)
from .posterior import (ChainSettings, grid_oracle_posterior, marginal_likelihood_mc,
                        posterior_summaries, run_chain)
from .prior import an_rules, build_prior, constants, log_prior_joint, sample_prior, thresholds

__version__ = "0.1.0"
