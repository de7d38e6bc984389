from .dcml import PredictionBatch, contrastive_kl, dcml_step, kl_divergence
from .fed_prox import fedprox_objective
